#include "handformer/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "handformer/error.hpp"
#include "handformer/model/handformer.hpp"

namespace handformer::train {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::string velocity_name(const std::string& param) { return std::string(kOptimizerSection) + ".velocity." + param; }

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

nn::Shape parse_shape(const std::string& text) {
  nn::Shape shape;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('x', start), text.size());
    shape.push_back(std::stoul(text.substr(start, end - start)));
    start = end + 1;
  }
  return shape;
}

std::string shape_text(const nn::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

std::string field(const std::string& token, const std::string& key) {
  require(token.rfind(key + "=", 0) == 0, ErrorCode::kMalformedHeader,
          "checkpoint manifest: expected " + key + "=, got '" + token + "'");
  return token.substr(key.size() + 1);
}

}  // namespace

Checkpoint make_checkpoint(const nn::ParameterSet<float>& params,
                           const nn::OptimizerState<float>* optimizer,
                           std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const nn::Parameter<float>* p : params) {
    require(ckpt.tensors.emplace(p->name, p->value).second, ErrorCode::kInvalidArgument,
            "duplicate parameter name " + p->name);
  }
  if (optimizer) {
    require(optimizer->velocity.size() == params.size(), ErrorCode::kShapeMismatch,
            "optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.tensors.emplace(velocity_name(params[i]->name), optimizer->velocity[i]);
    }
    ckpt.meta["optimizer.lr"] = format_real(optimizer->lr);
    ckpt.meta["optimizer.momentum"] = format_real(optimizer->momentum);
    ckpt.meta["optimizer.last_epoch"] = std::to_string(optimizer->last_epoch);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string manifest = "HFCK 1\n";
  for (const auto& [key, value] : ckpt.meta) {
    require(key.find_first_of(" =\n") == std::string::npos && value.find('\n') == std::string::npos,
            ErrorCode::kInvalidArgument, "checkpoint meta key/value not representable: " + key);
    manifest += "meta " + key + "=" + value + "\n";
  }
  std::size_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    manifest += "tensor " + name + " " + model::parameter_section(name) +
                " dtype=f32 shape=" + shape_text(tensor.shape()) + " offset=" +
                std::to_string(offset) + " count=" + std::to_string(tensor.size()) + "\n";
    offset += tensor.size() * sizeof(float);
  }
  manifest += "data_bytes " + std::to_string(offset) + "\nEND\n";
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << manifest;
  for (const auto& [name, tensor] : ckpt.tensors) {
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint " + path.string());
  std::string line;
  require(std::getline(in, line) && line == "HFCK 1", ErrorCode::kMalformedHeader,
          "not a version-1 checkpoint: " + path.string());
  struct Entry {
    std::string name;
    nn::Shape shape;
    std::size_t offset, count;
  };
  std::vector<Entry> entries;
  Checkpoint ckpt;
  std::size_t data_bytes = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "END") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string rest = line.substr(5);
      const std::size_t eq = rest.find('=');
      require(eq != std::string::npos, ErrorCode::kMalformedHeader, "checkpoint manifest: bad meta line");
      ckpt.meta[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (kind == "tensor") {
      std::string name, section, dtype, shape, offset, count;
      ls >> name >> section >> dtype >> shape >> offset >> count;
      require(field(dtype, "dtype") == "f32", ErrorCode::kMalformedHeader,
              "checkpoint tensor " + name + " has unsupported dtype");
      Entry e{name, parse_shape(field(shape, "shape")), std::stoul(field(offset, "offset")),
              std::stoul(field(count, "count"))};
      require(nn::shape_size(e.shape) == e.count, ErrorCode::kExtentMismatch,
              "checkpoint tensor " + name + ": shape does not match count");
      entries.push_back(std::move(e));
    } else if (kind == "data_bytes") {
      ls >> data_bytes;
    } else {
      fail(ErrorCode::kMalformedHeader, "checkpoint manifest: unknown line '" + line + "'");
    }
  }
  require(ended, ErrorCode::kMalformedHeader, "checkpoint manifest lacks END");
  std::vector<char> blob(data_bytes);
  in.read(blob.data(), static_cast<std::streamsize>(data_bytes));
  require(static_cast<std::size_t>(in.gcount()) == data_bytes, ErrorCode::kExtentMismatch,
          "checkpoint data is truncated");
  for (const Entry& e : entries) {
    require(e.offset + e.count * sizeof(float) <= data_bytes, ErrorCode::kExtentMismatch,
            "checkpoint tensor " + e.name + " points past the data");
    nn::Tensor<float> t(e.shape);
    std::memcpy(t.data(), blob.data() + e.offset, e.count * sizeof(float));
    ckpt.tensors.emplace(e.name, std::move(t));
  }
  return ckpt;
}

std::size_t load_parameters(const Checkpoint& ckpt, const nn::ParameterSet<float>& params,
                            const std::optional<std::set<std::string>>& sections) {
  std::size_t loaded = 0;
  for (nn::Parameter<float>* p : params) {
    if (sections && !sections->count(model::parameter_section(p->name))) continue;
    auto it = ckpt.tensors.find(p->name);
    require(it != ckpt.tensors.end(), ErrorCode::kShapeMismatch,
            "checkpoint has no tensor for parameter " + p->name);
    require(it->second.shape() == p->value.shape(), ErrorCode::kShapeMismatch,
            "checkpoint tensor " + p->name + " has shape " + nn::shape_string(it->second.shape()) +
                ", model expects " + nn::shape_string(p->value.shape()));
    p->value = it->second;
    ++loaded;
  }
  if (sections) {
    require(loaded > 0, ErrorCode::kShapeMismatch, "checkpoint sections matched no model parameters");
  }
  return loaded;
}

void load_optimizer(const Checkpoint& ckpt, const nn::ParameterSet<float>& params,
                    nn::OptimizerState<float>& state) {
  state = nn::OptimizerState<float>::for_parameters(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = ckpt.tensors.find(velocity_name(params[i]->name));
    require(it != ckpt.tensors.end() && it->second.shape() == params[i]->value.shape(),
            ErrorCode::kShapeMismatch, "checkpoint lacks optimizer state for " + params[i]->name);
    state.velocity[i] = it->second;
  }
  auto meta = [&](const std::string& key) {
    auto it = ckpt.meta.find(key);
    require(it != ckpt.meta.end(), ErrorCode::kMalformedHeader, "checkpoint lacks meta " + key);
    return it->second;
  };
  state.lr = std::stod(meta("optimizer.lr"));
  state.momentum = std::stod(meta("optimizer.momentum"));
  state.last_epoch = std::stoi(meta("optimizer.last_epoch"));
}

}  // namespace handformer::train
