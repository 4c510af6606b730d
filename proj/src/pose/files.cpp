#include "handformer/pose/files.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "handformer/error.hpp"
#include "text_format.hpp"

namespace handformer::pose {

using detail::format_double;
using detail::parse_double;
using detail::parse_size;
using detail::split_whitespace;

void validate_labels(const ActionLabels& labels, const LabelSpace& space) {
  require(labels.verb < space.verbs && labels.object < space.objects &&
              labels.action < space.actions(),
          ErrorCode::kInvalidArgument, "label outside the configured class counts");
  require(labels.action == space.compose(labels.verb, labels.object), ErrorCode::kInvalidArgument,
          "action label " + std::to_string(labels.action) + " does not match (verb " +
              std::to_string(labels.verb) + ", object " + std::to_string(labels.object) + ")");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

FeatureFile parse_feature_file(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kMalformedHeader,
          "malformed FEAT header: empty input");
  const auto head = split_whitespace(line);
  FeatureFile file;
  require(head.size() == 3 && head[0] == "FEAT" && head[1] == "v1" &&
              head[2].substr(0, 2) == "D=" && parse_size(head[2].substr(2), file.dim) &&
              file.dim > 0,
          ErrorCode::kMalformedHeader, "malformed FEAT header: '" + line + "'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    require(tokens.size() == file.dim + 1, ErrorCode::kExtentMismatch,
            "FEAT line " + std::to_string(line_no) + " has " + std::to_string(tokens.size() - 1) +
                " values, header declares D=" + std::to_string(file.dim));
    std::size_t index = 0;
    require(parse_size(tokens[0], index), ErrorCode::kMalformedHeader,
            "FEAT line " + std::to_string(line_no) + ": bad frame index");
    std::vector<double> values(file.dim);
    for (std::size_t i = 0; i < file.dim; ++i) {
      require(parse_double(tokens[i + 1], values[i]), ErrorCode::kMalformedHeader,
              "FEAT line " + std::to_string(line_no) + ": bad number '" +
                  std::string(tokens[i + 1]) + "'");
      require(std::isfinite(values[i]), ErrorCode::kNonFinite,
              "FEAT line " + std::to_string(line_no) + ": non-finite value");
    }
    require(file.features.emplace(index, std::move(values)).second, ErrorCode::kMalformedHeader,
            "FEAT frame index " + std::to_string(index) + " repeated");
  }
  return file;
}

std::string format_feature_file(const FeatureFile& file) {
  std::string out = "FEAT v1 D=" + std::to_string(file.dim) + "\n";
  for (const auto& [index, values] : file.features) {
    require(values.size() == file.dim, ErrorCode::kExtentMismatch,
            "feature for frame " + std::to_string(index) + " has wrong dimension");
    out += std::to_string(index);
    for (double v : values) {
      require(std::isfinite(v), ErrorCode::kNonFinite, "refusing to write non-finite feature");
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

FeatureFile load_feature_file(const std::filesystem::path& path) {
  return parse_feature_file(read_text_file(path));
}

void save_feature_file(const FeatureFile& file, const std::filesystem::path& path) {
  write_text_file(path, format_feature_file(file));
}

std::vector<LabelRecord> parse_labels(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<LabelRecord> records;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    LabelRecord r;
    require(tokens.size() == 4 && parse_size(tokens[1], r.labels.action) &&
                parse_size(tokens[2], r.labels.verb) && parse_size(tokens[3], r.labels.object),
            ErrorCode::kMalformedHeader,
            "label line " + std::to_string(line_no) + " must be '<id> <action> <verb> <object>'");
    r.sample_id = std::string(tokens[0]);
    records.push_back(std::move(r));
  }
  return records;
}

std::string format_labels(const std::vector<LabelRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.sample_id + ' ' + std::to_string(r.labels.action) + ' ' +
           std::to_string(r.labels.verb) + ' ' + std::to_string(r.labels.object) + '\n';
  }
  return out;
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
  return parse_labels(read_text_file(path));
}

void save_labels(const std::vector<LabelRecord>& records, const std::filesystem::path& path) {
  write_text_file(path, format_labels(records));
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<LabelRecord> records;
  for (const auto& s : data.samples) {
    save_pose_sequence(s.pose, dir / (s.id + ".pose"));
    auto dim_of = [](const FrameFeatureMap& m) { return m.empty() ? 0 : m.begin()->second.size(); };
    if (!s.frame_features.empty()) {
      save_feature_file({dim_of(s.frame_features), s.frame_features}, dir / (s.id + ".feat"));
    }
    if (!s.crop_features.empty()) {
      save_feature_file({dim_of(s.crop_features), s.crop_features}, dir / (s.id + ".crop.feat"));
    }
    records.push_back({s.id, s.labels});
  }
  save_labels(records, dir / "labels.txt");
  write_text_file(dir / "dataset.txt", "DATASET v1 VERBS=" + std::to_string(data.label_space.verbs) +
                                           " OBJECTS=" + std::to_string(data.label_space.objects) +
                                           " SAMPLES=" + std::to_string(data.samples.size()) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const std::string manifest = read_text_file(dir / "dataset.txt");
  const std::string first_line = manifest.substr(0, manifest.find('\n'));
  const auto tokens = split_whitespace(first_line);
  Dataset data;
  std::size_t count = 0;
  auto field = [&](std::size_t i, std::string_view key, std::size_t& out) {
    return tokens.size() > i && tokens[i].substr(0, key.size()) == key &&
           parse_size(tokens[i].substr(key.size()), out);
  };
  require(tokens.size() == 5 && tokens[0] == "DATASET" && tokens[1] == "v1" &&
              field(2, "VERBS=", data.label_space.verbs) &&
              field(3, "OBJECTS=", data.label_space.objects) && field(4, "SAMPLES=", count),
          ErrorCode::kMalformedHeader, "malformed dataset manifest in " + dir.string());
  const auto records = load_labels(dir / "labels.txt");
  require(records.size() == count, ErrorCode::kExtentMismatch,
          "dataset declares " + std::to_string(count) + " samples, labels.txt has " +
              std::to_string(records.size()));
  std::set<std::string> seen;
  for (const auto& r : records) {
    require(seen.insert(r.sample_id).second, ErrorCode::kMalformedHeader,
            "duplicate sample id " + r.sample_id);
    validate_labels(r.labels, data.label_space);
    SegmentSample s;
    s.id = r.sample_id;
    s.labels = r.labels;
    s.pose = load_pose_sequence(dir / (s.id + ".pose"));
    if (std::filesystem::exists(dir / (s.id + ".feat"))) {
      s.frame_features = load_feature_file(dir / (s.id + ".feat")).features;
    }
    if (std::filesystem::exists(dir / (s.id + ".crop.feat"))) {
      s.crop_features = load_feature_file(dir / (s.id + ".crop.feat")).features;
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace handformer::pose
