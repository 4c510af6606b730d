#include "handformer/pose/pose_sequence.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "handformer/error.hpp"
#include "text_format.hpp"

namespace handformer::pose {

namespace {

using detail::format_double;
using detail::parse_double;
using detail::parse_size;

const char* const kJointNames[kFullJoints] = {
    "wrist",      "thumb_cmc",  "thumb_mcp",  "thumb_ip",   "thumb_tip",  "index_mcp",
    "index_pip",  "index_dip",  "index_tip",  "middle_mcp", "middle_pip", "middle_dip",
    "middle_tip", "ring_mcp",   "ring_pip",   "ring_dip",   "ring_tip",   "pinky_mcp",
    "pinky_pip",  "pinky_dip",  "pinky_tip"};

JointLayout layout_from_sources(const std::vector<std::size_t>& sources) {
  JointLayout layout;
  layout.source = sources;
  for (std::size_t s : sources) layout.names.emplace_back(kJointNames[s]);
  auto position_of = [&](std::size_t source) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i] == source) return i;
    }
    return std::nullopt;
  };
  layout.wrist = 0;
  layout.index_ref = position_of(5);
  if (!layout.index_ref) layout.index_ref = position_of(8);
  layout.pinky_ref = position_of(17);
  if (!layout.pinky_ref) layout.pinky_ref = position_of(20);
  return layout;
}

// Reads `KEY=value` and returns value, or fails with a malformed-header error.
std::string_view header_field(std::string_view token, std::string_view key) {
  if (token.size() <= key.size() + 1 || token.substr(0, key.size()) != key ||
      token[key.size()] != '=') {
    fail(ErrorCode::kMalformedHeader,
         "malformed POSE header: expected " + std::string(key) + "=<value>, got '" +
             std::string(token) + "'");
  }
  return token.substr(key.size() + 1);
}

}  // namespace

JointLayout JointLayout::full() {
  std::vector<std::size_t> all(kFullJoints);
  for (std::size_t i = 0; i < kFullJoints; ++i) all[i] = i;
  return layout_from_sources(all);
}

JointLayout JointLayout::for_count(std::size_t joints) {
  if (joints == kFullJoints) return full();
  if (joints == 11) return layout_from_sources({0, 2, 3, 4, 5, 6, 7, 8, 12, 16, 20});
  const std::vector<std::size_t> six = {0, 4, 8, 12, 16, 20};
  require(joints <= six.size(), ErrorCode::kInvalidArgument,
          "unsupported joint count " + std::to_string(joints) + " (use 21, 11, or <= 6)");
  return layout_from_sources(std::vector<std::size_t>(six.begin(), six.begin() + joints));
}

PoseSequence::PoseSequence(std::size_t frames, std::size_t joints, std::size_t coords, double fps)
    : PoseSequence(frames, JointLayout::for_count(joints), coords, fps) {}

PoseSequence::PoseSequence(std::size_t frames, JointLayout layout, std::size_t coords, double fps)
    : frames_(frames), coords_(coords), fps_(fps), layout_(std::move(layout)) {
  require(coords_ == 2 || coords_ == 3, ErrorCode::kInvalidArgument,
          "coordinate dimension must be 2 or 3");
  require(fps_ > 0 && std::isfinite(fps_), ErrorCode::kInvalidArgument, "fps must be positive");
  values_.assign(frames_ * frame_stride(), 0.0);
}

std::string format_pose_sequence(const PoseSequence& seq) {
  std::string out = "POSE v1 J=" + std::to_string(seq.joints()) + " C=" +
                    std::to_string(seq.coords()) + " FPS=" + format_double(seq.fps()) +
                    " HANDS=2 FRAMES=" + std::to_string(seq.frames()) + "\n";
  const std::size_t stride = seq.frame_stride();
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    const double* row = seq.frame_data(t);
    for (std::size_t i = 0; i < stride; ++i) {
      require(std::isfinite(row[i]), ErrorCode::kNonFinite,
              "refusing to write non-finite coordinate at frame " + std::to_string(t));
      if (i) out += ' ';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

void save_pose_sequence(const PoseSequence& seq, const std::filesystem::path& path) {
  const std::string text = format_pose_sequence(seq);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

PoseSequence parse_pose_sequence(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorCode::kMalformedHeader,
          "malformed POSE header: empty input");
  std::istringstream hs(header);
  std::vector<std::string> tokens;
  for (std::string tok; hs >> tok;) tokens.push_back(tok);
  require(tokens.size() == 7 && tokens[0] == "POSE" && tokens[1] == "v1",
          ErrorCode::kMalformedHeader, "malformed POSE header: '" + header + "'");
  std::size_t joints = 0, coords = 0, hands = 0, frames = 0;
  double fps = 0;
  if (!parse_size(header_field(tokens[2], "J"), joints) ||
      !parse_size(header_field(tokens[3], "C"), coords) ||
      !parse_double(header_field(tokens[4], "FPS"), fps) ||
      !parse_size(header_field(tokens[5], "HANDS"), hands) ||
      !parse_size(header_field(tokens[6], "FRAMES"), frames)) {
    fail(ErrorCode::kMalformedHeader, "malformed POSE header: '" + header + "'");
  }
  require(hands == kHands, ErrorCode::kMalformedHeader, "POSE header must declare HANDS=2");
  require(coords == 2 || coords == 3, ErrorCode::kMalformedHeader, "POSE header C must be 2 or 3");
  require(joints >= 1 && joints <= kFullJoints, ErrorCode::kMalformedHeader,
          "POSE header J out of range");
  require(frames >= 2, ErrorCode::kMalformedHeader, "POSE sequences need at least 2 frames");
  require(fps > 0 && std::isfinite(fps), ErrorCode::kMalformedHeader, "POSE header FPS must be positive");

  PoseSequence seq(frames, joints, coords, fps);
  const std::size_t stride = seq.frame_stride();
  std::string line;
  for (std::size_t t = 0; t < frames; ++t) {
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::kExtentMismatch,
            "extent mismatch: header declares " + std::to_string(frames) + " frames, found " +
                std::to_string(t));
    double* row = seq.frame_data(t);
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
      if (pos >= line.size()) break;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
      double v = 0;
      require(parse_double(std::string_view(line).substr(pos, end - pos), v),
              ErrorCode::kMalformedHeader,
              "unparseable value at frame " + std::to_string(t));
      if (count < stride) row[count] = v;
      ++count;
      require(std::isfinite(v), ErrorCode::kNonFinite,
              "non-finite value at frame " + std::to_string(t) + ", entry " +
                  std::to_string(count - 1));
      pos = end;
    }
    require(count == stride, ErrorCode::kExtentMismatch,
            "extent mismatch at frame " + std::to_string(t) + ": expected " +
                std::to_string(stride) + " values (2 x " + std::to_string(joints) + " x " +
                std::to_string(coords) + "), found " + std::to_string(count));
  }
  while (std::getline(in, line)) {
    require(line.find_first_not_of(" \t\r") == std::string::npos, ErrorCode::kExtentMismatch,
            "extent mismatch: more frame rows than the header declares");
  }
  return seq;
}

PoseSequence load_pose_sequence(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_pose_sequence(buffer.str());
}

PoseSequence interpolate_sequence(const PoseSequence& seq, std::size_t target_frames) {
  require(seq.frames() >= 2, ErrorCode::kInvalidArgument, "interpolation needs at least 2 frames");
  require(target_frames >= 2, ErrorCode::kInvalidArgument, "interpolation target must be >= 2 frames");
  PoseSequence out(target_frames, seq.layout(), seq.coords(), seq.fps());
  out.hand_observed = seq.hand_observed;
  const std::size_t stride = seq.frame_stride();
  const double last = static_cast<double>(seq.frames() - 1);
  for (std::size_t t = 0; t < target_frames; ++t) {
    const double position = static_cast<double>(t) * last / static_cast<double>(target_frames - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(position));
    double frac = position - static_cast<double>(lo);
    if (lo >= seq.frames() - 1) {
      lo = seq.frames() - 1;
      frac = 0.0;
    }
    const double* a = seq.frame_data(lo);
    double* dst = out.frame_data(t);
    if (frac == 0.0) {
      std::copy(a, a + stride, dst);
      continue;
    }
    const double* b = seq.frame_data(lo + 1);
    for (std::size_t i = 0; i < stride; ++i) dst[i] = a[i] + frac * (b[i] - a[i]);
  }
  return out;
}

PoseSequence select_joints(const PoseSequence& seq, const JointLayout& layout) {
  for (std::size_t s : layout.source) {
    require(s < seq.joints(), ErrorCode::kInvalidArgument,
            "joint subset references joint " + std::to_string(s) + " of a " +
                std::to_string(seq.joints()) + "-joint sequence");
  }
  // The result's layout keeps indices into the 21-joint layout.
  JointLayout kept = layout;
  for (std::size_t j = 0; j < kept.size(); ++j) kept.source[j] = seq.layout().source[layout.source[j]];
  PoseSequence out(seq.frames(), kept, seq.coords(), seq.fps());
  out.hand_observed = seq.hand_observed;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t h = 0; h < kHands; ++h) {
      for (std::size_t j = 0; j < layout.size(); ++j) {
        for (std::size_t c = 0; c < seq.coords(); ++c) {
          out.at(t, h, j, c) = seq.at(t, h, layout.source[j], c);
        }
      }
    }
  }
  return out;
}

PoseSequence make_wrist_relative(const PoseSequence& seq) {
  PoseSequence out = seq;
  const std::size_t wrist = seq.layout().wrist;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    for (std::size_t h = 0; h < kHands; ++h) {
      for (std::size_t j = 0; j < seq.joints(); ++j) {
        for (std::size_t c = 0; c < seq.coords(); ++c) {
          out.at(t, h, j, c) = seq.at(t, h, j, c) - seq.at(t, h, wrist, c);
        }
      }
    }
  }
  return out;
}

PoseSequence fill_missing_hands(const PoseSequence& seq) {
  PoseSequence out = seq;
  const std::size_t block = seq.joints() * seq.coords();
  for (std::size_t h = 0; h < kHands; ++h) {
    auto hand_ptr = [&](PoseSequence& s, std::size_t t) { return s.frame_data(t) + h * block; };
    auto is_missing = [&](std::size_t t) {
      const double* p = seq.frame_data(t) + h * block;
      for (std::size_t i = 0; i < block; ++i) {
        if (p[i] != 0.0) return false;
      }
      return true;
    };
    std::optional<std::size_t> first_valid;
    for (std::size_t t = 0; t < seq.frames() && !first_valid; ++t) {
      if (!is_missing(t)) first_valid = t;
    }
    if (!first_valid) {
      out.hand_observed[h] = false;
      continue;
    }
    std::size_t last_valid = *first_valid;
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      if (!is_missing(t)) {
        last_valid = t;
        continue;
      }
      const std::size_t src = t < *first_valid ? *first_valid : last_valid;
      const double* from = seq.frame_data(src) + h * block;
      std::copy(from, from + block, hand_ptr(out, t));
    }
  }
  return out;
}

}  // namespace handformer::pose
