#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "handformer/pose/segment.hpp"

namespace handformer::pose {

// FEAT v1 text format: header `FEAT v1 D=<d>` then `<frame_index> <d reals>`.
struct FeatureFile {
  std::size_t dim = 0;
  FrameFeatureMap features;
};

FeatureFile parse_feature_file(const std::string& text);
std::string format_feature_file(const FeatureFile& file);
FeatureFile load_feature_file(const std::filesystem::path& path);
void save_feature_file(const FeatureFile& file, const std::filesystem::path& path);

// Label lines: `<sample_id> <action> <verb> <object>`.
struct LabelRecord {
  std::string sample_id;
  ActionLabels labels;
};

std::vector<LabelRecord> parse_labels(const std::string& text);
std::string format_labels(const std::vector<LabelRecord>& records);
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);
void save_labels(const std::vector<LabelRecord>& records, const std::filesystem::path& path);

// Dataset directory: dataset.txt (`DATASET v1 VERBS=<v> OBJECTS=<o> SAMPLES=<n>`),
// labels.txt, and per sample <id>.pose, <id>.feat and optionally <id>.crop.feat.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace handformer::pose
