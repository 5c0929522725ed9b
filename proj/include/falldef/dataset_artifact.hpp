#pragma once

// Prepared-dataset container written by `falldef prepare`.
//
// The artifact stores the source recordings once and each split as a list of
// window references (segment index, start index, label), which keeps the file
// small despite the heavy overlap of stride-1 windows. Layout (JSON):
//
//   {
//     "format": "falldef-dataset", "format_version": 1,
//     "manifest": {config echo, seeds, counts per class per split},
//     "window": {"window_size", "fall_point_threshold", "stride"},
//     "segments": [{"id", "origin": "train"|"test", "t": [...]|null,
//                   "ax": [...], "ay": [...], "az": [...], "label": [0|1, ...]}],
//     "splits": {"train": [[seg, start, label], ...], "val": [...], "test": [...]}
//   }

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "falldef/dataset.hpp"

namespace falldef {

inline constexpr int kDatasetFormatVersion = 1;

struct WindowRef {
  std::size_t segment = 0;
  std::size_t start = 0;
  Label label = Label::NonFall;
  bool operator==(const WindowRef&) const = default;
};

struct PreparedDataset {
  WindowConfig window;
  std::vector<Segment> segments;
  std::vector<std::string> origins;  // parallel to segments
  std::map<std::string, std::vector<WindowRef>> splits;
  std::string manifest;  // JSON object text

  std::vector<WindowInstance> materialize(const std::string& split) const;
};

struct PrepareConfig {
  WindowConfig window;
  double val_fraction = 0.10;
  bool balance = true;
  std::uint64_t seed = 0;
};

/// Windows the training recordings, balances them by downsampling, carves
/// the stratified validation split and windows the test recordings.
/// `config_echo` (JSON object text, may be empty) is copied into the manifest.
PreparedDataset prepare_dataset(std::vector<Segment> train_segments,
                                std::vector<Segment> test_segments, const PrepareConfig& cfg,
                                const std::string& config_echo = {});

std::string serialize_dataset(const PreparedDataset& ds);
PreparedDataset deserialize_dataset(const std::string& text);
void save_dataset(const PreparedDataset& ds, const std::filesystem::path& path);
PreparedDataset load_dataset(const std::filesystem::path& path);

}  // namespace falldef
