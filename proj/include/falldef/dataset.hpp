#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "falldef/label.hpp"
#include "falldef/norm_stats.hpp"
#include "falldef/numerics.hpp"

namespace falldef {

inline constexpr std::size_t kAccelChannels = 3;

struct Sample {
  std::optional<double> t;
  double ax = 0.0, ay = 0.0, az = 0.0;
  std::optional<Label> point_label;
};

/// One contiguous recording. Windows never cross segment boundaries.
struct Segment {
  std::string id;
  std::vector<Sample> samples;
};

struct WindowConfig {
  std::size_t window_size = 40;
  std::size_t fall_point_threshold = 25;
  std::size_t stride = 1;

  void validate() const;
};

struct WindowSource {
  std::string segment_id;
  std::size_t start = 0;
  bool operator==(const WindowSource&) const = default;
};

struct WindowInstance {
  Matrix values;  // window_size x 3, columns ax, ay, az
  Label label = Label::NonFall;
  WindowSource source;
  bool operator==(const WindowInstance&) const = default;
};

// ---------------------------------------------------------------------------
// CSV ingestion

/// A column chosen by header name or zero-based index; monostate = absent.
using ColumnRef = std::variant<std::monostate, std::string, std::size_t>;

struct CsvSchema {
  char delimiter = ',';
  bool has_header = true;
  ColumnRef t = std::string("t");
  ColumnRef ax = std::string("ax");
  ColumnRef ay = std::string("ay");
  ColumnRef az = std::string("az");
  ColumnRef label = std::string("label");
  /// A change of value in this column starts a new segment.
  ColumnRef segment;
  std::map<std::string, Label> label_encoding{{"0", Label::NonFall}, {"1", Label::Fall}};

  /// Header "t,ax,ay,az,label", labels 0/1, one segment per file.
  static CsvSchema canonical() { return {}; }
  void validate() const;
};

/// Parses delimiter-separated text. `source_name` is used for error messages
/// and as the segment id when no segment column is configured.
std::vector<Segment> parse_csv(std::istream& in, const CsvSchema& schema,
                               const std::string& source_name = "input");
std::vector<Segment> parse_csv_file(const std::filesystem::path& path, const CsvSchema& schema);

/// Parses "Fall=1,ADL=0" into a label encoding.
std::map<std::string, Label> parse_label_encoding(const std::string& spec);

// ---------------------------------------------------------------------------
// Windowing, balancing, splitting

/// Number of windows make_windows yields for a segment of n samples.
std::size_t window_count(std::size_t n, const WindowConfig& cfg);

/// Windows start at 0, stride, 2*stride, ... and the last start index is
/// n - window_size - 1, so stride 1 yields n - window_size windows. A window
/// is labeled fall iff at least fall_point_threshold of its points are fall.
std::vector<WindowInstance> make_windows(const Segment& segment, const WindowConfig& cfg);

/// Keeps every minority-class instance and draws the same number from the
/// majority class uniformly without replacement; output order is a seeded
/// shuffle.
std::vector<WindowInstance> balance_downsample(std::vector<WindowInstance> instances, Rng& rng);

struct ValidationSplit {
  std::vector<WindowInstance> train;
  std::vector<WindowInstance> val;
};

/// Stratified split with |val| = round(fraction * n).
ValidationSplit split_validation(std::vector<WindowInstance> instances, double fraction, Rng& rng);

/// Per-class validation counts used by split_validation (fall, non-fall).
std::pair<std::size_t, std::size_t> stratified_val_counts(std::size_t n_fall, std::size_t n_non_fall,
                                                          double fraction);

NormStats compute_norm_stats(std::span<const WindowInstance> train);
Matrix apply_norm(const NormStats& stats, const Matrix& window);
WindowInstance apply_norm(const NormStats& stats, WindowInstance window);

struct ClassCounts {
  std::size_t fall = 0;
  std::size_t non_fall = 0;
  std::size_t total() const { return fall + non_fall; }
};
ClassCounts count_labels(std::span<const WindowInstance> instances);

}  // namespace falldef
