#pragma once

#include <vector>

namespace falldef {

/// Per-channel z-score statistics. When `enabled` is false normalization is
/// the identity and mean/std are ignored.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  bool enabled = false;

  static NormStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0), false};
  }

  bool operator==(const NormStats&) const = default;
};

}  // namespace falldef
