#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace falldef {

/// Class labels. The enum value is the code used in data files
/// (0 = non-fall, 1 = fall).
enum class Label : std::uint8_t { NonFall = 0, Fall = 1 };

inline constexpr int code_of(Label l) { return static_cast<int>(l); }

/// Row of the network output for a class: the head emits (fall, non-fall).
inline constexpr std::size_t index_of(Label l) { return l == Label::Fall ? 0 : 1; }

inline constexpr std::string_view to_string(Label l) {
  return l == Label::Fall ? "fall" : "non-fall";
}

}  // namespace falldef
