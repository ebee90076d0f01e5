#pragma once

#include <stdexcept>
#include <string>

namespace wearseg {

/// Binary: wear vs background with a sigmoid head. Multiclass: background,
/// wear A, wear M with a softmax head.
enum class Mode { binary, multiclass };

inline std::string to_string(Mode mode) { return mode == Mode::binary ? "binary" : "multiclass"; }

inline Mode parse_mode(const std::string& text) {
  if (text == "binary") return Mode::binary;
  if (text == "multiclass") return Mode::multiclass;
  throw std::invalid_argument("unknown mode '" + text + "' (binary|multiclass)");
}

/// Output channels of the network head.
inline int head_channels(Mode mode) { return mode == Mode::binary ? 1 : 3; }

}  // namespace wearseg
