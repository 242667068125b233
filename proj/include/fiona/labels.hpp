#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fiona/error.hpp"

namespace fiona {

enum class Label : std::uint8_t { bonafide = 0, deepfake = 1 };

inline std::string_view to_string(Label l) { return l == Label::bonafide ? "bonafide" : "deepfake"; }

inline Label parse_label(std::string_view s) {
  if (s == "bonafide") return Label::bonafide;
  if (s == "deepfake") return Label::deepfake;
  throw DataError("unknown label '" + std::string(s) + "' (expected bonafide|deepfake)");
}

inline Label label_from_int(int v) {
  if (v == 0) return Label::bonafide;
  if (v == 1) return Label::deepfake;
  throw DataError("label " + std::to_string(v) + " outside {0, 1}");
}

inline int to_int(Label l) { return static_cast<int>(l); }

}  // namespace fiona
