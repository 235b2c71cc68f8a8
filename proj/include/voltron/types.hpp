#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "voltron/error.hpp"

namespace voltron {

enum class Label { benign, malware, unknown, indefinite };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::benign: return "benign";
    case Label::malware: return "malware";
    case Label::unknown: return "unknown";
    case Label::indefinite: return "indefinite";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "benign") return Label::benign;
  if (s == "malware") return Label::malware;
  if (s == "unknown") return Label::unknown;
  if (s == "indefinite") return Label::indefinite;
  return std::nullopt;
}

inline bool is_definite(Label l) { return l == Label::benign || l == Label::malware; }

/// True for a calendar-valid YYYY-MM-DD string.
inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  const int y = std::stoi(std::string(s.substr(0, 4)));
  const unsigned m = static_cast<unsigned>(std::stoi(std::string(s.substr(5, 2))));
  const unsigned d = static_cast<unsigned>(std::stoi(std::string(s.substr(8, 2))));
  return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m},
                                     std::chrono::day{d}}
      .ok();
}

}  // namespace voltron
