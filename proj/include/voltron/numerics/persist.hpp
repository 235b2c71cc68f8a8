#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voltron/numerics/params.hpp"

namespace voltron::num {

enum class ParamEncoding { decimal, base64 };

inline std::string_view to_string(ParamEncoding e) {
  return e == ParamEncoding::decimal ? "decimal" : "base64";
}

inline ParamEncoding parse_param_encoding(std::string_view s) {
  if (s == "decimal") return ParamEncoding::decimal;
  if (s == "base64") return ParamEncoding::base64;
  throw ParseError("unknown parameter encoding '" + std::string(s) + "'");
}

namespace detail {

inline constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += rest == 2 ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(std::string_view s) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  if (s.size() % 4 != 0) throw ParseError("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=') {
        if (i + 4 != s.size() || k < 2) throw ParseError("misplaced base64 padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad) throw ParseError("misplaced base64 padding");
      const int d = lut[static_cast<unsigned char>(c)];
      if (d < 0) throw ParseError("invalid base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

}  // namespace detail

/// Parameters as a JSON array of {name, rows, cols, data}. Values are stored
/// as 64-bit doubles: shortest round-trip decimals or little-endian base64.
template <typename T>
nlohmann::json params_to_json(const ParamSet<T>& params, ParamEncoding enc) {
  static_assert(std::endian::native == std::endian::little, "base64 payloads assume little-endian");
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params) {
    nlohmann::json j = {{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}};
    if (enc == ParamEncoding::decimal) {
      std::vector<double> vals(p.value.values().begin(), p.value.values().end());
      j["data"] = vals;
    } else {
      std::vector<unsigned char> bytes(p.value.size() * sizeof(double));
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double d = static_cast<double>(p.value[k]);
        std::memcpy(bytes.data() + k * sizeof(double), &d, sizeof(double));
      }
      j["data"] = detail::base64_encode(bytes);
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

template <typename T>
ParamSet<T> params_from_json(const nlohmann::json& arr, ParamEncoding enc) {
  ParamSet<T> out;
  try {
    for (const auto& j : arr) {
      const auto rows = j.at("rows").get<std::size_t>();
      const auto cols = j.at("cols").get<std::size_t>();
      std::vector<double> vals;
      if (enc == ParamEncoding::decimal) {
        vals = j.at("data").get<std::vector<double>>();
      } else {
        const auto bytes = detail::base64_decode(j.at("data").get<std::string>());
        if (bytes.size() % sizeof(double) != 0) throw ParseError("base64 payload is not a double array");
        vals.resize(bytes.size() / sizeof(double));
        std::memcpy(vals.data(), bytes.data(), bytes.size());
      }
      if (vals.size() != rows * cols) {
        throw ShapeError("parameter '" + j.at("name").get<std::string>() + "' holds " +
                         std::to_string(vals.size()) + " values for shape " + std::to_string(rows) +
                         "x" + std::to_string(cols));
      }
      Matrix<T> m(rows, cols);
      for (std::size_t k = 0; k < vals.size(); ++k) m[k] = static_cast<T>(vals[k]);
      if (!all_finite(m)) throw NumericError("non-finite value in parameter '" + j.at("name").get<std::string>() + "'");
      out.add(j.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("parameter table: ") + e.what());
  }
  return out;
}

}  // namespace voltron::num
