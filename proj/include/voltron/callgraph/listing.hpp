#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/callgraph/vocab.hpp"
#include "voltron/types.hpp"

namespace voltron::cg {

enum class CallKind { api, method };

struct CallItem {
  CallKind kind = CallKind::api;
  std::string target;

  friend bool operator==(const CallItem&, const CallItem&) = default;
};

struct MethodListing {
  std::string name;
  std::vector<CallItem> calls;  // execution order

  friend bool operator==(const MethodListing&, const MethodListing&) = default;
};

/// One application's decompiled calls in canonical form.
struct CallListing {
  std::string app_id;
  Label label = Label::unknown;
  std::optional<std::string> family;
  std::optional<std::string> timestamp;
  std::vector<MethodListing> methods;

  friend bool operator==(const CallListing&, const CallListing&) = default;
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void listing_error(std::size_t line, const std::string& path,
                                       const std::string& msg) {
  std::string where = line ? "line " + std::to_string(line) + ": " : std::string();
  throw ParseError(where + path + ": " + msg);
}

inline const json& require_field(const json& obj, const char* key, std::size_t line,
                                 const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) listing_error(line, path + (path.empty() ? "" : ".") + key, "missing field");
  return *it;
}

inline std::string require_string(const json& obj, const char* key, std::size_t line,
                                  const std::string& path) {
  const auto& v = require_field(obj, key, line, path);
  if (!v.is_string()) {
    listing_error(line, path + (path.empty() ? "" : ".") + key, "expected a string");
  }
  return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* key,
                                                  std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) listing_error(line, key, "expected a string or null");
  return it->get<std::string>();
}

}  // namespace detail

/// Parses one call-listing document. `line` (1-based, 0 = unknown) only
/// decorates error messages. Unknown fields are ignored.
inline CallListing parse_call_listing(const std::string& text, std::size_t line = 0) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    detail::listing_error(line, "<document>", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) detail::listing_error(line, "<document>", "expected an object");

  CallListing out;
  out.app_id = detail::require_string(doc, "app_id", line, "");
  if (out.app_id.empty()) detail::listing_error(line, "app_id", "must be non-empty");
  const auto label = detail::require_string(doc, "label", line, "");
  auto parsed = parse_label(label);
  if (!parsed || *parsed == Label::indefinite) {
    detail::listing_error(line, "label", "expected \"benign\", \"malware\" or \"unknown\", got \"" +
                                             label + "\"");
  }
  out.label = *parsed;
  out.family = detail::optional_string(doc, "family", line);
  out.timestamp = detail::optional_string(doc, "timestamp", line);
  if (out.timestamp && !is_iso_date(*out.timestamp)) {
    detail::listing_error(line, "timestamp", "expected an ISO-8601 date, got \"" + *out.timestamp + "\"");
  }

  const auto& methods = detail::require_field(doc, "methods", line, "");
  if (!methods.is_array()) detail::listing_error(line, "methods", "expected an array");
  std::set<std::string> seen;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const std::string mpath = "methods[" + std::to_string(m) + "]";
    const auto& jm = methods[m];
    if (!jm.is_object()) detail::listing_error(line, mpath, "expected an object");
    MethodListing ml;
    ml.name = detail::require_string(jm, "name", line, mpath);
    if (!seen.insert(ml.name).second) {
      throw ValidationError((line ? "line " + std::to_string(line) + ": " : std::string()) +
                            mpath + ".name: duplicate method name \"" + ml.name + "\"");
    }
    const auto& calls = detail::require_field(jm, "calls", line, mpath);
    if (!calls.is_array()) detail::listing_error(line, mpath + ".calls", "expected an array");
    for (std::size_t c = 0; c < calls.size(); ++c) {
      const std::string cpath = mpath + ".calls[" + std::to_string(c) + "]";
      const auto& jc = calls[c];
      if (!jc.is_object()) detail::listing_error(line, cpath, "expected an object");
      const auto kind = detail::require_string(jc, "kind", line, cpath);
      CallItem item;
      if (kind == "api") {
        item.kind = CallKind::api;
      } else if (kind == "method") {
        item.kind = CallKind::method;
      } else {
        detail::listing_error(line, cpath + ".kind", "expected \"api\" or \"method\", got \"" + kind + "\"");
      }
      item.target = detail::require_string(jc, "target", line, cpath);
      ml.calls.push_back(std::move(item));
    }
    out.methods.push_back(std::move(ml));
  }
  return out;
}

inline nlohmann::json to_json(const CallListing& l) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : l.methods) {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : m.calls) {
      calls.push_back({{"kind", c.kind == CallKind::api ? "api" : "method"}, {"target", c.target}});
    }
    methods.push_back({{"name", m.name}, {"calls", std::move(calls)}});
  }
  nlohmann::json j = {{"app_id", l.app_id}, {"label", std::string(to_string(l.label))}};
  j["family"] = l.family ? nlohmann::json(*l.family) : nlohmann::json(nullptr);
  j["timestamp"] = l.timestamp ? nlohmann::json(*l.timestamp) : nlohmann::json(nullptr);
  j["methods"] = std::move(methods);
  return j;
}

/// Single-line document, suitable as one line of a corpus file.
inline std::string serialize_call_listing(const CallListing& l) { return to_json(l).dump(); }

/// A corpus file holds one listing per line; blank lines are skipped.
inline std::vector<CallListing> read_corpus(std::istream& in) {
  std::vector<CallListing> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_call_listing(line, no));
  }
  return out;
}

inline std::vector<CallListing> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus '" + path + "'");
  return read_corpus(in);
}

/// Restricts `vocab` to the APIs called (as kind=api) somewhere in `corpus`.
inline ApiVocab restrict_vocab(const ApiVocab& vocab, const std::vector<CallListing>& corpus) {
  if (corpus.empty()) throw ValidationError("restrict_vocab: empty corpus");
  std::set<std::string, std::less<>> used;
  for (const auto& l : corpus)
    for (const auto& m : l.methods)
      for (const auto& c : m.calls)
        if (c.kind == CallKind::api) used.insert(c.target);
  return restrict_vocab_if(vocab, [&](const std::string& a) { return used.count(a) > 0; });
}

}  // namespace voltron::cg
