#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "voltron/types.hpp"

namespace voltron::data {

struct ManifestEntry {
  std::string app_id;
  std::optional<std::string> package_name;
  Label label = Label::indefinite;
  std::optional<std::string> family;
  std::optional<std::string> timestamp;
  std::optional<double> detection_ratio;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Family key used for grouping; malware without a known family forms its
/// own bucket.
inline std::string family_key(const ManifestEntry& e) { return e.family.value_or("<unknown>"); }

class Manifest {
public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {}

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void add(ManifestEntry e) { entries_.push_back(std::move(e)); }

  /// Lookup by app_id; valid on cleaned manifests (unique ids).
  const ManifestEntry* find(const std::string& app_id) const {
    if (index_.size() != entries_.size()) rebuild_index();
    auto it = index_.find(app_id);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  /// Sample counts of the malware families.
  std::map<std::string, std::size_t> family_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& e : entries_)
      if (e.label == Label::malware) ++out[family_key(e)];
    return out;
  }

  friend bool operator==(const Manifest& a, const Manifest& b) { return a.entries_ == b.entries_; }

private:
  void rebuild_index() const {
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].app_id, i);
  }

  std::vector<ManifestEntry> entries_;
  mutable std::unordered_map<std::string, std::size_t> index_;
};

/// Drops indefinite samples and app_ids listed with contradicting labels, then
/// keeps one entry per package name (the first in app_id order). The result
/// is sorted by app_id, which makes the operation idempotent.
inline Manifest clean_manifest(const Manifest& raw) {
  std::map<std::string, std::set<Label>> labels;
  for (const auto& e : raw.entries()) labels[e.app_id].insert(e.label);

  std::map<std::string, ManifestEntry> by_id;
  for (const auto& e : raw.entries()) {
    if (e.label != Label::benign && e.label != Label::malware) continue;
    const auto& seen = labels[e.app_id];
    if (seen.count(Label::benign) && seen.count(Label::malware)) continue;
    by_id.emplace(e.app_id, e);  // first occurrence wins
  }

  std::set<std::string> packages;
  std::vector<ManifestEntry> out;
  for (auto& [id, e] : by_id) {
    if (e.package_name && !packages.insert(*e.package_name).second) continue;
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ValidationError("clean_manifest: no entries survive cleaning");
  return Manifest(std::move(out));
}

inline nlohmann::json to_json(const ManifestEntry& e) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"app_id", e.app_id},
          {"package_name", opt(e.package_name)},
          {"label", std::string(to_string(e.label))},
          {"family", opt(e.family)},
          {"timestamp", opt(e.timestamp)},
          {"detection_ratio", opt(e.detection_ratio)}};
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  auto opt_str = [&](const char* k) -> std::optional<std::string> {
    if (!j.contains(k) || j[k].is_null()) return std::nullopt;
    return j[k].get<std::string>();
  };
  try {
    e.app_id = j.at("app_id").get<std::string>();
    if (e.app_id.empty()) throw ParseError("manifest: empty app_id");
    const auto label = j.at("label").get<std::string>();
    auto l = parse_label(label);
    if (!l || *l == Label::unknown) throw ParseError("manifest: bad label '" + label + "' for " + e.app_id);
    e.label = *l;
    e.package_name = opt_str("package_name");
    e.family = opt_str("family");
    e.timestamp = opt_str("timestamp");
    if (e.timestamp && !is_iso_date(*e.timestamp))
      throw ParseError("manifest: bad timestamp '" + *e.timestamp + "' for " + e.app_id);
    if (j.contains("detection_ratio") && !j["detection_ratio"].is_null())
      e.detection_ratio = j["detection_ratio"].get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("manifest record: ") + ex.what());
  }
  return e;
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  for (const auto& e : m.entries()) os << to_json(e).dump() << "\n";
}

inline Manifest read_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.add(manifest_entry_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("manifest line " + std::to_string(no) + ": " + e.what());
    }
  }
  return m;
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  return read_manifest(in);
}

}  // namespace voltron::data
