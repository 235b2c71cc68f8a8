#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "voltron/error.hpp"
#include "voltron/numerics/rng.hpp"

namespace voltron::cg {

enum class Provenance : std::uint8_t { mapping_file = 1, extension = 2, both = 3 };

/// Ordered set of sensitive API identifiers. Identity is the exact string.
class ApiVocab {
public:
  ApiVocab() = default;

  /// Appends `api` unless present; returns its index either way.
  std::size_t insert(const std::string& api, Provenance p) {
    if (auto it = index_.find(api); it != index_.end()) {
      provenance_[it->second] = static_cast<Provenance>(
          static_cast<std::uint8_t>(provenance_[it->second]) | static_cast<std::uint8_t>(p));
      return it->second;
    }
    index_.emplace(api, apis_.size());
    apis_.push_back(api);
    provenance_.push_back(p);
    return apis_.size() - 1;
  }

  std::size_t size() const noexcept { return apis_.size(); }
  bool empty() const noexcept { return apis_.empty(); }
  const std::vector<std::string>& apis() const noexcept { return apis_; }
  const std::string& at(std::size_t i) const { return apis_.at(i); }
  Provenance provenance(std::size_t i) const { return provenance_.at(i); }

  std::optional<std::size_t> find(std::string_view api) const {
    if (auto it = index_.find(std::string(api)); it != index_.end()) return it->second;
    return std::nullopt;
  }
  bool contains(std::string_view api) const { return find(api).has_value(); }

  /// FNV-1a over the ordered identifiers; models refuse to load against a
  /// vocabulary with a different hash.
  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("voltron-vocab");
    for (const auto& a : apis_) {
      h = fnv1a(a, h);
      h = fnv1a("\n", h);
    }
    return h;
  }

  std::string hash_hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash();
    return os.str();
  }

  friend bool operator==(const ApiVocab& a, const ApiVocab& b) { return a.apis_ == b.apis_; }

private:
  std::vector<std::string> apis_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Provenance> provenance_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Identifiers of a vocabulary file: one per line, '#' starts a comment, an
/// optional TAB-separated permission column is ignored.
inline std::vector<std::string> read_identifiers(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (auto t = line.find('\t'); t != std::string::npos) line.erase(t);
    auto id = trim(line);
    if (!id.empty()) out.push_back(std::move(id));
  }
  return out;
}

inline std::vector<std::string> read_identifier_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  auto ids = read_identifiers(in);
  if (ids.empty()) throw EmptyVocabError("vocabulary file '" + path + "' has no identifiers");
  return ids;
}

}  // namespace detail

inline ApiVocab vocab_from_stream(std::istream& in, Provenance p = Provenance::mapping_file) {
  ApiVocab v;
  for (const auto& id : detail::read_identifiers(in)) v.insert(id, p);
  if (v.empty()) throw EmptyVocabError("vocabulary stream has no identifiers");
  return v;
}

/// Loads a permission→API mapping export as a vocabulary.
inline ApiVocab load_api_mapping(const std::string& path) {
  ApiVocab v;
  for (const auto& id : detail::read_identifier_file(path)) v.insert(id, Provenance::mapping_file);
  return v;
}

/// Union with extra identifiers; existing indices never move.
inline ApiVocab extend_vocab(ApiVocab vocab, const std::vector<std::string>& extra) {
  for (const auto& id : extra) vocab.insert(id, Provenance::extension);
  return vocab;
}

inline ApiVocab extend_vocab(ApiVocab vocab, const std::string& extra_path) {
  return extend_vocab(std::move(vocab), detail::read_identifier_file(extra_path));
}

/// Keeps the APIs accepted by `used`, preserving order and reindexing.
template <typename UsedPredicate>
ApiVocab restrict_vocab_if(const ApiVocab& vocab, UsedPredicate used) {
  ApiVocab out;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (used(vocab.at(i))) out.insert(vocab.at(i), vocab.provenance(i));
  if (out.empty()) throw EmptyVocabError("no vocabulary API occurs in the corpus");
  return out;
}

inline void write_vocab(std::ostream& os, const ApiVocab& vocab) {
  os << "# voltron-vocab/1 hash=" << vocab.hash_hex() << " size=" << vocab.size() << "\n";
  for (const auto& a : vocab.apis()) os << a << "\n";
}

}  // namespace voltron::cg
