#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/types.hpp"

namespace voltron {

/// Graph-level embedding of one application.
struct Embedding {
  std::string app_id;
  Label label = Label::unknown;
  std::optional<std::string> family;
  std::vector<double> values;

  friend bool operator==(const Embedding&, const Embedding&) = default;
};

inline constexpr const char* kEmbeddingFormat = "voltron-embeddings/1";

inline void write_embeddings(std::ostream& os, const std::vector<Embedding>& embs,
                             const std::string& vocab_hash) {
  os << nlohmann::json{{"format", kEmbeddingFormat}, {"vocab_hash", vocab_hash}, {"count", embs.size()}}.dump()
     << "\n";
  for (const auto& e : embs) {
    nlohmann::json j = {{"app_id", e.app_id}, {"label", std::string(to_string(e.label))}};
    j["family"] = e.family ? nlohmann::json(*e.family) : nlohmann::json(nullptr);
    j["embedding"] = e.values;
    os << j.dump() << "\n";
  }
}

struct EmbeddingFile {
  std::string vocab_hash;
  std::vector<Embedding> embeddings;
};

inline EmbeddingFile read_embeddings(std::istream& in) {
  EmbeddingFile f;
  std::string line;
  try {
    if (!std::getline(in, line)) throw ParseError("embedding file: missing header");
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kEmbeddingFormat)
      throw ParseError("embedding file: unsupported format '" + header.value("format", "") + "'");
    f.vocab_hash = header.at("vocab_hash").get<std::string>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Embedding e;
      e.app_id = j.at("app_id").get<std::string>();
      auto l = parse_label(j.at("label").get<std::string>());
      if (!l) throw ParseError("embedding file: bad label for " + e.app_id);
      e.label = *l;
      if (j.contains("family") && !j["family"].is_null()) e.family = j["family"].get<std::string>();
      e.values = j.at("embedding").get<std::vector<double>>();
      f.embeddings.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("embedding file: ") + e.what());
  }
  return f;
}

inline EmbeddingFile read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings '" + path + "'");
  return read_embeddings(in);
}

}  // namespace voltron
