#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "voltron/callgraph/listing.hpp"
#include "voltron/callgraph/vocab.hpp"
#include "voltron/numerics/matrix.hpp"

namespace voltron::cg {

using ApiIndex = std::uint32_t;
using Edge = std::pair<ApiIndex, ApiIndex>;

/// Library namespaces whose non-sensitive calls are discarded.
struct PrefixFilters {
  std::vector<std::string> prefixes{"Landroid", "Ljava", "Lcom/google"};

  bool matches(std::string_view target) const {
    for (const auto& p : prefixes)
      if (target.substr(0, p.size()) == p) return true;
    return false;
  }
};

enum class FilterDecision { keep_api, keep_method, drop };

/// Names of the methods declared by one listing.
class MethodIndex {
public:
  explicit MethodIndex(const CallListing& listing) {
    for (std::size_t i = 0; i < listing.methods.size(); ++i)
      index_.emplace(listing.methods[i].name, i);
  }
  std::optional<std::size_t> find(const std::string& name) const {
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    return std::nullopt;
  }

private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Classifies one call. Vocabulary membership wins over the prefix filters,
/// since the sensitive APIs themselves live under Landroid/Ljava; an api call
/// outside the vocabulary is dropped whether or not a prefix matches it.
/// Method calls survive only when they resolve inside the same listing.
inline FilterDecision filter_call(const CallItem& item, const ApiVocab& vocab,
                                  [[maybe_unused]] const PrefixFilters& filters,
                                  const MethodIndex& methods) {
  if (item.kind == CallKind::api) {
    return vocab.contains(item.target) ? FilterDecision::keep_api : FilterDecision::drop;
  }
  return methods.find(item.target) ? FilterDecision::keep_method : FilterDecision::drop;
}

/// A kept item of a method body: an API node or a resolved call to a method
/// of the same listing.
struct FragmentItem {
  bool is_api = true;
  std::size_t id = 0;  // ApiIndex or method position

  friend bool operator==(const FragmentItem&, const FragmentItem&) = default;
};

/// Per-method graph before splicing. Edges join APIs that are adjacent among
/// the kept items; a kept method call separates them and is recorded as a
/// splice point in `items`.
struct GraphFragment {
  std::set<ApiIndex> entry;
  std::set<ApiIndex> exit;
  std::set<Edge> edges;
  std::set<ApiIndex> nodes;
  std::vector<FragmentItem> items;
  bool passthrough = true;
};

inline GraphFragment build_method_fragment(const MethodListing& method, const ApiVocab& vocab,
                                           const PrefixFilters& filters,
                                           const MethodIndex& methods) {
  if (vocab.empty()) throw EmptyVocabError("build_method_fragment: empty vocabulary");
  GraphFragment f;
  std::optional<ApiIndex> prev;
  for (const auto& call : method.calls) {
    switch (filter_call(call, vocab, filters, methods)) {
      case FilterDecision::keep_api: {
        const auto a = static_cast<ApiIndex>(*vocab.find(call.target));
        f.items.push_back({true, a});
        f.nodes.insert(a);
        if (prev) f.edges.emplace(*prev, a);
        if (f.entry.empty()) f.entry = {a};
        f.exit = {a};
        prev = a;
        break;
      }
      case FilterDecision::keep_method:
        f.items.push_back({false, *methods.find(call.target)});
        prev.reset();
        break;
      case FilterDecision::drop:
        break;
    }
  }
  f.passthrough = f.items.empty();
  return f;
}

/// Directed API call graph of one application. Nodes are vocabulary indices,
/// one per distinct API.
struct ApiCallGraph {
  std::string app_id;
  Label label = Label::unknown;
  std::optional<std::string> family;
  std::optional<std::string> timestamp;
  std::vector<ApiIndex> nodes;  // sorted, unique
  std::vector<Edge> edges;      // sorted, unique

  std::size_t node_count() const noexcept { return nodes.size(); }

  /// Position of a vocabulary index among `nodes`.
  std::optional<std::size_t> position(ApiIndex api) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), api);
    if (it == nodes.end() || *it != api) return std::nullopt;
    return static_cast<std::size_t>(it - nodes.begin());
  }

  /// Directed 0/1 adjacency over node positions.
  template <typename T>
  num::Matrix<T> adjacency() const {
    num::Matrix<T> a(nodes.size(), nodes.size());
    for (const auto& [u, v] : edges) a(*position(u), *position(v)) = T(1);
    return a;
  }

  friend bool operator==(const ApiCallGraph&, const ApiCallGraph&) = default;
};

/// Entry/exit API sets of a method once its callees are taken into account.
struct MethodSummary {
  std::set<ApiIndex> entry;
  std::set<ApiIndex> exit;

  bool empty() const noexcept { return entry.empty(); }
  friend bool operator==(const MethodSummary&, const MethodSummary&) = default;
};

namespace detail {

inline MethodSummary summarize(const GraphFragment& f, const std::vector<MethodSummary>& callee) {
  MethodSummary s;
  std::set<ApiIndex> frontier;
  bool started = false;
  for (const auto& item : f.items) {
    if (item.is_api) {
      frontier = {static_cast<ApiIndex>(item.id)};
    } else if (!callee[item.id].empty()) {
      frontier = callee[item.id].exit;
    } else {
      continue;
    }
    if (!started) {
      s.entry = item.is_api ? frontier : callee[item.id].entry;
      started = true;
    }
  }
  s.exit = std::move(frontier);
  return s;
}

}  // namespace detail

/// Fixed point of the method summaries. All summaries of a round are computed
/// from the previous round, so the result does not depend on declaration
/// order. The number of rounds is capped at the method count.
inline std::vector<MethodSummary> method_summaries(const std::vector<GraphFragment>& fragments) {
  std::vector<MethodSummary> cur(fragments.size());
  const std::size_t cap = std::max<std::size_t>(1, fragments.size());
  for (std::size_t round = 0; round < cap; ++round) {
    std::vector<MethodSummary> next(fragments.size());
    for (std::size_t m = 0; m < fragments.size(); ++m) next[m] = detail::summarize(fragments[m], cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

/// Builds the application graph: per-method fragments spliced along calls.
/// At a call site the current frontier (the preceding API, or the exit set of
/// a preceding callee) connects to the callee's entry set, and the callee's
/// exit set becomes the new frontier. Callees with an empty summary are
/// transparent. Throws EmptyGraphError when no sensitive API survives.
inline ApiCallGraph build_app_graph(const CallListing& listing, const ApiVocab& vocab,
                                    const PrefixFilters& filters = {}) {
  const MethodIndex index(listing);
  std::vector<GraphFragment> fragments;
  fragments.reserve(listing.methods.size());
  for (const auto& m : listing.methods)
    fragments.push_back(build_method_fragment(m, vocab, filters, index));

  const auto summaries = method_summaries(fragments);

  std::set<ApiIndex> nodes;
  std::set<Edge> edges;
  for (const auto& f : fragments) {
    nodes.insert(f.nodes.begin(), f.nodes.end());
    std::set<ApiIndex> frontier;
    for (const auto& item : f.items) {
      if (item.is_api) {
        const auto a = static_cast<ApiIndex>(item.id);
        for (auto p : frontier) edges.emplace(p, a);
        frontier = {a};
      } else if (const auto& s = summaries[item.id]; !s.empty()) {
        for (auto p : frontier)
          for (auto e : s.entry) edges.emplace(p, e);
        frontier = s.exit;
      }
    }
  }
  if (nodes.empty()) {
    throw EmptyGraphError("application '" + listing.app_id + "' has no sensitive API calls");
  }

  ApiCallGraph g;
  g.app_id = listing.app_id;
  g.label = listing.label;
  g.family = listing.family;
  g.timestamp = listing.timestamp;
  g.nodes.assign(nodes.begin(), nodes.end());
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

// --- graph corpus files ----------------------------------------------------

inline constexpr const char* kGraphFormat = "voltron-graphs/1";

inline nlohmann::json to_json(const ApiCallGraph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  nlohmann::json j = {{"app_id", g.app_id}, {"label", std::string(to_string(g.label))}};
  j["family"] = g.family ? nlohmann::json(*g.family) : nlohmann::json(nullptr);
  j["timestamp"] = g.timestamp ? nlohmann::json(*g.timestamp) : nlohmann::json(nullptr);
  j["nodes"] = g.nodes;
  j["edges"] = std::move(edges);
  return j;
}

inline ApiCallGraph graph_from_json(const nlohmann::json& j, std::size_t vocab_size) {
  ApiCallGraph g;
  try {
    g.app_id = j.at("app_id").get<std::string>();
    auto label = parse_label(j.at("label").get<std::string>());
    if (!label) throw ParseError("bad label");
    g.label = *label;
    if (j.contains("family") && !j["family"].is_null()) g.family = j["family"].get<std::string>();
    if (j.contains("timestamp") && !j["timestamp"].is_null())
      g.timestamp = j["timestamp"].get<std::string>();
    g.nodes = j.at("nodes").get<std::vector<ApiIndex>>();
    for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<ApiIndex>(), e.at(1).get<ApiIndex>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph record: ") + e.what());
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  std::sort(g.edges.begin(), g.edges.end());
  if (g.nodes.empty()) throw EmptyGraphError("graph '" + g.app_id + "' has no nodes");
  if (std::adjacent_find(g.nodes.begin(), g.nodes.end()) != g.nodes.end())
    throw ValidationError("graph '" + g.app_id + "' repeats a node");
  if (g.nodes.back() >= vocab_size)
    throw ShapeError("graph '" + g.app_id + "' references an API outside the vocabulary");
  for (const auto& [u, v] : g.edges) {
    if (!g.position(u) || !g.position(v))
      throw ValidationError("graph '" + g.app_id + "' has an edge to a missing node");
  }
  return g;
}

struct GraphCorpus {
  std::string vocab_hash;
  std::size_t vocab_size = 0;
  std::vector<ApiCallGraph> graphs;
};

inline void write_graph_corpus(std::ostream& os, const GraphCorpus& c) {
  os << nlohmann::json{{"format", kGraphFormat},
                       {"vocab_hash", c.vocab_hash},
                       {"vocab_size", c.vocab_size},
                       {"count", c.graphs.size()}}
            .dump()
     << "\n";
  for (const auto& g : c.graphs) os << to_json(g).dump() << "\n";
}

inline GraphCorpus read_graph_corpus(std::istream& in) {
  GraphCorpus c;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("graph corpus: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("graph corpus header: ") + e.what());
  }
  if (header.value("format", "") != kGraphFormat) {
    throw ParseError("graph corpus: unsupported format '" + header.value("format", "") + "'");
  }
  c.vocab_hash = header.at("vocab_hash").get<std::string>();
  c.vocab_size = header.at("vocab_size").get<std::size_t>();
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (detail::trim(line).empty()) continue;
    try {
      c.graphs.push_back(graph_from_json(nlohmann::json::parse(line), c.vocab_size));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("graph corpus line " + std::to_string(no) + ": " + e.what());
    }
  }
  return c;
}

inline GraphCorpus read_graph_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read graph corpus '" + path + "'");
  return read_graph_corpus(in);
}

}  // namespace voltron::cg
