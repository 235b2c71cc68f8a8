#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "voltron/cli/config.hpp"
#include "voltron/dataset/split.hpp"
#include "voltron/eval.hpp"
#include "voltron/vgae/io.hpp"

namespace voltron::cli {

namespace fs = std::filesystem;

/// Artifact locations inside a run directory.
struct Layout {
  fs::path out;

  fs::path mapping() const { return out / "vocab" / "mapping.txt"; }
  fs::path extension() const { return out / "vocab" / "extension.txt"; }
  fs::path corpus() const { return out / "corpus.jsonl"; }
  fs::path manifest() const { return out / "manifest.jsonl"; }
  fs::path vocab() const { return out / "vocab.txt"; }
  fs::path graphs() const { return out / "graphs.jsonl"; }
  fs::path split() const { return out / "split.json"; }
  fs::path vgae_model() const { return out / "vgae.json"; }
  fs::path embeddings() const { return out / "embeddings.jsonl"; }
  fs::path snn_model() const { return out / "snn.json"; }
  fs::path verdicts() const { return out / "verdicts.jsonl"; }
  fs::path vgae_predictions() const { return out / "vgae-predictions.jsonl"; }
  fs::path report_json() const { return out / "report.json"; }
  fs::path report_txt() const { return out / "report.txt"; }
  fs::path sweep_csv() const { return out / "sweep.csv"; }
  fs::path sweep_json() const { return out / "sweep.json"; }
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "build-graphs", "split", "train-vgae", "embed",
                                              "train-snn", "classify", "evaluate", "sweep"};
  return names;
}

/// Writes through a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    body(os);
    os.flush();
    if (!os) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  write_atomic(path, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

/// Fails with a dependency error naming the command that produces `path`.
inline const fs::path& require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw DependencyError("missing '" + path.string() + "'; run '" + producer + "' first");
  return path;
}

class Pipeline {
public:
  Pipeline(RunConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), at_{cfg_.paths.out} {}

  const RunConfig& config() const noexcept { return cfg_; }
  const Layout& layout() const noexcept { return at_; }

  void run(const std::string& command) {
    if (command == "synth") return synth();
    if (command == "build-graphs") return build_graphs();
    if (command == "split") return split();
    if (command == "train-vgae") return dispatch([&](auto t) { train_vgae<decltype(t)>(); });
    if (command == "embed") return dispatch([&](auto t) { embed<decltype(t)>(); });
    if (command == "train-snn") return dispatch([&](auto t) { train_snn<decltype(t)>(); });
    if (command == "classify") return dispatch([&](auto t) { classify<decltype(t)>(); });
    if (command == "evaluate") return evaluate();
    if (command == "sweep") return sweep();
    throw ConfigError("unknown command '" + command + "'");
  }

  void run_all() {
    for (const auto& c : command_names()) run(c);
  }

  std::uint64_t stage_seed(const std::string& stage) const { return derive_seed(cfg_.seed, stage); }

  // --- stages -------------------------------------------------------------------

  void synth() {
    auto sc = cfg_.synth;
    sc.seed = stage_seed("synth");
    log_ << "synth: seed " << sc.seed << "\n";
    const auto corpus = data::synth_generate(sc);
    write_atomic(at_.mapping(), [&](std::ostream& os) {
      os << "# synthetic sensitive-API mapping\n";
      for (const auto& a : corpus.mapping_apis) os << a << "\tandroid.permission.SYNTHETIC\n";
    });
    write_atomic(at_.extension(), [&](std::ostream& os) {
      os << "# synthetic extension list\n";
      for (const auto& a : corpus.extension_apis) os << a << "\n";
    });
    write_atomic(at_.corpus(), [&](std::ostream& os) {
      for (const auto& l : corpus.listings) os << cg::serialize_call_listing(l) << "\n";
    });
    write_atomic(at_.manifest(), [&](std::ostream& os) { data::write_manifest(os, corpus.manifest); });
    log_ << "synth: " << corpus.listings.size() << " listings, " << corpus.manifest.size() << " manifest entries\n";
  }

  void build_graphs() {
    auto vocab = cg::load_api_mapping(require(mapping_path(), "synth").string());
    if (cfg_.paths.extension || fs::exists(at_.extension()))
      vocab = cg::extend_vocab(std::move(vocab), require(extension_path(), "synth").string());
    const auto listings = cg::read_corpus(require(corpus_path(), "synth").string());
    const auto restricted = cg::restrict_vocab(vocab, listings);
    cg::PrefixFilters filters{cfg_.prefix_filters};
    cg::GraphCorpus out{restricted.hash_hex(), restricted.size(), {}};
    std::size_t skipped = 0;
    for (const auto& l : listings) {
      try {
        out.graphs.push_back(cg::build_app_graph(l, restricted, filters));
      } catch (const EmptyGraphError&) {
        ++skipped;
      }
    }
    write_atomic(at_.vocab(), [&](std::ostream& os) { cg::write_vocab(os, restricted); });
    write_atomic(at_.graphs(), [&](std::ostream& os) { cg::write_graph_corpus(os, out); });
    log_ << "build-graphs: vocabulary " << vocab.size() << " -> " << restricted.size() << ", " << out.graphs.size()
         << " graphs, " << skipped << " apps without a valid graph\n";
  }

  void split() {
    const auto seed = stage_seed("split");
    const auto manifest = graphed_manifest();
    data::SplitSpec s;
    const auto& o = cfg_.split;
    if (o.strategy == "family") {
      const auto malware_support = cfg_.mode == zeroshot::Mode::few_shot ? cfg_.malware_support_size : 0;
      s = data::family_disjoint_split(manifest, o.test_fraction, o.support_pool, seed, malware_support);
    } else if (o.strategy == "five-fold") {
      s = data::five_fold_families(manifest, o.support_pool, seed, o.test_fraction).at(o.fold);
    } else {
      s = data::time_split(manifest, *o.cutoff, o.support_pool, seed);
    }
    write_json(at_.split(), data::to_json(s));
    log_ << "split: " << o.strategy << " seed " << seed << ", train " << s.train.size() << ", test "
         << s.test.size() << ", support " << s.support.size() << "+" << s.support_malware.size()
         << ", test families " << s.test_families.size() << "\n";
  }

  template <typename T>
  void train_vgae() {
    const auto corpus = read_graphs();
    const auto s = read_split();
    std::vector<cg::ApiCallGraph> train;
    const auto by_id = index_graphs(corpus);
    for (const auto& id : s.train) train.push_back(corpus.graphs[by_id.at(id)]);
    auto tc = cfg_.vgae;
    tc.seed = stage_seed("train-vgae");
    log_ << "train-vgae: seed " << tc.seed << ", " << train.size() << " graphs, " << tc.epochs << " epochs\n";
    const auto r = vgae::train_vgae<T>(train, corpus.vocab_size, tc);
    const auto& last = r.history.back();
    log_ << "train-vgae: final loss " << last.total << " (recon " << last.recon << ", kl " << last.kl << ", cls "
         << last.cls << ")\n";
    write_json(vgae_path(), vgae::save_vgae(r.model, corpus.vocab_hash, cfg_.encoding));
  }

  template <typename T>
  void embed() {
    const auto corpus = read_graphs();
    const auto model = load_vgae_model<T>(corpus.vocab_hash);
    std::vector<Embedding> out;
    for (const auto& g : corpus.graphs) {
      const auto in = vgae::prepare_graph<T>(g, corpus.vocab_size);
      const auto v = vgae::embed(in, model);
      out.push_back({g.app_id, g.label, g.family, std::vector<double>(v.begin(), v.end())});
    }
    write_atomic(at_.embeddings(), [&](std::ostream& os) { write_embeddings(os, out, corpus.vocab_hash); });
    log_ << "embed: " << out.size() << " embeddings\n";
  }

  template <typename T>
  void train_snn() {
    const auto embs = read_embedding_file();
    const auto s = read_split();
    const auto train = select(embs.embeddings, s.train);
    auto tc = cfg_.snn;
    tc.seed = stage_seed("train-snn");
    log_ << "train-snn: seed " << tc.seed << ", " << train.size() << " embeddings, " << tc.epochs << " epochs\n";
    const auto r = snn::train_snn<T>(train, tc);
    log_ << "train-snn: final pair loss " << r.history.back() << "\n";
    write_json(snn_path(), snn::save_snn(r.model, embs.vocab_hash, cfg_.encoding));
  }

  template <typename T>
  void classify() {
    const auto embs = read_embedding_file();
    const auto model = load_snn_model<T>(embs.vocab_hash);
    const auto s = read_split();
    const auto test = select(embs.embeddings, s.test);
    const auto benign_pool = select(embs.embeddings, s.support);
    const auto malware_pool = select(embs.embeddings, s.support_malware);
    const bool few = cfg_.mode == zeroshot::Mode::few_shot;
    if (few && malware_pool.size() < cfg_.malware_support_size) {
      throw ValidationError("few-shot needs " + std::to_string(cfg_.malware_support_size) +
                            " malware support samples but the split withholds " +
                            std::to_string(malware_pool.size()) + "; re-run 'split' in few-shot mode");
    }

    const auto seed = stage_seed("classify");
    log_ << "classify: " << zeroshot::to_string(cfg_.mode) << ", seed " << seed << ", " << test.size()
         << " apps, support " << cfg_.support_size << (few ? "+" + std::to_string(cfg_.malware_support_size) : "")
         << "\n";
    auto draw = [&](std::uint64_t stream, const std::vector<Embedding>& pool, Label role, std::size_t n) {
      Rng rng(stream);
      return zeroshot::build_support_set(pool, role, n, rng);
    };
    const auto benign_seed = derive_seed(seed, "benign-support");
    const auto malware_seed = derive_seed(seed, "malware-support");
    std::vector<zeroshot::Verdict> verdicts;
    std::size_t fewest = SIZE_MAX, most = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::uint64_t k = cfg_.fixed_support ? 0 : i;
      const auto benign = draw(derive_seed(benign_seed, k), benign_pool, Label::benign, cfg_.support_size);
      if (few) {
        const auto malware =
            draw(derive_seed(malware_seed, k), malware_pool, Label::malware, cfg_.malware_support_size);
        std::set<std::string> fams;
        for (const auto& e : malware.embeddings) fams.insert(e.family.value_or(""));
        fewest = std::min(fewest, fams.size());
        most = std::max(most, fams.size());
        verdicts.push_back(zeroshot::classify_few_shot(model, test[i], benign, malware));
      } else {
        verdicts.push_back(zeroshot::classify_zero_shot(model, test[i], benign, cfg_.threshold));
      }
    }
    write_atomic(at_.verdicts(), [&](std::ostream& os) { zeroshot::write_verdicts(os, verdicts); });
    if (few && !test.empty())
      log_ << "classify: malware support covers " << fewest << ".." << most << " families per draw\n";

    // VGAE-only baseline on the same test apps.
    const auto corpus = read_graphs();
    const auto vmodel = load_vgae_model<T>(corpus.vocab_hash);
    const auto by_id = index_graphs(corpus);
    write_atomic(at_.vgae_predictions(), [&](std::ostream& os) {
      for (const auto& id : s.test) {
        const auto c = vgae::vgae_classify(vgae::prepare_graph<T>(corpus.graphs[by_id.at(id)], corpus.vocab_size),
                                           vmodel);
        os << nlohmann::json{{"app_id", id},
                             {"label", std::string(to_string(c.label))},
                             {"p_malware", c.probabilities[vgae::kMalware]}}
                  .dump()
           << "\n";
      }
    });
  }

  void evaluate() {
    const auto manifest = read_manifest_file();
    const auto verdicts = zeroshot::read_verdicts(require(at_.verdicts(), "classify").string());
    std::vector<eval::Report> reports{eval::make_report("voltron", eval::predictions(verdicts), manifest)};
    reports.push_back(eval::make_report("vgae-only", read_vgae_predictions(), manifest));
    const auto s = read_split();
    nlohmann::json doc = {{"format", "voltron-report/1"},
                          {"mode", std::string(zeroshot::to_string(verdicts.empty() ? cfg_.mode : verdicts[0].mode))},
                          {"split", {{"strategy", s.strategy}, {"fold", s.fold}, {"test_families", s.test_families}}},
                          {"reports", nlohmann::json::array()}};
    for (const auto& r : reports) doc["reports"].push_back(eval::to_json(r));
    write_json(at_.report_json(), doc);
    write_atomic(at_.report_txt(), [&](std::ostream& os) { eval::write_table(os, reports); });
    eval::write_table(log_, reports);
  }

  void sweep() {
    const auto manifest = read_manifest_file();
    const auto verdicts = zeroshot::read_verdicts(require(at_.verdicts(), "classify").string());
    std::vector<double> scores;
    std::vector<Label> labels;
    for (const auto& v : verdicts) {
      scores.push_back(v.mean_benign);
      labels.push_back(eval::definite_entry(manifest, v.app_id).label);
    }
    const auto curve =
        eval::threshold_sweep(scores, labels, eval::linear_grid(cfg_.sweep.lo, cfg_.sweep.hi, cfg_.sweep.step));
    write_atomic(at_.sweep_csv(), [&](std::ostream& os) { eval::write_sweep_csv(os, curve); });
    nlohmann::json doc = {{"format", "voltron-sweep/1"}, {"points", curve.points.size()}};
    doc["best_f1_threshold"] = curve.best_f1_threshold ? nlohmann::json(*curve.best_f1_threshold) : nullptr;
    write_json(at_.sweep_json(), doc);
    log_ << "sweep: " << curve.points.size() << " thresholds";
    if (curve.best_f1_threshold) log_ << ", best F1 at " << *curve.best_f1_threshold;
    log_ << "\n";
  }

  // --- artifact access -------------------------------------------------------------

  fs::path mapping_path() const { return cfg_.paths.mapping ? fs::path(*cfg_.paths.mapping) : at_.mapping(); }
  fs::path extension_path() const {
    return cfg_.paths.extension ? fs::path(*cfg_.paths.extension) : at_.extension();
  }
  fs::path corpus_path() const { return cfg_.paths.corpus ? fs::path(*cfg_.paths.corpus) : at_.corpus(); }
  fs::path manifest_path() const { return cfg_.paths.manifest ? fs::path(*cfg_.paths.manifest) : at_.manifest(); }
  fs::path vgae_path() const { return cfg_.paths.vgae_model ? fs::path(*cfg_.paths.vgae_model) : at_.vgae_model(); }
  fs::path snn_path() const { return cfg_.paths.snn_model ? fs::path(*cfg_.paths.snn_model) : at_.snn_model(); }

  cg::GraphCorpus read_graphs() const {
    return cg::read_graph_corpus(require(at_.graphs(), "build-graphs").string());
  }
  data::SplitSpec read_split() const { return data::read_split(require(at_.split(), "split").string()); }
  EmbeddingFile read_embedding_file() const { return read_embeddings(require(at_.embeddings(), "embed").string()); }
  data::Manifest read_manifest_file() const {
    return data::clean_manifest(data::read_manifest(require(manifest_path(), "synth").string()));
  }

  template <typename T>
  vgae::VgaeModel<T> load_vgae_model(const std::string& vocab_hash) const {
    return vgae::load_vgae<T>(read_json(require(vgae_path(), "train-vgae")), vocab_hash);
  }
  template <typename T>
  snn::SnnModel<T> load_snn_model(const std::string& vocab_hash) const {
    return snn::load_snn<T>(read_json(require(snn_path(), "train-snn")), vocab_hash);
  }

  std::vector<eval::Prediction> read_vgae_predictions() const {
    std::ifstream in(require(at_.vgae_predictions(), "classify"));
    std::vector<eval::Prediction> out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("app_id").get<std::string>(), *parse_label(j.at("label").get<std::string>())});
    }
    return out;
  }

private:
  template <typename F>
  void dispatch(F f) {
    if (cfg_.float_bits == 32) {
      f(float{});
    } else {
      f(double{});
    }
  }

  static std::map<std::string, std::size_t> index_graphs(const cg::GraphCorpus& c) {
    std::map<std::string, std::size_t> m;
    for (std::size_t i = 0; i < c.graphs.size(); ++i) m.emplace(c.graphs[i].app_id, i);
    return m;
  }

  static std::vector<Embedding> select(const std::vector<Embedding>& all, const std::vector<std::string>& ids) {
    std::map<std::string, const Embedding*> by_id;
    for (const auto& e : all) by_id.emplace(e.app_id, &e);
    std::vector<Embedding> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("no embedding for app '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  }

  /// Cleaned manifest restricted to apps that produced a graph.
  data::Manifest graphed_manifest() const {
    const auto corpus = read_graphs();
    std::set<std::string> ids;
    for (const auto& g : corpus.graphs) ids.insert(g.app_id);
    const auto manifest = read_manifest_file();
    std::vector<data::ManifestEntry> keep;
    for (const auto& e : manifest.entries())
      if (ids.count(e.app_id)) keep.push_back(e);
    if (keep.empty()) throw ValidationError("no manifest entry has a graph");
    return data::Manifest(std::move(keep));
  }

  RunConfig cfg_;
  std::ostream& log_;
  Layout at_;
};

}  // namespace voltron::cli
