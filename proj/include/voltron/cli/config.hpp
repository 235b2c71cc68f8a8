#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/callgraph/graph.hpp"
#include "voltron/dataset/synth.hpp"
#include "voltron/snn/train.hpp"
#include "voltron/vgae/train.hpp"
#include "voltron/zeroshot.hpp"

namespace voltron::cli {

/// Input and output locations. Unset inputs default to the files `synth`
/// writes into the output directory.
struct Paths {
  std::string out;
  std::optional<std::string> mapping, extension, corpus, manifest;
  std::optional<std::string> vgae_model, snn_model;

  friend bool operator==(const Paths&, const Paths&) = default;
};

struct SplitOptions {
  std::string strategy = "family";  // family | five-fold | time
  double test_fraction = 0.2;
  std::size_t fold = 0;
  std::optional<std::string> cutoff;
  std::size_t support_pool = 60;

  friend bool operator==(const SplitOptions&, const SplitOptions&) = default;
};

struct SweepOptions {
  double lo = 0.05, hi = 0.95, step = 0.05;

  friend bool operator==(const SweepOptions&, const SweepOptions&) = default;
};

struct RunConfig {
  Paths paths;
  std::uint64_t seed = 0;
  int float_bits = 64;
  num::ParamEncoding encoding = num::ParamEncoding::decimal;
  std::vector<std::string> prefix_filters = cg::PrefixFilters{}.prefixes;
  data::SynthConfig synth;
  SplitOptions split;
  vgae::TrainConfig vgae;
  snn::SnnTrainConfig snn;
  zeroshot::Mode mode = zeroshot::Mode::zero_shot;
  std::size_t support_size = 30;
  std::size_t malware_support_size = 30;
  double threshold = 0.5;
  bool fixed_support = false;
  SweepOptions sweep;

  std::filesystem::path out() const { return paths.out; }
};

inline bool operator==(const vgae::TrainConfig& a, const vgae::TrainConfig& b) {
  return a.learning_rate == b.learning_rate && a.epochs == b.epochs && a.optimizer == b.optimizer &&
         a.batch_size == b.batch_size && a.kl_normalization == b.kl_normalization &&
         a.dims.hidden1 == b.dims.hidden1 && a.dims.hidden2 == b.dims.hidden2 && a.dims.latent == b.dims.latent;
}

inline bool operator==(const snn::SnnTrainConfig& a, const snn::SnnTrainConfig& b) {
  return a.learning_rate == b.learning_rate && a.epochs == b.epochs && a.optimizer == b.optimizer &&
         a.pairs_per_epoch == b.pairs_per_epoch && a.batch_size == b.batch_size && a.dims == b.dims;
}

inline bool operator==(const data::SynthConfig& a, const data::SynthConfig& b) {
  return a.vocab_size == b.vocab_size && a.benign_motifs == b.benign_motifs && a.families == b.families &&
         a.motifs_per_family == b.motifs_per_family && a.motif_min == b.motif_min && a.motif_max == b.motif_max &&
         a.benign_apps == b.benign_apps && a.apps_per_family == b.apps_per_family && a.noise == b.noise &&
         a.benign_region == b.benign_region && a.family_bias == b.family_bias && a.helper_rate == b.helper_rate &&
         a.extension_share == b.extension_share;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.paths == b.paths && a.seed == b.seed && a.float_bits == b.float_bits && a.encoding == b.encoding &&
         a.prefix_filters == b.prefix_filters && a.synth == b.synth && a.split == b.split && a.vgae == b.vgae &&
         a.snn == b.snn && a.mode == b.mode && a.support_size == b.support_size &&
         a.malware_support_size == b.malware_support_size && a.threshold == b.threshold &&
         a.fixed_support == b.fixed_support && a.sweep == b.sweep;
}

namespace detail {

using nlohmann::json;

/// Reads sections of the config document, rejecting unknown keys and
/// reporting bad values by their dotted field path.
class Reader {
public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("'" + where() + "' must be an object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception&) {
      throw ConfigError("config field '" + field(key) + "' has the wrong type");
    }
  }

  template <typename V>
  void get(const char* key, std::optional<V>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    V v;
    get(key, v);
    out = std::move(v);
  }

  template <typename Parse>
  void get_enum(const char* key, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      parse(s);
    } catch (const ValidationError& e) {
      throw ConfigError("config field '" + field(key) + "': " + e.what());
    }
  }

  Reader section(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config field '" + field(k.c_str()) + "'");
  }

  std::string field(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
  std::string where() const { return prefix_.empty() ? "<root>" : prefix_; }

  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

/// Range checks and existence of explicitly named inputs.
inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.paths.out.empty()) fail("missing required path 'paths.out'");
  for (const auto* p : {&c.paths.mapping, &c.paths.extension, &c.paths.corpus, &c.paths.manifest}) {
    if (*p && !std::filesystem::exists(**p)) fail("input path '" + **p + "' does not exist");
  }
  if (c.float_bits != 32 && c.float_bits != 64) fail("'float' must be 32 or 64");
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) fail("'zeroshot.threshold' must lie in (0, 1)");
  if (c.support_size < 1) fail("'zeroshot.support_size' must be at least 1");
  if (c.mode == zeroshot::Mode::few_shot && c.malware_support_size < 1)
    fail("'zeroshot.malware_support_size' must be at least 1");
  if (c.split.support_pool < c.support_size) fail("'split.support_pool' must be at least 'zeroshot.support_size'");
  if (c.split.strategy != "family" && c.split.strategy != "five-fold" && c.split.strategy != "time")
    fail("'split.strategy' must be family, five-fold or time");
  if (!(c.split.test_fraction > 0.0 && c.split.test_fraction < 1.0)) fail("'split.test_fraction' must lie in (0, 1)");
  if (c.split.strategy == "five-fold" && c.split.fold >= 5) fail("'split.fold' must be in 0..4");
  if (c.split.strategy == "time" && (!c.split.cutoff || !is_iso_date(*c.split.cutoff)))
    fail("'split.cutoff' must be an ISO-8601 date for the time split");
  if (!(c.sweep.step > 0.0 && c.sweep.lo >= 0.0 && c.sweep.hi <= 1.0 && c.sweep.lo <= c.sweep.hi))
    fail("'sweep' range must lie in [0, 1] with a positive step");
  try {
    c.synth.validate();
    c.vgae.validate();
    c.snn.validate();
  } catch (const ValidationError& e) {
    fail(e.what());
  }
}

inline RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig c;
  detail::Reader root(doc, "");
  root.get("seed", c.seed);
  root.get("float", c.float_bits);
  root.get_enum("encoding", [&](const std::string& s) { c.encoding = num::parse_param_encoding(s); });

  auto p = root.section("paths");
  p.get("out", c.paths.out);
  p.get("mapping", c.paths.mapping);
  p.get("extension", c.paths.extension);
  p.get("corpus", c.paths.corpus);
  p.get("manifest", c.paths.manifest);
  p.get("vgae_model", c.paths.vgae_model);
  p.get("snn_model", c.paths.snn_model);
  p.finish();

  auto g = root.section("graph");
  g.get("prefix_filters", c.prefix_filters);
  g.finish();

  auto s = root.section("synth");
  s.get("vocab_size", c.synth.vocab_size);
  s.get("benign_motifs", c.synth.benign_motifs);
  s.get("families", c.synth.families);
  s.get("motifs_per_family", c.synth.motifs_per_family);
  s.get("motif_min", c.synth.motif_min);
  s.get("motif_max", c.synth.motif_max);
  s.get("benign_apps", c.synth.benign_apps);
  s.get("apps_per_family", c.synth.apps_per_family);
  s.get("noise", c.synth.noise);
  s.get("benign_region", c.synth.benign_region);
  s.get("family_bias", c.synth.family_bias);
  s.get("helper_rate", c.synth.helper_rate);
  s.get("extension_share", c.synth.extension_share);
  s.finish();

  auto sp = root.section("split");
  sp.get("strategy", c.split.strategy);
  sp.get("test_fraction", c.split.test_fraction);
  sp.get("fold", c.split.fold);
  sp.get("cutoff", c.split.cutoff);
  sp.get("support_pool", c.split.support_pool);
  sp.finish();

  auto v = root.section("vgae");
  v.get("learning_rate", c.vgae.learning_rate);
  v.get("epochs", c.vgae.epochs);
  v.get_enum("optimizer", [&](const std::string& x) { c.vgae.optimizer = num::parse_optimizer_kind(x); });
  v.get("batch_size", c.vgae.batch_size);
  v.get_enum("kl_normalization",
             [&](const std::string& x) { c.vgae.kl_normalization = vgae::parse_kl_normalization(x); });
  v.get("hidden1", c.vgae.dims.hidden1);
  v.get("hidden2", c.vgae.dims.hidden2);
  v.get("latent", c.vgae.dims.latent);
  v.finish();

  auto n = root.section("snn");
  n.get("learning_rate", c.snn.learning_rate);
  n.get("epochs", c.snn.epochs);
  n.get_enum("optimizer", [&](const std::string& x) { c.snn.optimizer = num::parse_optimizer_kind(x); });
  n.get("pairs_per_epoch", c.snn.pairs_per_epoch);
  n.get("batch_size", c.snn.batch_size);
  n.get("twin", c.snn.dims.twin);
  n.get("head", c.snn.dims.head);
  n.finish();
  c.snn.dims.input = c.vgae.dims.latent;

  auto z = root.section("zeroshot");
  z.get_enum("mode", [&](const std::string& x) { c.mode = zeroshot::parse_mode(x); });
  z.get("support_size", c.support_size);
  z.get("malware_support_size", c.malware_support_size);
  z.get("threshold", c.threshold);
  z.get("fixed_support", c.fixed_support);
  z.finish();

  auto w = root.section("sweep");
  w.get("lo", c.sweep.lo);
  w.get("hi", c.sweep.hi);
  w.get("step", c.sweep.step);
  w.finish();
  root.finish();

  validate(c);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  using detail::opt;
  using nlohmann::json;
  return {
      {"seed", c.seed},
      {"float", c.float_bits},
      {"encoding", std::string(num::to_string(c.encoding))},
      {"paths",
       {{"out", c.paths.out},
        {"mapping", opt(c.paths.mapping)},
        {"extension", opt(c.paths.extension)},
        {"corpus", opt(c.paths.corpus)},
        {"manifest", opt(c.paths.manifest)},
        {"vgae_model", opt(c.paths.vgae_model)},
        {"snn_model", opt(c.paths.snn_model)}}},
      {"graph", {{"prefix_filters", c.prefix_filters}}},
      {"synth",
       {{"vocab_size", c.synth.vocab_size},
        {"benign_motifs", c.synth.benign_motifs},
        {"families", c.synth.families},
        {"motifs_per_family", c.synth.motifs_per_family},
        {"motif_min", c.synth.motif_min},
        {"motif_max", c.synth.motif_max},
        {"benign_apps", c.synth.benign_apps},
        {"apps_per_family", c.synth.apps_per_family},
        {"noise", c.synth.noise},
        {"benign_region", c.synth.benign_region},
        {"family_bias", c.synth.family_bias},
        {"helper_rate", c.synth.helper_rate},
        {"extension_share", c.synth.extension_share}}},
      {"split",
       {{"strategy", c.split.strategy},
        {"test_fraction", c.split.test_fraction},
        {"fold", c.split.fold},
        {"cutoff", opt(c.split.cutoff)},
        {"support_pool", c.split.support_pool}}},
      {"vgae",
       {{"learning_rate", c.vgae.learning_rate},
        {"epochs", c.vgae.epochs},
        {"optimizer", std::string(num::to_string(c.vgae.optimizer))},
        {"batch_size", c.vgae.batch_size},
        {"kl_normalization", std::string(vgae::to_string(c.vgae.kl_normalization))},
        {"hidden1", c.vgae.dims.hidden1},
        {"hidden2", c.vgae.dims.hidden2},
        {"latent", c.vgae.dims.latent}}},
      {"snn",
       {{"learning_rate", c.snn.learning_rate},
        {"epochs", c.snn.epochs},
        {"optimizer", std::string(num::to_string(c.snn.optimizer))},
        {"pairs_per_epoch", c.snn.pairs_per_epoch},
        {"batch_size", c.snn.batch_size},
        {"twin", c.snn.dims.twin},
        {"head", c.snn.dims.head}}},
      {"zeroshot",
       {{"mode", std::string(zeroshot::to_string(c.mode))},
        {"support_size", c.support_size},
        {"malware_support_size", c.malware_support_size},
        {"threshold", c.threshold},
        {"fixed_support", c.fixed_support}}},
      {"sweep", {{"lo", c.sweep.lo}, {"hi", c.sweep.hi}, {"step", c.sweep.step}}},
  };
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace voltron::cli
