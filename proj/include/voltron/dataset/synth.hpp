#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "voltron/callgraph/listing.hpp"
#include "voltron/dataset/manifest.hpp"
#include "voltron/numerics/rng.hpp"

namespace voltron::data {

struct SynthConfig {
  std::size_t vocab_size = 60;
  std::size_t benign_motifs = 8;
  std::size_t families = 6;
  std::size_t motifs_per_family = 3;
  std::size_t motif_min = 3;
  std::size_t motif_max = 6;
  std::size_t benign_apps = 300;
  std::size_t apps_per_family = 50;
  double noise = 0.05;
  std::uint64_t seed = 0;

  // Benign motifs draw from the first `benign_region` share of the
  // vocabulary; family motifs take each API from the remainder with
  // probability `family_bias`.
  double benign_region = 0.6;
  double family_bias = 0.85;
  // Share of motif instances that get their own helper method.
  double helper_rate = 0.7;
  // Share of the vocabulary listed in the extension file instead of the
  // mapping file.
  double extension_share = 0.15;

  void validate() const {
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ValidationError(std::string("synth: ") + what + " must be positive");
    };
    positive(vocab_size, "vocabulary size");
    positive(benign_motifs, "benign motif count");
    positive(families, "family count");
    positive(motifs_per_family, "motifs per family");
    positive(motif_min, "motif length");
    positive(benign_apps, "benign app count");
    positive(apps_per_family, "apps per family");
    if (motif_max < motif_min) throw ValidationError("synth: motif length range is inverted");
    if (!(noise >= 0.0 && noise < 1.0)) throw ValidationError("synth: noise probability must lie in [0, 1)");
    for (double p : {benign_region, family_bias, helper_rate, extension_share}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("synth: rates must lie in [0, 1]");
    }
    const auto lower = benign_size();
    if (lower < motif_max || vocab_size - lower < motif_max)
      throw ValidationError("synth: vocabulary too small for the motif length range");
  }

  std::size_t benign_size() const {
    return static_cast<std::size_t>(benign_region * static_cast<double>(vocab_size));
  }
};

using Motif = std::vector<std::size_t>;  // vocabulary positions

struct SynthCorpus {
  std::vector<std::string> mapping_apis;
  std::vector<std::string> extension_apis;
  std::vector<Motif> benign_motifs;
  std::vector<std::vector<Motif>> family_motifs;
  std::vector<cg::CallListing> listings;
  Manifest manifest;

  std::string api(std::size_t i) const {
    return i < mapping_apis.size() ? mapping_apis[i] : extension_apis.at(i - mapping_apis.size());
  }
};

inline std::string synth_family_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "family%02zu", k);
  return buf;
}

namespace detail {

inline std::string synth_api_name(std::size_t i, bool extension) {
  char buf[96];
  if (extension) {
    std::snprintf(buf, sizeof buf, "Ljavax/crypto/Synth%02zu;->op%zu", i, i);
  } else {
    std::snprintf(buf, sizeof buf, "Landroid/synth/Sensitive%02zu;->call%zu", i, i);
  }
  return buf;
}

inline std::string iso_date(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Distinct motifs; APIs within one motif are distinct too.
inline std::vector<Motif> draw_motifs(std::size_t count, std::size_t lo, std::size_t hi,
                                      const std::vector<std::size_t>& primary,
                                      const std::vector<std::size_t>& secondary, double bias,
                                      std::set<Motif>& seen, Rng& rng) {
  std::vector<Motif> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 10000 * count) throw ValidationError("synth: cannot draw enough distinct motifs");
    const auto len = static_cast<std::size_t>(rng.between(static_cast<int>(lo), static_cast<int>(hi)));
    Motif m;
    while (m.size() < len) {
      const auto& pool = secondary.empty() || rng.bernoulli(bias) ? primary : secondary;
      const auto api = pool[rng.index(pool.size())];
      if (std::find(m.begin(), m.end(), api) == m.end()) m.push_back(api);
    }
    if (seen.insert(m).second) out.push_back(std::move(m));
  }
  return out;
}

inline const char* kLibraryCalls[] = {
    "Ljava/lang/StringBuilder;->append",
    "Ljava/lang/String;->length",
    "Landroid/util/Log;->d",
    "Lcom/google/gson/Gson;->toJson",
    "Ljava/util/ArrayList;->add",
};

inline void push_library_noise(std::vector<cg::CallItem>& calls, Rng& rng) {
  if (rng.bernoulli(0.3)) {
    calls.push_back({cg::CallKind::api, kLibraryCalls[rng.index(std::size(kLibraryCalls))]});
  }
}

/// One application: each motif instance lands either in its own helper
/// method called from `main` or inline in `main`. Library calls, an
/// unresolved external call and an occasional passthrough utility method are
/// mixed in; they never contribute nodes.
inline std::vector<cg::MethodListing> synth_methods(const std::vector<const Motif*>& motifs,
                                                    const SynthConfig& cfg, const SynthCorpus& c, Rng& rng) {
  std::vector<cg::MethodListing> methods;
  cg::MethodListing main{"main", {}};
  auto emit_motif = [&](const Motif& m, std::vector<cg::CallItem>& calls) {
    for (auto api : m) {
      push_library_noise(calls, rng);
      calls.push_back({cg::CallKind::api, c.api(api)});
      if (rng.bernoulli(cfg.noise)) calls.push_back({cg::CallKind::api, c.api(rng.index(cfg.vocab_size))});
    }
  };
  for (std::size_t i = 0; i < motifs.size(); ++i) {
    if (rng.bernoulli(cfg.helper_rate)) {
      cg::MethodListing helper{"helper" + std::to_string(i), {}};
      emit_motif(*motifs[i], helper.calls);
      main.calls.push_back({cg::CallKind::method, helper.name});
      methods.push_back(std::move(helper));
    } else {
      emit_motif(*motifs[i], main.calls);
    }
    if (rng.bernoulli(0.2)) main.calls.push_back({cg::CallKind::method, "Lexternal/Sdk;->init"});
    if (rng.bernoulli(0.15)) main.calls.push_back({cg::CallKind::method, "util"});
  }
  methods.push_back({"util", {{cg::CallKind::api, kLibraryCalls[0]}, {cg::CallKind::api, kLibraryCalls[1]}}});
  methods.insert(methods.begin(), std::move(main));
  return methods;
}

}  // namespace detail

/// Motif-grammar corpus: benign apps chain 2–5 benign motifs, malware of
/// family k adds 1–3 of family k's motifs to 1–3 benign ones.
inline SynthCorpus synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus c;
  const auto n_ext = std::min<std::size_t>(
      cfg.vocab_size - 1, static_cast<std::size_t>(cfg.extension_share * static_cast<double>(cfg.vocab_size)));
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    const bool ext = i >= cfg.vocab_size - n_ext;
    (ext ? c.extension_apis : c.mapping_apis).push_back(detail::synth_api_name(i, ext));
  }

  const auto split = cfg.benign_size();
  std::vector<std::size_t> lower, upper;
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) (i < split ? lower : upper).push_back(i);

  Rng motif_rng(derive_seed(cfg.seed, "synth-motifs"));
  std::set<Motif> seen;
  c.benign_motifs = detail::draw_motifs(cfg.benign_motifs, cfg.motif_min, cfg.motif_max, lower, {}, 1.0, seen,
                                        motif_rng);
  for (std::size_t k = 0; k < cfg.families; ++k) {
    c.family_motifs.push_back(detail::draw_motifs(cfg.motifs_per_family, cfg.motif_min, cfg.motif_max, upper,
                                                  lower, cfg.family_bias, seen, motif_rng));
  }

  const std::size_t total = cfg.benign_apps + cfg.families * cfg.apps_per_family;
  const auto base_seed = derive_seed(cfg.seed, "synth-app");
  const std::chrono::sys_days epoch = std::chrono::year{2018} / 1 / 1;
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng(derive_seed(base_seed, i));
    const bool benign = i < cfg.benign_apps;
    const std::size_t family = benign ? 0 : (i - cfg.benign_apps) / cfg.apps_per_family;

    std::vector<const Motif*> motifs;
    const auto nb = std::min<std::size_t>(cfg.benign_motifs, static_cast<std::size_t>(benign ? rng.between(2, 5)
                                                                                              : rng.between(1, 3)));
    for (auto j : rng.sample_without_replacement(cfg.benign_motifs, nb)) motifs.push_back(&c.benign_motifs[j]);
    if (!benign) {
      const auto nf = std::min<std::size_t>(cfg.motifs_per_family, static_cast<std::size_t>(rng.between(1, 3)));
      for (auto j : rng.sample_without_replacement(cfg.motifs_per_family, nf))
        motifs.push_back(&c.family_motifs[family][j]);
      rng.shuffle(motifs);
    }

    char id[32];
    std::snprintf(id, sizeof id, "app%05zu", i);
    cg::CallListing l;
    l.app_id = id;
    l.label = benign ? Label::benign : Label::malware;
    if (!benign) l.family = synth_family_name(family);
    l.timestamp = detail::iso_date(epoch + std::chrono::days(rng.between(0, 5 * 365 - 1)));
    l.methods = detail::synth_methods(motifs, cfg, c, rng);

    ManifestEntry e;
    e.app_id = l.app_id;
    e.package_name = "com.synth." + l.app_id;
    e.label = l.label;
    e.family = l.family;
    e.timestamp = l.timestamp;
    e.detection_ratio = benign ? 0.0 : rng.uniform(0.3, 0.9);
    c.manifest.add(std::move(e));
    c.listings.push_back(std::move(l));
  }
  return c;
}

}  // namespace voltron::data
