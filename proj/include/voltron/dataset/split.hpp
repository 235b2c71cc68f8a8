#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/dataset/manifest.hpp"
#include "voltron/numerics/rng.hpp"

namespace voltron::data {

/// Train/test/support partition of a cleaned manifest.
struct SplitSpec {
  std::string strategy;  // family | five-fold | time
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  int fold = -1;
  std::optional<std::string> cutoff;
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> support;          // benign
  std::vector<std::string> support_malware;  // few-shot only, drawn from test families
  std::vector<std::string> train_families;
  std::vector<std::string> test_families;

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Checks the split invariants against the manifest: id sets pairwise
/// disjoint and known, no malware family on both sides, benign-only support,
/// malware support from test families. Returns the first violation.
inline std::optional<std::string> check_split(const SplitSpec& s, const Manifest& m) {
  std::map<std::string, int> owner;
  const std::vector<const std::vector<std::string>*> sides{&s.train, &s.test, &s.support, &s.support_malware};
  const char* names[] = {"train", "test", "support", "support_malware"};
  for (int k = 0; k < 4; ++k) {
    for (const auto& id : *sides[k]) {
      if (!m.find(id)) return std::string(names[k]) + " id '" + id + "' is not in the manifest";
      auto [it, fresh] = owner.emplace(id, k);
      if (!fresh) return "id '" + id + "' appears in both " + names[it->second] + " and " + names[k];
    }
  }
  std::set<std::string> train_fams, test_fams;
  for (const auto& id : s.train)
    if (const auto* e = m.find(id); e->label == Label::malware) train_fams.insert(family_key(*e));
  for (const auto& id : s.test)
    if (const auto* e = m.find(id); e->label == Label::malware) test_fams.insert(family_key(*e));
  if (s.strategy != "time") {
    for (const auto& f : test_fams)
      if (train_fams.count(f)) return "malware family '" + f + "' is on both sides";
  }
  for (const auto& id : s.support)
    if (m.find(id)->label != Label::benign) return "support id '" + id + "' is not benign";
  for (const auto& id : s.support_malware) {
    const auto* e = m.find(id);
    if (e->label != Label::malware) return "malware support id '" + id + "' is not malware";
    if (s.strategy != "time" && train_fams.count(family_key(*e)))
      return "malware support id '" + id + "' belongs to a training family";
  }
  return std::nullopt;
}

inline void require_valid_split(const SplitSpec& s, const Manifest& m) {
  if (auto err = check_split(s, m)) throw ValidationError("invalid split: " + *err);
}

namespace detail {

inline std::vector<std::string> ids_where(const Manifest& m, Label l) {
  std::vector<std::string> out;
  for (const auto& e : m.entries())
    if (e.label == l) out.push_back(e.app_id);
  std::sort(out.begin(), out.end());
  return out;
}

/// Withholds `support` benign ids, then sends round(fraction · rest) to test.
inline void split_benign(std::vector<std::string> benign, std::size_t support, double fraction, Rng& rng,
                         SplitSpec& s) {
  if (benign.size() < support + 2) {
    throw ValidationError("cannot withhold " + std::to_string(support) + " benign support samples from " +
                          std::to_string(benign.size()) + " and keep both sides non-empty");
  }
  rng.shuffle(benign);
  s.support.assign(benign.begin(), benign.begin() + static_cast<std::ptrdiff_t>(support));
  const std::size_t rest = benign.size() - support;
  std::size_t n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rest)));
  n_test = std::clamp<std::size_t>(n_test, 1, rest - 1);
  s.test.insert(s.test.end(), benign.begin() + static_cast<std::ptrdiff_t>(support),
                benign.begin() + static_cast<std::ptrdiff_t>(support + n_test));
  s.train.insert(s.train.end(), benign.begin() + static_cast<std::ptrdiff_t>(support + n_test), benign.end());
}

inline void assign_malware(const Manifest& m, const std::set<std::string>& test_fams, SplitSpec& s) {
  for (const auto& e : m.entries()) {
    if (e.label != Label::malware) continue;
    (test_fams.count(family_key(e)) ? s.test : s.train).push_back(e.app_id);
  }
  for (const auto& [f, n] : m.family_counts()) (test_fams.count(f) ? s.test_families : s.train_families).push_back(f);
}

inline void withhold_malware_support(std::size_t count, Rng& rng, const Manifest& m, SplitSpec& s) {
  if (count == 0) return;
  std::vector<std::string> pool;
  for (const auto& id : s.test)
    if (m.find(id)->label == Label::malware) pool.push_back(id);
  if (pool.size() <= count) {
    throw ValidationError("cannot withhold " + std::to_string(count) + " malware support samples from " +
                          std::to_string(pool.size()) + " test-family samples");
  }
  std::sort(pool.begin(), pool.end());
  std::set<std::string> picked;
  for (auto i : rng.sample_without_replacement(pool.size(), count)) picked.insert(pool[i]);
  s.support_malware.assign(picked.begin(), picked.end());
  std::erase_if(s.test, [&](const std::string& id) { return picked.count(id) > 0; });
}

inline void finish(SplitSpec& s) {
  for (auto* v : {&s.train, &s.test, &s.support, &s.support_malware}) std::sort(v->begin(), v->end());
}

}  // namespace detail

/// Which families go to the test side. Largest family first, each family that
/// still fits under the target is taken; once nothing fits, the smallest
/// remaining family is added (overshooting by at most one family). At least
/// one family always stays on the training side.
inline std::set<std::string> choose_test_families(const std::map<std::string, std::size_t>& counts,
                                                  double fraction) {
  std::vector<std::pair<std::string, std::size_t>> fams(counts.begin(), counts.end());
  std::stable_sort(fams.begin(), fams.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t total_malware = 0;
  for (const auto& [f, n] : fams) total_malware += n;
  const double target = fraction * static_cast<double>(total_malware);

  std::set<std::string> test;
  double held = 0.0;
  std::vector<bool> used(fams.size(), false);
  while (held < target && test.size() + 1 < fams.size()) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < fams.size() && !pick; ++i)
      if (!used[i] && held + static_cast<double>(fams[i].second) <= target) pick = i;
    bool overshoot = false;
    if (!pick) {
      for (std::size_t i = fams.size(); i-- > 0;) {
        if (!used[i]) {
          pick = i;
          break;
        }
      }
      overshoot = true;
    }
    used[*pick] = true;
    test.insert(fams[*pick].first);
    held += static_cast<double>(fams[*pick].second);
    if (overshoot) break;
  }
  return test;
}

/// Family-disjoint split: whole malware families go to test, benign samples
/// are split at the same fraction after withholding the support pool.
inline SplitSpec family_disjoint_split(const Manifest& m, double test_fraction, std::size_t support_size,
                                       std::uint64_t seed, std::size_t malware_support = 0) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test fraction must lie in (0, 1)");
  const auto counts = m.family_counts();
  if (counts.size() < 2) throw ValidationError("family-disjoint split needs at least two malware families");
  SplitSpec s;
  s.strategy = "family";
  s.seed = seed;
  s.test_fraction = test_fraction;
  detail::assign_malware(m, choose_test_families(counts, test_fraction), s);
  Rng rng(derive_seed(seed, "split-benign"));
  detail::split_benign(detail::ids_where(m, Label::benign), support_size, test_fraction, rng, s);
  Rng mrng(derive_seed(seed, "split-malware-support"));
  detail::withhold_malware_support(malware_support, mrng, m, s);
  detail::finish(s);
  require_valid_split(s, m);
  return s;
}

/// Greedy balancing: families by descending size, each into the currently
/// lightest fold. Returns the family names of each fold.
inline std::vector<std::vector<std::string>> balance_families(const std::map<std::string, std::size_t>& counts,
                                                              std::size_t folds) {
  std::vector<std::pair<std::string, std::size_t>> fams(counts.begin(), counts.end());
  std::stable_sort(fams.begin(), fams.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::vector<std::string>> out(folds);
  std::vector<std::size_t> load(folds, 0);
  for (const auto& [f, n] : fams) {
    const auto k = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    out[k].push_back(f);
    load[k] += n;
  }
  return out;
}

/// Five family-disjoint folds; fold k tests on the k-th family group.
inline std::vector<SplitSpec> five_fold_families(const Manifest& m, std::size_t support_size, std::uint64_t seed,
                                                 double benign_fraction = 0.2) {
  const auto counts = m.family_counts();
  if (counts.size() < 5) throw ValidationError("five-fold split needs at least five malware families");
  const auto groups = balance_families(counts, 5);
  std::vector<SplitSpec> out;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    SplitSpec s;
    s.strategy = "five-fold";
    s.seed = seed;
    s.fold = static_cast<int>(k);
    s.test_fraction = benign_fraction;
    detail::assign_malware(m, std::set<std::string>(groups[k].begin(), groups[k].end()), s);
    Rng rng(derive_seed(derive_seed(seed, "fold"), k));
    detail::split_benign(detail::ids_where(m, Label::benign), support_size, benign_fraction, rng, s);
    detail::finish(s);
    require_valid_split(s, m);
    out.push_back(std::move(s));
  }
  return out;
}

/// Train on entries up to and including the cutoff date, test on later ones.
/// The benign support pool comes out of the training side.
inline SplitSpec time_split(const Manifest& m, const std::string& cutoff, std::size_t support_size,
                            std::uint64_t seed) {
  if (!is_iso_date(cutoff)) throw ValidationError("cutoff '" + cutoff + "' is not an ISO-8601 date");
  SplitSpec s;
  s.strategy = "time";
  s.seed = seed;
  s.cutoff = cutoff;
  std::vector<std::string> train_benign;
  std::set<std::string> train_fams, test_fams;
  for (const auto& e : m.entries()) {
    if (!e.timestamp) throw ValidationError("time split: entry '" + e.app_id + "' has no timestamp");
    const bool before = *e.timestamp <= cutoff;
    if (before && e.label == Label::benign) {
      train_benign.push_back(e.app_id);
    } else {
      (before ? s.train : s.test).push_back(e.app_id);
    }
    if (e.label == Label::malware) (before ? train_fams : test_fams).insert(family_key(e));
  }
  if (train_benign.size() + s.train.size() == 0 || s.test.empty())
    throw ValidationError("time split: one side of the cutoff is empty");
  if (train_benign.size() < support_size + 1)
    throw ValidationError("time split: not enough training-side benign samples for the support pool");
  std::sort(train_benign.begin(), train_benign.end());
  Rng rng(derive_seed(seed, "split-time-support"));
  rng.shuffle(train_benign);
  s.support.assign(train_benign.begin(), train_benign.begin() + static_cast<std::ptrdiff_t>(support_size));
  s.train.insert(s.train.end(), train_benign.begin() + static_cast<std::ptrdiff_t>(support_size), train_benign.end());
  s.train_families.assign(train_fams.begin(), train_fams.end());
  s.test_families.assign(test_fams.begin(), test_fams.end());
  detail::finish(s);
  require_valid_split(s, m);
  return s;
}

// --- split files -----------------------------------------------------------------

inline constexpr const char* kSplitFormat = "voltron-split/1";

inline nlohmann::json to_json(const SplitSpec& s) {
  nlohmann::json j = {{"format", kSplitFormat},
                      {"strategy", s.strategy},
                      {"seed", s.seed},
                      {"test_fraction", s.test_fraction},
                      {"fold", s.fold}};
  j["cutoff"] = s.cutoff ? nlohmann::json(*s.cutoff) : nlohmann::json(nullptr);
  j["train_families"] = s.train_families;
  j["test_families"] = s.test_families;
  j["train"] = s.train;
  j["test"] = s.test;
  j["support"] = s.support;
  j["support_malware"] = s.support_malware;
  return j;
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
  SplitSpec s;
  try {
    if (j.value("format", "") != kSplitFormat)
      throw ParseError("unsupported split format '" + j.value("format", "") + "'");
    s.strategy = j.at("strategy").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.test_fraction = j.at("test_fraction").get<double>();
    s.fold = j.at("fold").get<int>();
    if (!j.at("cutoff").is_null()) s.cutoff = j["cutoff"].get<std::string>();
    s.train_families = j.at("train_families").get<std::vector<std::string>>();
    s.test_families = j.at("test_families").get<std::vector<std::string>>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.support = j.at("support").get<std::vector<std::string>>();
    s.support_malware = j.at("support_malware").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
  return s;
}

inline SplitSpec read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read split '" + path + "'");
  try {
    return split_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("split file '" + path + "': " + e.what());
  }
}

}  // namespace voltron::data
