#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "voltron/callgraph/graph.hpp"
#include "voltron/dataset/split.hpp"
#include "voltron/dataset/synth.hpp"

using namespace voltron;
using namespace voltron::data;

namespace {

ManifestEntry entry(std::string id, Label l, std::optional<std::string> fam = std::nullopt,
                    std::optional<std::string> ts = std::nullopt, std::optional<std::string> pkg = std::nullopt) {
  ManifestEntry e;
  e.app_id = std::move(id);
  e.label = l;
  e.family = std::move(fam);
  e.timestamp = std::move(ts);
  e.package_name = std::move(pkg);
  return e;
}

// `benign` benign apps plus malware families with the given sizes.
Manifest family_manifest(const std::map<std::string, std::size_t>& fams, std::size_t benign) {
  Manifest m;
  for (std::size_t i = 0; i < benign; ++i) m.add(entry("b" + std::to_string(i), Label::benign));
  for (const auto& [f, n] : fams)
    for (std::size_t i = 0; i < n; ++i) m.add(entry(f + "-" + std::to_string(i), Label::malware, f));
  return clean_manifest(m);
}

std::size_t malware_in(const std::vector<std::string>& ids, const Manifest& m) {
  std::size_t n = 0;
  for (const auto& id : ids) n += m.find(id)->label == Label::malware;
  return n;
}

}  // namespace

TEST(CleanManifest, Rules) {
  Manifest raw;
  raw.add(entry("a", Label::benign));
  raw.add(entry("b", Label::indefinite));
  raw.add(entry("c", Label::benign));
  raw.add(entry("c", Label::malware, "f"));
  raw.add(entry("v2", Label::malware, "f", std::nullopt, "com.x"));
  raw.add(entry("v1", Label::malware, "f", std::nullopt, "com.x"));
  raw.add(entry("v3", Label::malware, "f", std::nullopt, "com.x"));
  const auto m = clean_manifest(raw);
  std::vector<std::string> ids;
  for (const auto& e : m.entries()) ids.push_back(e.app_id);
  EXPECT_EQ(ids, (std::vector<std::string>{"a", "v1"}));
  EXPECT_EQ(clean_manifest(m), m);

  Manifest none;
  none.add(entry("x", Label::indefinite));
  EXPECT_THROW(clean_manifest(none), ValidationError);
}

TEST(CleanManifest, PackageDedupMatchesGroupingOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Manifest raw;
    const std::size_t n = 5 + rng.index(40);
    for (std::size_t i = 0; i < n; ++i) {
      auto e = entry("id" + std::to_string(rng.index(60)), rng.uniform() < 0.5 ? Label::benign : Label::malware, "f");
      if (rng.uniform() < 0.8) e.package_name = "p" + std::to_string(rng.index(8));
      raw.add(e);
    }
    // oracle: labels per id, then the smallest surviving id per package
    std::map<std::string, std::set<Label>> labels;
    std::map<std::string, std::optional<std::string>> pkg;
    for (const auto& e : raw.entries()) {
      labels[e.app_id].insert(e.label);
      pkg.emplace(e.app_id, e.package_name);
    }
    std::set<std::string> expect;
    std::set<std::string> used;
    for (const auto& [id, ls] : labels) {
      if (ls.size() > 1) continue;
      if (pkg[id] && !used.insert(*pkg[id]).second) continue;
      expect.insert(id);
    }
    if (expect.empty()) continue;
    const auto m = clean_manifest(raw);
    std::set<std::string> got;
    for (const auto& e : m.entries()) got.insert(e.app_id);
    EXPECT_EQ(got, expect);
    EXPECT_EQ(clean_manifest(m), m);
  }
}

TEST(ManifestIo, RoundTripAndErrors) {
  Manifest m;
  m.add(entry("a", Label::benign, std::nullopt, "2020-01-02", "com.a"));
  m.add(entry("b", Label::malware, "fam", "2021-05-06"));
  std::stringstream ss;
  write_manifest(ss, m);
  EXPECT_EQ(read_manifest(ss), m);
  std::stringstream bad_date(R"({"app_id":"a","label":"benign","timestamp":"2020-13-01"})");
  EXPECT_THROW(read_manifest(bad_date), ParseError);
  std::stringstream bad_label("\n" R"({"app_id":"a","label":"maybe"})");
  try {
    read_manifest(bad_label);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(FamilySplit, GreedyExample) {
  EXPECT_EQ(choose_test_families({{"A", 80}, {"B", 10}, {"C", 10}}, 0.2), (std::set<std::string>{"B", "C"}));
  const auto m = family_manifest({{"A", 80}, {"B", 10}, {"C", 10}}, 100);
  const auto s = family_disjoint_split(m, 0.2, 30, 7);
  EXPECT_EQ(s.test_families, (std::vector<std::string>{"B", "C"}));
  EXPECT_EQ(s.train_families, (std::vector<std::string>{"A"}));
  EXPECT_EQ(malware_in(s.test, m), 20u);
  EXPECT_EQ(s.support.size(), 30u);
  // 70 benign after the support pool, 20% of them to test
  EXPECT_EQ(s.test.size() - 20, 14u);
  EXPECT_FALSE(check_split(s, m).has_value());
}

TEST(FamilySplit, Errors) {
  EXPECT_THROW(family_disjoint_split(family_manifest({{"A", 10}}, 50), 0.2, 5, 1), ValidationError);
  const auto m = family_manifest({{"A", 10}, {"B", 5}}, 10);
  EXPECT_THROW(family_disjoint_split(m, 0.2, 9, 1), ValidationError);
  EXPECT_THROW(family_disjoint_split(m, 1.0, 2, 1), ValidationError);
}

// Oracle for the greedy rule, written as a search over the sorted list.
std::set<std::string> greedy_oracle(const std::map<std::string, std::size_t>& counts, double fraction) {
  std::vector<std::pair<std::size_t, std::string>> v;
  std::size_t total = 0;
  for (const auto& [f, n] : counts) {
    v.push_back({n, f});
    total += n;
  }
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const double target = fraction * total;
  std::set<std::string> out;
  std::size_t held = 0;
  std::vector<bool> used(v.size());
  while (held < target && out.size() + 1 < v.size()) {
    int pick = -1;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!used[i] && held + v[i].first <= target) {
        pick = static_cast<int>(i);
        break;
      }
    if (pick < 0) {
      for (std::size_t i = v.size(); i-- > 0;)
        if (!used[i]) {
          used[i] = true;
          out.insert(v[i].second);
          break;
        }
      break;
    }
    used[pick] = true;
    out.insert(v[pick].second);
    held += v[pick].first;
  }
  return out;
}

TEST(FamilySplit, RandomManifestsStayDisjointAndNearTarget) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, std::size_t> fams;
    const std::size_t k = 2 + rng.index(12);
    std::size_t total = 0, largest = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t n = 1 + rng.index(60);
      fams["f" + std::to_string(i)] = n;
      total += n;
      largest = std::max(largest, n);
    }
    const double fraction = 0.1 + 0.5 * rng.uniform();
    const auto chosen = choose_test_families(fams, fraction);
    EXPECT_EQ(chosen, greedy_oracle(fams, fraction));
    EXPECT_GE(chosen.size(), 1u);
    EXPECT_LT(chosen.size(), k);
    std::size_t held = 0;
    for (const auto& f : chosen) held += fams[f];
    EXPECT_LE(static_cast<double>(held), fraction * total + largest);

    const auto m = family_manifest(fams, 40 + rng.index(40));
    const auto s = family_disjoint_split(m, fraction, 10, trial, 2);
    EXPECT_FALSE(check_split(s, m).has_value());
    EXPECT_EQ(s.train.size() + s.test.size() + s.support.size() + s.support_malware.size(), m.size());
  }
}

TEST(FiveFold, SingletonExample) {
  const std::map<std::string, std::size_t> fams{{"a", 10}, {"b", 9}, {"c", 8}, {"d", 2}, {"e", 1}};
  const auto groups = balance_families(fams, 5);
  std::multiset<std::size_t> loads;
  for (const auto& g : groups) {
    ASSERT_EQ(g.size(), 1u);
    loads.insert(fams.at(g[0]));
  }
  EXPECT_EQ(*loads.rbegin() - *loads.begin(), 9u);

  const auto m = family_manifest(fams, 60);
  const auto folds = five_fold_families(m, 10, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::string> seen;
  for (const auto& s : folds) {
    EXPECT_FALSE(check_split(s, m).has_value());
    ASSERT_EQ(s.test_families.size(), 1u);
    EXPECT_TRUE(seen.insert(s.test_families[0]).second);
  }
  EXPECT_NE(folds[0].support, folds[1].support);
}

TEST(FiveFold, EqualFamiliesBalancePerfectly) {
  const auto groups = balance_families({{"a", 7}, {"b", 7}, {"c", 7}, {"d", 7}, {"e", 7}}, 5);
  for (const auto& g : groups) EXPECT_EQ(g.size(), 1u);
}

TEST(FiveFold, SpreadBoundedByLargestFamily) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, std::size_t> fams;
    const std::size_t k = 5 + rng.index(40);
    std::size_t largest = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t n = 1 + rng.index(200);
      fams["f" + std::to_string(i)] = n;
      largest = std::max(largest, n);
    }
    const auto groups = balance_families(fams, 5);
    std::vector<std::size_t> loads;
    std::set<std::string> all;
    for (const auto& g : groups) {
      std::size_t l = 0;
      for (const auto& f : g) {
        l += fams[f];
        EXPECT_TRUE(all.insert(f).second);
      }
      loads.push_back(l);
    }
    EXPECT_EQ(all.size(), k);
    EXPECT_LE(*std::max_element(loads.begin(), loads.end()) - *std::min_element(loads.begin(), loads.end()), largest);
  }
}

TEST(FiveFold, NeedsFiveFamilies) {
  EXPECT_THROW(five_fold_families(family_manifest({{"a", 3}, {"b", 3}, {"c", 3}, {"d", 3}}, 30), 5, 1),
               ValidationError);
}

TEST(TimeSplit, Examples) {
  Manifest m;
  for (int i = 0; i < 6; ++i) m.add(entry("b19-" + std::to_string(i), Label::benign, std::nullopt, "2019-03-0" + std::to_string(i + 1)));
  m.add(entry("m19", Label::malware, "f", "2019-07-01"));
  m.add(entry("b21", Label::benign, std::nullopt, "2021-01-01"));
  m.add(entry("m21", Label::malware, "f", "2021-02-01"));
  m = clean_manifest(m);
  const auto s = time_split(m, "2020-12-31", 2, 1);
  EXPECT_EQ(s.test, (std::vector<std::string>{"b21", "m21"}));
  EXPECT_EQ(s.train.size() + s.support.size(), 7u);
  EXPECT_EQ(s.support.size(), 2u);
  for (const auto& id : s.support) EXPECT_EQ(id.substr(0, 3), "b19");
  EXPECT_FALSE(check_split(s, m).has_value());
  EXPECT_THROW(time_split(m, "2018-12-31", 2, 1), ValidationError);
  EXPECT_THROW(time_split(m, "2031-12-31", 2, 1), ValidationError);
  EXPECT_THROW(time_split(m, "31/12/2020", 2, 1), ValidationError);
}

TEST(TimeSplit, SidesMatchDateFilter) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    Manifest m;
    for (int i = 0; i < 80; ++i) {
      char ts[16];
      std::snprintf(ts, sizeof ts, "20%02d-%02d-%02d", 18 + static_cast<int>(rng.index(5)),
                    1 + static_cast<int>(rng.index(12)), 1 + static_cast<int>(rng.index(28)));
      const bool mal = rng.uniform() < 0.4;
      m.add(entry("a" + std::to_string(i), mal ? Label::malware : Label::benign,
                  mal ? std::optional<std::string>("f" + std::to_string(rng.index(4))) : std::nullopt, ts));
    }
    m = clean_manifest(m);
    const std::string cutoff = "2020-06-30";
    std::set<std::string> before, after;
    for (const auto& e : m.entries()) (*e.timestamp <= cutoff ? before : after).insert(e.app_id);
    const auto s = time_split(m, cutoff, 5, trial);
    std::set<std::string> train(s.train.begin(), s.train.end());
    train.insert(s.support.begin(), s.support.end());
    EXPECT_EQ(train, before);
    EXPECT_EQ(std::set<std::string>(s.test.begin(), s.test.end()), after);
  }
}

TEST(CheckSplit, CatchesViolations) {
  const auto m = family_manifest({{"A", 10}, {"B", 10}, {"C", 5}}, 40);
  const auto good = family_disjoint_split(m, 0.3, 5, 1);
  ASSERT_FALSE(check_split(good, m).has_value());

  auto overlap = good;
  overlap.test.push_back(overlap.train.front());
  EXPECT_TRUE(check_split(overlap, m).has_value());

  auto leak = good;
  for (const auto& id : good.train) {
    if (m.find(id)->label == Label::malware) {
      leak.train.erase(std::find(leak.train.begin(), leak.train.end(), id));
      leak.test.push_back(id);
      break;
    }
  }
  EXPECT_TRUE(check_split(leak, m).has_value());

  auto bad_support = good;
  const auto mal = std::find_if(bad_support.test.begin(), bad_support.test.end(),
                                [&](const std::string& id) { return m.find(id)->label == Label::malware; });
  ASSERT_NE(mal, bad_support.test.end());
  bad_support.support.push_back(*mal);
  bad_support.test.erase(mal);
  EXPECT_TRUE(check_split(bad_support, m).has_value());

  auto unknown = good;
  unknown.train.push_back("nope");
  EXPECT_TRUE(check_split(unknown, m).has_value());
  EXPECT_THROW(require_valid_split(unknown, m), ValidationError);
}

TEST(SplitIo, RoundTrip) {
  const auto m = family_manifest({{"A", 10}, {"B", 10}, {"C", 5}}, 40);
  const auto s = family_disjoint_split(m, 0.3, 5, 1, 3);
  EXPECT_EQ(split_from_json(nlohmann::json::parse(to_json(s).dump())), s);
  auto doc = to_json(s);
  doc["format"] = "other";
  EXPECT_THROW(split_from_json(doc), ParseError);
}

TEST(Synth, CountsAndDeterminism) {
  SynthConfig cfg;
  cfg.seed = 11;
  const auto a = synth_generate(cfg);
  std::size_t mal = 0;
  std::map<std::string, std::size_t> fams;
  for (const auto& e : a.manifest.entries()) {
    if (e.label == Label::malware) {
      ++mal;
      ++fams[*e.family];
    }
  }
  EXPECT_EQ(mal, 300u);
  EXPECT_EQ(fams.size(), 6u);
  for (const auto& [f, n] : fams) EXPECT_EQ(n, 50u);
  EXPECT_EQ(a.listings.size(), 600u);
  EXPECT_EQ(a.mapping_apis.size() + a.extension_apis.size(), 60u);

  const auto b = synth_generate(cfg);
  std::stringstream sa, sb;
  write_manifest(sa, a.manifest);
  write_manifest(sb, b.manifest);
  for (const auto& l : a.listings) sa << cg::to_json(l).dump() << "\n";
  for (const auto& l : b.listings) sb << cg::to_json(l).dump() << "\n";
  EXPECT_EQ(sa.str(), sb.str());
  cfg.seed = 12;
  EXPECT_NE(synth_generate(cfg).benign_motifs, a.benign_motifs);
}

TEST(Synth, MotifsAreUniqueAndDistinctInside) {
  SynthConfig cfg;
  cfg.seed = 3;
  const auto c = synth_generate(cfg);
  std::set<Motif> all(c.benign_motifs.begin(), c.benign_motifs.end());
  std::size_t count = c.benign_motifs.size();
  for (const auto& fam : c.family_motifs) {
    all.insert(fam.begin(), fam.end());
    count += fam.size();
  }
  EXPECT_EQ(all.size(), count);
  for (const auto& m : all) {
    EXPECT_EQ(std::set<std::size_t>(m.begin(), m.end()).size(), m.size());
    EXPECT_GE(m.size(), cfg.motif_min);
    EXPECT_LE(m.size(), cfg.motif_max);
  }
  for (const auto& m : c.benign_motifs)
    for (auto api : m) EXPECT_LT(api, cfg.benign_size());
}

TEST(Synth, NoiselessSingleMotifGivesItsPath) {
  SynthConfig cfg;
  cfg.benign_motifs = 1;
  cfg.motif_min = cfg.motif_max = 3;
  cfg.noise = 0.0;
  cfg.helper_rate = 0.0;
  cfg.benign_apps = 20;
  cfg.seed = 5;
  const auto c = synth_generate(cfg);
  cg::ApiVocab vocab;
  for (const auto& a : c.mapping_apis) vocab.insert(a, cg::Provenance::mapping_file);
  for (const auto& a : c.extension_apis) vocab.insert(a, cg::Provenance::extension);
  const auto& motif = c.benign_motifs[0];
  const std::set<cg::Edge> expect{{motif[0], motif[1]}, {motif[1], motif[2]}};
  for (std::size_t i = 0; i < cfg.benign_apps; ++i) {
    const auto& l = c.listings[i];
    ASSERT_EQ(l.label, Label::benign);
    const auto g = cg::build_app_graph(l, vocab);
    EXPECT_EQ(std::set<cg::Edge>(g.edges.begin(), g.edges.end()), expect) << l.app_id;
    EXPECT_EQ(g.nodes.size(), 3u);
  }
}

TEST(Synth, RejectsInconsistentConfig) {
  SynthConfig cfg;
  cfg.motif_min = 7;
  cfg.motif_max = 5;
  EXPECT_THROW(synth_generate(cfg), ValidationError);
  cfg = SynthConfig{};
  cfg.vocab_size = 8;
  EXPECT_THROW(synth_generate(cfg), ValidationError);
  cfg = SynthConfig{};
  cfg.noise = 1.5;
  EXPECT_THROW(synth_generate(cfg), ValidationError);
}
