#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support/grad_cases.hpp"
#include "support/graph_oracle.hpp"
#include "voltron/cli/pipeline.hpp"

using namespace voltron;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  std::string name;
  bool pass;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// --- gradients -----------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  double vgae_max = 0, snn_max = 0;
  std::set<std::size_t> sizes;
  for (std::uint64_t seed = 1; seed <= 22; ++seed) {
    const std::size_t n = 2 + seed % 11;
    sizes.insert(n);
    vgae_max = std::max(vgae_max, oracle::vgae_grad_error(seed, n, 0, 150));
  }
  for (std::uint64_t seed = 1; seed <= 20; ++seed) snn_max = std::max(snn_max, oracle::snn_grad_error(seed, {}, 200));
  const double secs = seconds_since(t0);
  const bool ok = vgae_max < 1e-4 && snn_max < 1e-4 && secs < 60 && *sizes.begin() == 2 && *sizes.rbegin() == 12;
  return {"gradient correctness", ok,
          "vgae max rel err " + fmt("%.2e", vgae_max) + " (22 seeds, graphs 2..12), snn " + fmt("%.2e", snn_max) +
              " (20 seeds), " + fmt("%.1f", secs) + " s"};
}

// --- metrics -------------------------------------------------------------------

Outcome metric_reproduction() {
  const auto m = eval::metrics({4978, 145, 5178, 251});
  const std::vector<std::pair<double, std::optional<double>>> rows{
      {96.24, m.accuracy}, {95.20, m.recall}, {97.17, m.precision}, {96.17, m.f1}, {2.72, m.fpr}};
  double worst = 0;
  bool ok = true;
  for (const auto& [want, got] : rows) {
    if (!got) {
      ok = false;
      continue;
    }
    worst = std::max(worst, std::abs(100 * *got - want));
  }
  ok = ok && worst <= 0.05;
  return {"metric reproduction", ok, "max deviation " + fmt("%.4f", worst) + " pp"};
}

// --- graph construction ---------------------------------------------------------

cg::CallListing listing(std::vector<cg::MethodListing> methods) {
  cg::CallListing l;
  l.app_id = "example";
  l.label = Label::benign;
  l.methods = std::move(methods);
  return l;
}

Outcome graph_oracle() {
  using cg::CallKind;
  const auto v = oracle::numbered_vocab(3);
  auto api = [](int i) { return cg::CallItem{CallKind::api, "api" + std::to_string(i)}; };
  auto call = [](const char* m) { return cg::CallItem{CallKind::method, m}; };
  struct Example {
    cg::CallListing l;
    oracle::RefGraph expect;
    bool acyclic;
  };
  const std::vector<Example> examples{
      {listing({{"M1", {api(0), call("M2"), api(1)}}, {"M2", {api(2)}}}), {{0, 1, 2}, {{0, 2}, {2, 1}}}, true},
      {listing({{"M1", {api(0), call("M2"), api(1)}}, {"M2", {}}}), {{0, 1}, {{0, 1}}}, true},
      {listing({{"M1", {api(0), call("M1")}}}), {{0}, {{0, 0}}}, false},
  };
  std::size_t examples_ok = 0;
  for (const auto& e : examples) {
    const auto g = oracle::as_ref(cg::build_app_graph(e.l, v));
    examples_ok += g == e.expect && g == oracle::pairwise_graph(e.l, v) && (!e.acyclic || g == oracle::inline_graph(e.l, v));
  }

  Rng rng(2024);
  const auto rv = oracle::numbered_vocab(8);
  std::size_t compared = 0, mismatches = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const bool acyclic = trial % 2 == 0;
    const auto l = oracle::random_listing(rng, {8, 6, 8, acyclic});
    const auto ref = oracle::pairwise_graph(l, rv);
    if (ref.nodes.empty()) {
      try {
        cg::build_app_graph(l, rv);
        ++mismatches;
      } catch (const EmptyGraphError&) {
      }
      continue;
    }
    const auto g = oracle::as_ref(cg::build_app_graph(l, rv));
    mismatches += !(g == ref) || (acyclic && !(g == oracle::inline_graph(l, rv)));
    ++compared;
  }
  const bool ok = examples_ok == examples.size() && compared >= 200 && mismatches == 0;
  return {"graph oracle suite", ok,
          std::to_string(examples_ok) + "/3 worked examples, " + std::to_string(compared) +
              " random listings compared, " + std::to_string(mismatches) + " mismatches"};
}

// --- identities ----------------------------------------------------------------

Outcome identities() {
  std::vector<std::string> failed;
  num::Matrix<double> mu(6, 16), logvar(6, 16);
  if (vgae::kl_loss(mu, logvar) != 0.0) failed.push_back("kl");

  Rng rng(99);
  bool decode_ok = true, sym_ok = true, softmax_ok = true;
  for (int k = 0; k < 50; ++k) {
    auto z = vgae::standard_normal<double>(2 + rng.index(11), 16, rng);
    for (auto& x : z.values()) x *= 5;
    const auto p = vgae::decode(z);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) decode_ok &= std::memcmp(&p(i, j), &p(j, i), sizeof(double)) == 0;
  }
  if (!decode_ok) failed.push_back("decode");

  auto model = snn::SnnModel<double>::init(snn::SnnDims{}, 5);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    for (auto& b : model.params().value(model.bias_slot(l)).values()) b = rng.normal();
  }
  std::vector<double> a(16), b(16);
  for (int k = 0; k < 200; ++k) {
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double ab = snn::similarity<double>(model, a, b), ba = snn::similarity<double>(model, b, a);
    sym_ok &= std::memcmp(&ab, &ba, sizeof(double)) == 0;
  }
  if (!sym_ok) failed.push_back("similarity symmetry");

  for (std::size_t l = 0; l < model.layer_count(); ++l) model.params().value(model.bias_slot(l)).fill(0.0);
  if (snn::similarity<double>(model, a, a) != 0.5) failed.push_back("identical inputs");

  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::array<double, 2> logits{50 * rng.normal(), 50 * rng.normal()};
    const auto p = vgae::softmax(logits);
    worst = std::max(worst, std::abs(p[0] + p[1] - 1.0));
  }
  softmax_ok = worst <= 1e-12;
  if (!softmax_ok) failed.push_back("softmax");

  std::string detail = "kl, decode, similarity symmetry, identical-input 0.5, softmax (max dev " + fmt("%.1e", worst) + ")";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {"exact identities", failed.empty(), detail};
}

// --- protocol ------------------------------------------------------------------

data::Manifest random_manifest(Rng& rng, std::map<std::string, std::size_t>& fams) {
  data::Manifest m;
  const std::size_t k = 5 + rng.index(30);
  for (std::size_t i = 0; i < k; ++i) fams["f" + std::to_string(i)] = 1 + rng.index(120);
  for (const auto& [f, n] : fams)
    for (std::size_t i = 0; i < n; ++i) {
      data::ManifestEntry e;
      e.app_id = f + "-" + std::to_string(i);
      e.label = Label::malware;
      e.family = f;
      m.add(e);
    }
  const std::size_t benign = 60 + rng.index(200);
  for (std::size_t i = 0; i < benign; ++i) {
    data::ManifestEntry e;
    e.app_id = "b" + std::to_string(i);
    e.label = Label::benign;
    m.add(e);
  }
  return data::clean_manifest(m);
}

Outcome protocol(const fs::path& run) {
  Rng rng(7);
  std::size_t splits = 0, violations = 0, spread_breaks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, std::size_t> fams;
    const auto m = random_manifest(rng, fams);
    const std::size_t largest = std::max_element(fams.begin(), fams.end(), [](auto& x, auto& y) {
                                  return x.second < y.second;
                                })->second;

    const auto fam = data::family_disjoint_split(m, 0.1 + 0.4 * rng.uniform(), 20, trial, trial % 2 ? 5 : 0);
    violations += data::check_split(fam, m).has_value();
    ++splits;

    std::vector<std::size_t> loads;
    for (const auto& s : data::five_fold_families(m, 20, trial)) {
      violations += data::check_split(s, m).has_value();
      ++splits;
      std::size_t malware = 0;
      for (const auto& id : s.test) malware += m.find(id)->label == Label::malware;
      loads.push_back(malware);
    }
    spread_breaks += *std::max_element(loads.begin(), loads.end()) - *std::min_element(loads.begin(), loads.end()) >
                     largest;
  }

  // the split and scores stored by the end-to-end run
  const cli::Layout at{run};
  const auto manifest = data::clean_manifest(data::read_manifest(at.manifest().string()));
  violations += data::check_split(data::read_split(at.split().string()), manifest).has_value();
  ++splits;

  const auto verdicts = zeroshot::read_verdicts(at.verdicts().string());
  std::vector<double> scores;
  std::vector<Label> labels;
  for (const auto& v : verdicts) {
    scores.push_back(v.mean_benign);
    labels.push_back(eval::definite_entry(manifest, v.app_id).label);
  }
  const auto grid = eval::linear_grid(0.0, 1.0, 0.01);
  const auto curve = eval::threshold_sweep(scores, labels, grid);
  bool monotone = !verdicts.empty();
  std::set<std::size_t> prev;
  for (std::size_t i = 0; i < scores.size(); ++i) prev.insert(i);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::set<std::size_t> cur;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (zeroshot::zero_shot_decision(scores[i], grid[k]) == Label::benign) cur.insert(i);
    monotone &= std::includes(prev.begin(), prev.end(), cur.begin(), cur.end());
    monotone &= curve.points[k].predicted_benign == cur.size();
    prev = std::move(cur);
  }

  const bool ok = violations == 0 && spread_breaks == 0 && monotone;
  return {"protocol invariants", ok,
          std::to_string(splits) + " splits, " + std::to_string(violations) + " violations; five-fold spread broken on " +
              std::to_string(spread_breaks) + "/100 manifests; sweep over " + std::to_string(scores.size()) +
              " stored scores " + (monotone ? "nested" : "NOT nested")};
}

// --- end to end ----------------------------------------------------------------

struct RunResult {
  double seconds = 0;
  nlohmann::json report;
};

RunResult run_pipeline(const fs::path& config, const fs::path& out) {
  auto cfg = cli::load_config(config.string());
  cfg.paths.out = out.string();
  fs::remove_all(out);
  std::ostringstream log;
  const auto t0 = Clock::now();
  cli::Pipeline(cfg, log).run_all();
  return {seconds_since(t0), nlohmann::json::parse(slurp(cli::Layout{out}.report_json()))};
}

double metric(const nlohmann::json& report, std::size_t which, const char* key) {
  const auto& v = report.at("reports").at(which).at("metrics").at(key);
  return v.is_null() ? -1.0 : v.get<double>();
}

Outcome end_to_end(const RunResult& r) {
  const double acc = metric(r.report, 0, "accuracy"), rec = metric(r.report, 0, "recall");
  const bool ok = r.seconds < 300 && acc >= 0.90 && rec >= 0.85;
  return {"end-to-end synthetic zero-shot", ok,
          "accuracy " + fmt("%.4f", acc) + ", recall " + fmt("%.4f", rec) + ", " + fmt("%.1f", r.seconds) + " s"};
}

Outcome ablation(const RunResult& r) {
  const double voltron = metric(r.report, 0, "recall"), baseline = metric(r.report, 1, "recall");
  return {"ablation direction", voltron >= 0 && baseline >= 0 && voltron >= baseline,
          "zero-shot recall " + fmt("%.4f", voltron) + " vs vgae-only " + fmt("%.4f", baseline)};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  const cli::Layout x{a}, y{b};
  std::vector<std::pair<fs::path, fs::path>> files{
      {x.vgae_model(), y.vgae_model()}, {x.snn_model(), y.snn_model()},   {x.embeddings(), y.embeddings()},
      {x.split(), y.split()},           {x.verdicts(), y.verdicts()},     {x.vgae_predictions(), y.vgae_predictions()},
      {x.report_json(), y.report_json()}, {x.report_txt(), y.report_txt()}, {x.sweep_csv(), y.sweep_csv()}};
  std::vector<std::string> differ;
  for (const auto& [p, q] : files)
    if (!fs::exists(p) || slurp(p) != slurp(q)) differ.push_back(p.filename().string());
  std::string detail = std::to_string(files.size()) + " artifacts byte-identical across two runs";
  if (!differ.empty()) {
    detail = "differ:";
    for (const auto& d : differ) detail += " " + d;
  }
  return {"determinism", differ.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltron acceptance suite"};
  std::string workdir = "acceptance-runs";
  std::string config = std::string(VOLTRON_SOURCE_DIR) + "/configs/synthetic.json";
  app.add_option("--workdir", workdir, "scratch directory for pipeline runs");
  app.add_option("--config", config, "end-to-end run configuration");
  CLI11_PARSE(app, argc, argv);

  std::vector<Outcome> out;
  auto guarded = [&](const std::string& name, auto f) {
    try {
      out.push_back(f());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("error: ") + e.what()});
    }
    const auto& o = out.back();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << o.name << ": " << o.detail << std::endl;
  };

  guarded("gradient correctness", gradients);
  guarded("metric reproduction", metric_reproduction);
  guarded("graph oracle suite", graph_oracle);
  guarded("exact identities", identities);

  const fs::path run_a = fs::path(workdir) / "run-a", run_b = fs::path(workdir) / "run-b";
  RunResult first, second;
  std::string run_error;
  try {
    first = run_pipeline(config, run_a);
    second = run_pipeline(config, run_b);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs_runs = [&](auto f) {
    return [&, f] {
      if (!run_error.empty()) throw std::runtime_error(run_error);
      return f();
    };
  };

  guarded("protocol invariants", needs_runs([&] { return protocol(run_a); }));
  guarded("end-to-end synthetic zero-shot", needs_runs([&] { return end_to_end(first); }));
  guarded("ablation direction", needs_runs([&] { return ablation(first); }));
  guarded("determinism", needs_runs([&] { return determinism(run_a, run_b); }));

  const auto failed = std::count_if(out.begin(), out.end(), [](const Outcome& o) { return !o.pass; });
  std::cout << (out.size() - failed) << "/" << out.size() << " criteria pass" << std::endl;
  return failed ? 1 : 0;
}
