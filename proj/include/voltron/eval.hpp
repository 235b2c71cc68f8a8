#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/dataset/manifest.hpp"
#include "voltron/zeroshot.hpp"

namespace voltron::eval {

/// A predicted label for one app; verdicts and VGAE-only predictions both
/// reduce to this.
struct Prediction {
  std::string app_id;
  Label predicted = Label::malware;
};

inline std::vector<Prediction> predictions(const std::vector<zeroshot::Verdict>& vs) {
  std::vector<Prediction> out;
  out.reserve(vs.size());
  for (const auto& v : vs) out.push_back({v.app_id, v.predicted});
  return out;
}

/// Malware is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Undefined ratios (zero denominators) stay empty.
struct Metrics {
  double accuracy = 0.0;
  std::optional<double> precision, recall, f1, fpr;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline const data::ManifestEntry& definite_entry(const data::Manifest& m, const std::string& app_id) {
  const auto* e = m.find(app_id);
  if (!e) throw ValidationError("app '" + app_id + "' is not in the manifest");
  if (!is_definite(e->label)) throw ValidationError("app '" + app_id + "' has no definite label");
  return *e;
}

inline ConfusionCounts confusion(const std::vector<Prediction>& preds, const data::Manifest& m) {
  ConfusionCounts c;
  for (const auto& p : preds) {
    const bool actual = definite_entry(m, p.app_id).label == Label::malware;
    const bool flagged = p.predicted == Label::malware;
    if (actual) {
      ++(flagged ? c.tp : c.fn);
    } else {
      ++(flagged ? c.fp : c.tn);
    }
  }
  return c;
}

inline ConfusionCounts confusion(const std::vector<zeroshot::Verdict>& vs, const data::Manifest& m) {
  return confusion(predictions(vs), m);
}

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline Metrics metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("metrics: no evaluated samples");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  return m;
}

/// Unweighted mean over folds; each field averages the folds where it is
/// defined and stays empty if it is defined in none.
inline Metrics average_metrics(const std::vector<Metrics>& folds) {
  if (folds.empty()) throw ValidationError("average_metrics: no folds");
  Metrics out;
  double acc = 0.0;
  for (const auto& f : folds) acc += f.accuracy;
  out.accuracy = acc / static_cast<double>(folds.size());
  auto avg = [&](std::optional<double> Metrics::*field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : folds) {
      if (f.*field) {
        sum += *(f.*field);
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  out.precision = avg(&Metrics::precision);
  out.recall = avg(&Metrics::recall);
  out.f1 = avg(&Metrics::f1);
  out.fpr = avg(&Metrics::fpr);
  return out;
}

struct FamilyDetection {
  std::size_t detected = 0;
  std::size_t total = 0;
  double rate = 0.0;
  bool undetected = false;  // rate 0
};

inline std::map<std::string, FamilyDetection> per_family_detection(const std::vector<Prediction>& preds,
                                                                   const data::Manifest& m) {
  std::map<std::string, FamilyDetection> out;
  for (const auto& p : preds) {
    const auto& e = definite_entry(m, p.app_id);
    if (e.label != Label::malware) continue;
    auto& f = out[data::family_key(e)];
    ++f.total;
    if (p.predicted == Label::malware) ++f.detected;
  }
  for (auto& [name, f] : out) {
    f.rate = static_cast<double>(f.detected) / static_cast<double>(f.total);
    f.undetected = f.detected == 0;
  }
  return out;
}

struct SweepPoint {
  double threshold = 0.0;
  double accuracy = 0.0;
  std::optional<double> f1;
  std::size_t predicted_benign = 0;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
  std::optional<double> best_f1_threshold;  // first threshold with the highest F1
};

/// Re-applies the zero-shot rule to stored mean benign-similarities.
inline SweepCurve threshold_sweep(const std::vector<double>& mean_benign, const std::vector<Label>& labels,
                                  const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("threshold sweep: empty grid");
  if (mean_benign.size() != labels.size()) throw ValidationError("threshold sweep: score/label count mismatch");
  if (mean_benign.empty()) throw ValidationError("threshold sweep: no scores");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) throw ValidationError("threshold sweep: grid value outside [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ValidationError("threshold sweep: grid must increase strictly");
  }
  for (auto l : labels)
    if (!is_definite(l)) throw ValidationError("threshold sweep: labels must be benign or malware");

  SweepCurve curve;
  std::optional<double> best;
  for (double t : grid) {
    ConfusionCounts c;
    SweepPoint p;
    p.threshold = t;
    for (std::size_t i = 0; i < mean_benign.size(); ++i) {
      const bool flagged = zeroshot::zero_shot_decision(mean_benign[i], t) == Label::malware;
      if (!flagged) ++p.predicted_benign;
      if (labels[i] == Label::malware) {
        ++(flagged ? c.tp : c.fn);
      } else {
        ++(flagged ? c.fp : c.tn);
      }
    }
    const auto m = metrics(c);
    p.accuracy = m.accuracy;
    p.f1 = m.f1;
    if (p.f1 && (!best || *p.f1 > *best)) {
      best = p.f1;
      curve.best_f1_threshold = t;
    }
    curve.points.push_back(p);
  }
  return curve;
}

/// Evenly spaced grid lo, lo+step, ... up to hi (inclusive within rounding).
inline std::vector<double> linear_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ValidationError("grid: bad range");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>((hi - lo) / step + 1e-9);
  for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

// --- reports -------------------------------------------------------------------

struct Report {
  std::string name;
  ConfusionCounts counts;
  Metrics metrics;
  std::map<std::string, FamilyDetection> families;
};

inline Report make_report(const std::string& name, const std::vector<Prediction>& preds, const data::Manifest& m) {
  Report r{name, confusion(preds, m), {}, per_family_detection(preds, m)};
  r.metrics = metrics(r.counts);
  return r;
}

inline nlohmann::json to_json(const Metrics& m) {
  auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"accuracy", m.accuracy},
          {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"f1", opt(m.f1)},
          {"fpr", opt(m.fpr)}};
}

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json fams = nlohmann::json::object();
  for (const auto& [name, f] : r.families) {
    fams[name] = {{"detected", f.detected}, {"total", f.total}, {"rate", f.rate}, {"undetected", f.undetected}};
  }
  return {{"name", r.name},
          {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
          {"metrics", to_json(r.metrics)},
          {"families", fams}};
}

inline std::string percent(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

inline void write_table(std::ostream& os, const std::vector<Report>& reports) {
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %9s %9s %9s %9s %9s\n", "model", "accuracy", "precision", "recall", "f1",
                "fpr");
  os << line;
  for (const auto& r : reports) {
    const auto& m = r.metrics;
    std::snprintf(line, sizeof line, "%-22s %9s %9s %9s %9s %9s\n", r.name.c_str(), percent(m.accuracy).c_str(),
                  percent(m.precision).c_str(), percent(m.recall).c_str(), percent(m.f1).c_str(),
                  percent(m.fpr).c_str());
    os << line;
  }
  for (const auto& r : reports) {
    if (r.families.empty()) continue;
    os << "\n" << r.name << " per-family detection\n";
    for (const auto& [name, f] : r.families) {
      std::snprintf(line, sizeof line, "  %-20s %4zu / %-4zu %7s%%%s\n", name.c_str(), f.detected, f.total,
                    percent(f.rate).c_str(), f.undetected ? "  (not detected)" : "");
      os << line;
    }
  }
}

inline void write_sweep_csv(std::ostream& os, const SweepCurve& c) {
  os << "threshold,accuracy,f1,predicted_benign\n";
  char line[128];
  for (const auto& p : c.points) {
    const std::string f1 = p.f1 ? std::to_string(*p.f1) : "";
    std::snprintf(line, sizeof line, "%.6f,%.6f,%s,%zu\n", p.threshold, p.accuracy, f1.c_str(), p.predicted_benign);
    os << line;
  }
}

}  // namespace voltron::eval
