#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "voltron/embedding.hpp"
#include "voltron/snn/model.hpp"

namespace voltron::zeroshot {

enum class Mode { zero_shot, few_shot };

inline std::string_view to_string(Mode m) { return m == Mode::zero_shot ? "zero-shot" : "few-shot"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "zero-shot") return Mode::zero_shot;
  if (s == "few-shot") return Mode::few_shot;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected zero-shot or few-shot)");
}

/// Reference embeddings of one class, held out of training and testing.
struct SupportSet {
  Label role = Label::benign;
  std::vector<Embedding> embeddings;

  std::vector<std::string> app_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : embeddings) ids.push_back(e.app_id);
    return ids;
  }
};

struct Verdict {
  std::string app_id;
  Label predicted = Label::malware;
  double mean_benign = 0.0;
  std::optional<double> mean_malware;
  double threshold = 0.5;
  Mode mode = Mode::zero_shot;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Uniform draw of `size` pool members without replacement.
inline SupportSet build_support_set(const std::vector<Embedding>& pool, Label role, std::size_t size, Rng& rng) {
  for (const auto& e : pool) {
    if (e.label != role) {
      throw ValidationError("support pool member '" + e.app_id + "' is not " + std::string(to_string(role)));
    }
  }
  if (size == 0) throw ValidationError("support set size must be positive");
  if (pool.size() < size) {
    throw SamplingError("support pool of " + std::to_string(pool.size()) + " cannot supply " +
                        std::to_string(size) + " samples");
  }
  SupportSet s;
  s.role = role;
  for (auto i : rng.sample_without_replacement(pool.size(), size)) s.embeddings.push_back(pool[i]);
  return s;
}

/// Arithmetic mean of pairwise scores; the verdict only sees this value.
/// Summed in sorted order so the result depends only on the multiset.
inline double mean_of(std::vector<double> scores) {
  if (scores.empty()) throw ValidationError("empty support set");
  std::sort(scores.begin(), scores.end());
  double acc = 0.0;
  for (double s : scores) acc += s;
  return acc / static_cast<double>(scores.size());
}

template <typename T>
std::vector<double> support_scores(const snn::SnnModel<T>& model, const Embedding& e, const SupportSet& support) {
  const std::vector<T> x(e.values.begin(), e.values.end());
  std::vector<double> out;
  out.reserve(support.embeddings.size());
  for (const auto& s : support.embeddings) {
    const std::vector<T> y(s.values.begin(), s.values.end());
    out.push_back(static_cast<double>(snn::similarity<T>(model, x, y)));
  }
  return out;
}

/// Mean SNN similarity of `e` to every member of the support set.
template <typename T>
double mean_similarity(const snn::SnnModel<T>& model, const Embedding& e, const SupportSet& support) {
  if (support.embeddings.empty()) throw ValidationError("empty support set");
  return mean_of(support_scores(model, e, support));
}

/// Zero-shot rule on a precomputed mean: benign iff strictly above threshold.
inline Label zero_shot_decision(double mean_benign, double threshold) {
  return mean_benign > threshold ? Label::benign : Label::malware;
}

/// Few-shot rule: the class with the larger mean similarity, ties to malware.
inline Label few_shot_decision(double mean_benign, double mean_malware) {
  return mean_benign > mean_malware ? Label::benign : Label::malware;
}

template <typename T>
Verdict classify_zero_shot(const snn::SnnModel<T>& model, const Embedding& e, const SupportSet& benign,
                           double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must lie in (0, 1)");
  if (benign.role != Label::benign) throw ValidationError("zero-shot support must be benign");
  Verdict v;
  v.app_id = e.app_id;
  v.mode = Mode::zero_shot;
  v.threshold = threshold;
  v.mean_benign = mean_similarity(model, e, benign);
  v.predicted = zero_shot_decision(v.mean_benign, threshold);
  return v;
}

template <typename T>
Verdict classify_few_shot(const snn::SnnModel<T>& model, const Embedding& e, const SupportSet& benign,
                          const SupportSet& malware) {
  if (benign.role != Label::benign || malware.role != Label::malware)
    throw ValidationError("few-shot needs a benign and a malware support set");
  Verdict v;
  v.app_id = e.app_id;
  v.mode = Mode::few_shot;
  v.mean_benign = mean_similarity(model, e, benign);
  v.mean_malware = mean_similarity(model, e, malware);
  v.threshold = 0.5;
  v.predicted = few_shot_decision(v.mean_benign, *v.mean_malware);
  return v;
}

// --- verdict files -------------------------------------------------------------

inline nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j = {{"app_id", v.app_id},
                      {"mode", std::string(to_string(v.mode))},
                      {"mean_benign", v.mean_benign}};
  j["mean_malware"] = v.mean_malware ? nlohmann::json(*v.mean_malware) : nlohmann::json(nullptr);
  j["threshold"] = v.threshold;
  j["label"] = std::string(to_string(v.predicted));
  return j;
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  try {
    v.app_id = j.at("app_id").get<std::string>();
    v.mode = parse_mode(j.at("mode").get<std::string>());
    v.mean_benign = j.at("mean_benign").get<double>();
    if (j.contains("mean_malware") && !j["mean_malware"].is_null()) v.mean_malware = j["mean_malware"].get<double>();
    v.threshold = j.at("threshold").get<double>();
    auto l = parse_label(j.at("label").get<std::string>());
    if (!l || !is_definite(*l)) throw ParseError("verdict label must be benign or malware");
    v.predicted = *l;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("verdict record: ") + e.what());
  }
  return v;
}

inline void write_verdicts(std::ostream& os, const std::vector<Verdict>& vs) {
  for (const auto& v : vs) os << to_json(v).dump() << "\n";
}

inline std::vector<Verdict> read_verdicts(std::istream& in) {
  std::vector<Verdict> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(verdict_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("verdict file: ") + e.what());
    }
  }
  return out;
}

inline std::vector<Verdict> read_verdicts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read verdicts '" + path + "'");
  return read_verdicts(in);
}

}  // namespace voltron::zeroshot
