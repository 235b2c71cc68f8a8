#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <type_traits>
#include <utility>
#include <vector>

#include "voltron/numerics/params.hpp"

namespace voltron::num {

/// Compares the gradients already stored in `params` with central finite
/// differences of `loss`. Returns the largest relative error
/// |a − n| / max(1e-12, |a| + |n|) over the probed coordinates. A probe
/// count of 0 checks every coordinate. The loss may be evaluated in a wider
/// type L; the difference quotient is then formed in L.
template <typename T, typename L = T>
double grad_check(ParamSet<T>& params, const std::type_identity_t<std::function<L(const ParamSet<T>&)>>& loss,
                  std::size_t probes, double eps, std::uint64_t seed = 0) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad) throw StateError("grad_check: no analytic gradient for " + params[i].name);
    for (std::size_t k = 0; k < params[i].value.size(); ++k) coords.emplace_back(i, k);
  }
  if (probes != 0 && probes < coords.size()) {
    Rng rng(seed);
    auto pick = rng.sample_without_replacement(coords.size(), probes);
    std::sort(pick.begin(), pick.end());
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    for (auto j : pick) chosen.push_back(coords[j]);
    coords = std::move(chosen);
  }
  const L base = loss(params);
  if (!std::isfinite(static_cast<double>(base))) throw NumericError("grad_check: non-finite loss");
  double worst = 0.0;
  for (auto [i, k] : coords) {
    T& x = params[i].value[k];
    const T saved = x;
    const T hi = saved + static_cast<T>(eps);
    const T lo = saved - static_cast<T>(eps);
    x = hi;
    const L up = loss(params);
    x = lo;
    const L down = loss(params);
    x = saved;
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down)))
      throw NumericError("grad_check: non-finite loss");
    const double numeric = static_cast<double>((up - down) / (static_cast<L>(hi) - static_cast<L>(lo)));
    const double analytic = static_cast<double>(params[i].grad[k]);
    const double err =
        std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace voltron::num
