#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "meshspm/core.hpp"

namespace meshspm {

enum class CorrectionMethod { bh, two_stage_bh, max_stat };

inline const char* correction_name(CorrectionMethod m) {
  switch (m) {
    case CorrectionMethod::bh: return "bh";
    case CorrectionMethod::two_stage_bh: return "tsbh";
    case CorrectionMethod::max_stat: return "maxstat";
  }
  return "?";
}

inline CorrectionMethod parse_correction(const std::string& s) {
  if (s == "bh") return CorrectionMethod::bh;
  if (s == "tsbh") return CorrectionMethod::two_stage_bh;
  if (s == "maxstat") return CorrectionMethod::max_stat;
  throw ValidationError("unknown correction '" + s + "'");
}

struct CorrectionResult {
  std::vector<double> p_adjusted;
  std::vector<std::uint8_t> mask;
};

namespace detail {

// Indices of p ascending; ties broken by index so results never depend on
// sort implementation details.
inline std::vector<int> order_ascending(std::span<const double> p) {
  std::vector<int> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double pa = p[static_cast<size_t>(a)], pb = p[static_cast<size_t>(b)];
    return pa != pb ? pa < pb : a < b;
  });
  return order;
}

// Number of rejections of the linear step-up procedure at the given level:
// the largest k with p_(k) <= level * k / m.
inline int step_up_rejections(std::span<const double> p,
                              const std::vector<int>& order, double level) {
  const int m = static_cast<int>(p.size());
  int k_max = 0;
  for (int k = 1; k <= m; ++k) {
    const double pk = p[static_cast<size_t>(order[static_cast<size_t>(k - 1)])];
    if (pk <= level * static_cast<double>(k) / static_cast<double>(m)) k_max = k;
  }
  return k_max;
}

}  // namespace detail

inline void validate_p_vector(std::span<const double> p) {
  for (double v : p)
    if (!(v > 0.0) || v > 1.0)
      throw ValidationError("p-values must lie in (0, 1]");
}

// Benjamini-Hochberg step-up. Adjusted values are p * m / rank with the
// usual running-minimum monotonicity enforcement from the largest rank down;
// mask marks adjusted <= q.
inline CorrectionResult bh_fdr(std::span<const double> p, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("q must lie in (0, 1)");
  CorrectionResult out;
  const int m = static_cast<int>(p.size());
  if (m == 0) return out;
  validate_p_vector(p);

  const auto order = detail::order_ascending(p);
  out.p_adjusted.assign(static_cast<size_t>(m), 0.0);
  double running_min = 1.0;
  for (int k = m; k >= 1; --k) {
    const int idx = order[static_cast<size_t>(k - 1)];
    double adj = p[static_cast<size_t>(idx)] * static_cast<double>(m) /
                 static_cast<double>(k);
    if (adj > 1.0) adj = 1.0;
    running_min = std::min(running_min, adj);
    out.p_adjusted[static_cast<size_t>(idx)] = running_min;
  }
  out.mask.assign(static_cast<size_t>(m), 0);
  for (int i = 0; i < m; ++i)
    out.mask[static_cast<size_t>(i)] = out.p_adjusted[static_cast<size_t>(i)] <= q;
  return out;
}

// Adaptive two-stage step-up. Stage one estimates the null count m0 as
// m - r1, where r1 is the rejection count of the step-up run at the reduced
// level q / (1 + q); stage two reruns the step-up at level q * m / m0.
// Since the stage-two level is never below q, the mask always contains the
// plain step-up mask. Adjusted values are the stage-two scaling of the BH
// adjustment, floored at the raw p so adaptivity never reports an adjusted
// value below the observed one.
inline CorrectionResult two_stage_bh(std::span<const double> p, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("q must lie in (0, 1)");
  CorrectionResult out;
  const int m = static_cast<int>(p.size());
  if (m == 0) return out;
  validate_p_vector(p);

  const auto order = detail::order_ascending(p);
  const int r1 = detail::step_up_rejections(p, order, q / (1.0 + q));
  const int m0 = std::max(1, m - r1);
  const double scale = static_cast<double>(m0) / static_cast<double>(m);

  const CorrectionResult bh = bh_fdr(p, q);
  out.p_adjusted.assign(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double adj = bh.p_adjusted[static_cast<size_t>(i)] * scale;
    adj = std::max(adj, p[static_cast<size_t>(i)]);
    if (adj > 1.0) adj = 1.0;
    out.p_adjusted[static_cast<size_t>(i)] = adj;
  }
  out.mask.assign(static_cast<size_t>(m), 0);
  for (int i = 0; i < m; ++i)
    out.mask[static_cast<size_t>(i)] = out.p_adjusted[static_cast<size_t>(i)] <= q;
  return out;
}

struct MaxStatResult {
  double threshold = 0.0;
  std::vector<std::uint8_t> mask;
};

// Family-wise error control from the permutation distribution of the map
// maximum. The threshold is the k-th smallest null maximum with
// k = ceil((1 - alpha) * (N + 1)) clamped to [1, N]; observed statistics
// must strictly exceed it. This matches the (b + 1) / (N + 1) empirical
// p-value convention: with N = 19 and alpha = 0.05 the threshold is the
// largest null maximum.
inline MaxStatResult fwer_maxstat(std::span<const double> observed,
                                  std::span<const double> null_maxima,
                                  double alpha) {
  if (null_maxima.empty()) throw ValidationError("need at least one null map");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("alpha must lie in (0, 1)");
  std::vector<double> sorted(null_maxima.begin(), null_maxima.end());
  std::sort(sorted.begin(), sorted.end());
  const int n = static_cast<int>(sorted.size());
  int k = static_cast<int>(
      std::ceil((1.0 - alpha) * static_cast<double>(n + 1)));
  k = std::clamp(k, 1, n);

  MaxStatResult out;
  out.threshold = sorted[static_cast<size_t>(k - 1)];
  out.mask.assign(observed.size(), 0);
  for (size_t i = 0; i < observed.size(); ++i)
    out.mask[i] = observed[i] > out.threshold;
  return out;
}

struct PooledFdrResult {
  std::vector<std::vector<double>> p_adjusted;  // per model
  std::vector<std::vector<std::uint8_t>> masks;
};

// One Benjamini-Hochberg pass over the concatenation of all models'
// p-values, split back per model: the correction then accounts for the
// number of vertices times the number of models tested.
inline PooledFdrResult pooled_fdr(
    const std::vector<std::vector<double>>& p_maps, double q) {
  if (p_maps.empty()) throw ValidationError("need at least one model");
  std::vector<double> pooled;
  for (const auto& p : p_maps) pooled.insert(pooled.end(), p.begin(), p.end());
  const CorrectionResult joint = bh_fdr(pooled, q);

  PooledFdrResult out;
  size_t offset = 0;
  for (const auto& p : p_maps) {
    out.p_adjusted.emplace_back(joint.p_adjusted.begin() + offset,
                                joint.p_adjusted.begin() + offset + p.size());
    out.masks.emplace_back(joint.mask.begin() + offset,
                           joint.mask.begin() + offset + p.size());
    offset += p.size();
  }
  return out;
}

}  // namespace meshspm
