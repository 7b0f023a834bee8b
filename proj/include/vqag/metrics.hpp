#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vqag/attention_map.hpp"
#include "vqag/error.hpp"
#include "vqag/text.hpp"

namespace vqag {

// 1-based ranks; tied values share the mean of the ranks they occupy.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InputError("pearson: length mismatch or empty input");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw InputError("undefined correlation: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Spearman coefficient between the flattened cells of two maps.
inline double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("rank_correlation: size mismatch");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  return pearson(ra, rb);
}

inline double rank_correlation(const AttentionMap& a, const AttentionMap& b) {
  if (!a.same_shape(b)) throw InputError("rank_correlation: shape mismatch");
  return rank_correlation(a.values(), b.values());
}

inline std::string normalize_answer(std::string_view s) { return text::normalize(s); }

// min(#matching human answers / 3, 1) over exactly ten reference answers.
inline double vqa_accuracy(std::string_view predicted, const std::vector<std::string>& refs) {
  if (refs.size() != 10) {
    throw InputError("vqa_accuracy expects 10 reference answers, got " + std::to_string(refs.size()));
  }
  const std::string p = normalize_answer(predicted);
  const auto hits = std::count_if(refs.begin(), refs.end(),
                                  [&](const std::string& r) { return normalize_answer(r) == p; });
  return std::min(static_cast<double>(hits) / 3.0, 1.0);
}

}  // namespace vqag
