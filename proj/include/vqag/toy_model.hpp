#pragma once

// Desk-scale attention VQA model with an attention-supervision term.
//
//   u        = W_q q                                   (C)
//   J[c,n]   = relu(u[c] * img[c,n] + b[c])            Hadamard fusion per cell
//   A[g,n]   = sum_c W_attn[g,c] J[c,n]
//   C_v[g,:] = softmax_n A[g,:]                        one distribution per glimpse
//   V[g,c]   = sum_n C_v[g,n] img[c,n]
//   logits   = W_cls [q ; V]
//   loss     = CE(logits, answer) + alpha * sum_{supervised g} KL(C_gt[g] || C_v[g])
//
// Everything is templated on the scalar so a higher precision instantiation
// can serve as a finite-difference reference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vqag/attention_map.hpp"
#include "vqag/error.hpp"
#include "vqag/metrics.hpp"
#include "vqag/schedule.hpp"

namespace vqag::toy {

struct ToyConfig {
  std::size_t question_dim = 8;   // D
  std::size_t feature_dim = 16;   // C
  std::size_t grid_h = 7;         // H
  std::size_t grid_w = 7;         // W
  std::size_t glimpses = 2;       // G_v
  std::size_t answers = 5;        // K
  std::size_t fusion_dim = 16;    // O; Hadamard fusion requires O == C
  std::uint64_t seed = 7;
  std::size_t steps = 2000;
  double learning_rate = 0.5;

  std::size_t cells() const { return grid_h * grid_w; }
  std::size_t classifier_inputs() const { return question_dim + glimpses * feature_dim; }

  void check() const {
    if (question_dim < 1 || feature_dim < 1 || grid_h < 1 || grid_w < 1 || glimpses < 1 || answers < 1 ||
        fusion_dim < 1) {
      throw InputError("toy config: every dimension must be at least 1");
    }
    if (fusion_dim != feature_dim) throw InputError("toy config: Hadamard fusion needs fusion_dim == feature_dim");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw InputError("toy config: learning_rate must be positive");
    }
  }
};

template <typename T>
struct ToyParams {
  std::vector<T> question_proj;   // C x D
  std::vector<T> fusion_bias;     // C
  std::vector<T> attention_proj;  // G x C
  std::vector<T> classifier;      // K x (D + G*C)

  static ToyParams zeros(const ToyConfig& cfg) {
    ToyParams p;
    p.question_proj.assign(cfg.feature_dim * cfg.question_dim, T(0));
    p.fusion_bias.assign(cfg.feature_dim, T(0));
    p.attention_proj.assign(cfg.glimpses * cfg.feature_dim, T(0));
    p.classifier.assign(cfg.answers * cfg.classifier_inputs(), T(0));
    return p;
  }

  struct Tensor {
    std::string_view name;
    std::array<std::size_t, 2> shape;
    std::vector<T>* data;
  };

  std::array<Tensor, 4> tensors(const ToyConfig& cfg) {
    return {{{"question_proj", {cfg.feature_dim, cfg.question_dim}, &question_proj},
             {"fusion_bias", {cfg.feature_dim, 1}, &fusion_bias},
             {"attention_proj", {cfg.glimpses, cfg.feature_dim}, &attention_proj},
             {"classifier", {cfg.answers, cfg.classifier_inputs()}, &classifier}}};
  }

  std::size_t parameter_count() const {
    return question_proj.size() + fusion_bias.size() + attention_proj.size() + classifier.size();
  }

  template <typename U>
  ToyParams<U> cast() const {
    ToyParams<U> out;
    out.question_proj.assign(question_proj.begin(), question_proj.end());
    out.fusion_bias.assign(fusion_bias.begin(), fusion_bias.end());
    out.attention_proj.assign(attention_proj.begin(), attention_proj.end());
    out.classifier.assign(classifier.begin(), classifier.end());
    return out;
  }

  bool operator==(const ToyParams&) const = default;
};

struct ToySample {
  std::vector<double> question;  // D
  std::vector<double> image;     // C x (H*W), channel-major
  std::size_t answer = 0;
  std::optional<GlimpseStack> supervision;

  bool operator==(const ToySample&) const = default;
};

// Uniform double in [0, 1) from the top 53 bits, independent of the standard
// library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)));
}

inline ToyParams<double> init_params(const ToyConfig& cfg, std::mt19937_64& rng) {
  auto p = ToyParams<double>::zeros(cfg);
  for (auto& t : p.tensors(cfg)) {
    for (double& v : *t.data) v = uniform(rng, -0.1, 0.1);
  }
  return p;
}

template <typename T>
struct ForwardPass {
  std::vector<T> projected;   // u, C
  std::vector<T> fused;       // J, C x N (post relu)
  std::vector<T> attention;   // C_v, G x N
  std::vector<T> attended;    // V, G x C
  std::vector<T> logits;      // K
  std::vector<T> probs;       // softmax(logits)

  std::size_t predicted() const {
    return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
};

namespace detail {

template <typename T>
void require_finite(const std::vector<T>& v, const char* layer) {
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x))) throw NumericError(std::string("non-finite value in layer ") + layer);
  }
}

template <typename T>
void softmax_inplace(std::span<T> v) {
  using std::exp;
  const T mx = *std::max_element(v.begin(), v.end());
  T sum(0);
  for (T& x : v) {
    x = exp(x - mx);
    sum += x;
  }
  for (T& x : v) x /= sum;
}

inline void check_sample(const ToyConfig& cfg, const ToySample& s) {
  if (s.question.size() != cfg.question_dim || s.image.size() != cfg.feature_dim * cfg.cells()) {
    throw InputError("toy sample does not match the model dimensions");
  }
  if (s.answer >= cfg.answers) throw InputError("toy sample answer is outside the answer vocabulary");
  if (s.supervision) {
    if (s.supervision->size() != cfg.glimpses) throw InputError("supervision glimpse count mismatch");
    for (const auto& g : s.supervision->glimpses) {
      if (g.height() != cfg.grid_h || g.width() != cfg.grid_w) throw InputError("supervision grid mismatch");
    }
  }
}

}  // namespace detail

template <typename T>
ForwardPass<T> forward(const ToyConfig& cfg, const ToyParams<T>& p, const ToySample& s) {
  detail::check_sample(cfg, s);
  const std::size_t D = cfg.question_dim, C = cfg.feature_dim, N = cfg.cells(), G = cfg.glimpses,
                    K = cfg.answers, Z = cfg.classifier_inputs();
  ForwardPass<T> f;

  f.projected.assign(C, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t d = 0; d < D; ++d) f.projected[c] += p.question_proj[c * D + d] * T(s.question[d]);
  }

  f.fused.assign(C * N, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t n = 0; n < N; ++n) {
      const T pre = f.projected[c] * T(s.image[c * N + n]) + p.fusion_bias[c];
      f.fused[c * N + n] = pre > T(0) ? pre : T(0);
    }
  }
  detail::require_finite(f.fused, "fusion");

  f.attention.assign(G * N, T(0));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      const T w = p.attention_proj[g * C + c];
      for (std::size_t n = 0; n < N; ++n) f.attention[g * N + n] += w * f.fused[c * N + n];
    }
    detail::softmax_inplace(std::span<T>(f.attention).subspan(g * N, N));
  }
  detail::require_finite(f.attention, "attention");

  f.attended.assign(G * C, T(0));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      T acc(0);
      for (std::size_t n = 0; n < N; ++n) acc += f.attention[g * N + n] * T(s.image[c * N + n]);
      f.attended[g * C + c] = acc;
    }
  }

  f.logits.assign(K, T(0));
  for (std::size_t k = 0; k < K; ++k) {
    const T* row = &p.classifier[k * Z];
    T acc(0);
    for (std::size_t d = 0; d < D; ++d) acc += row[d] * T(s.question[d]);
    for (std::size_t i = 0; i < G * C; ++i) acc += row[D + i] * f.attended[i];
    f.logits[k] = acc;
  }
  detail::require_finite(f.logits, "classifier");
  f.probs = f.logits;
  detail::softmax_inplace(std::span<T>(f.probs));
  return f;
}

// Predicted attention as a glimpse stack (every glimpse marked supervised).
template <typename T>
GlimpseStack attention_maps(const ToyConfig& cfg, const ForwardPass<T>& f) {
  GlimpseStack s;
  const std::size_t N = cfg.cells();
  for (std::size_t g = 0; g < cfg.glimpses; ++g) {
    std::vector<double> v(N);
    for (std::size_t n = 0; n < N; ++n) v[n] = static_cast<double>(f.attention[g * N + n]);
    s.glimpses.emplace_back(cfg.grid_h, cfg.grid_w, std::move(v), true);
    s.supervision_mask.push_back(true);
  }
  return s;
}

template <typename T>
struct LossTerms {
  T ce;
  T kl;
};

template <typename T>
LossTerms<T> loss_terms(const ToyConfig& cfg, const ForwardPass<T>& f, const ToySample& s) {
  using std::log;  // T may be an extended-precision type found by ADL
  LossTerms<T> out{-log(f.probs[s.answer]), T(0)};
  if (s.supervision) {
    const std::size_t N = cfg.cells();
    for (std::size_t g = 0; g < cfg.glimpses; ++g) {
      if (!s.supervision->supervision_mask[g]) continue;
      const auto target = s.supervision->glimpses[g].values();
      for (std::size_t n = 0; n < N; ++n) {
        if (target[n] == 0.0) continue;
        out.kl += T(target[n]) * (log(T(target[n])) - log(f.attention[g * N + n]));
      }
    }
  }
  return out;
}

// Scalar objective at a given alpha; used by training and gradient checks.
template <typename T>
T objective(const ToyConfig& cfg, const ToyParams<T>& p, const ToySample& s, double alpha) {
  const auto f = forward(cfg, p, s);
  const auto terms = loss_terms(cfg, f, s);
  return s.supervision ? terms.ce + T(alpha) * terms.kl : terms.ce;
}

struct LossAndGrads {
  LossBreakdown loss;
  ToyParams<double> grads;
};

// Exact gradients of CE + alpha(t) * KL; alpha is 0 when the sample carries no
// supervision.
inline LossAndGrads loss_and_grads_at(const ToyConfig& cfg, const ToyParams<double>& p, const ToySample& s,
                                      std::optional<double> alpha_override, const Schedule* sched, long long t) {
  const auto f = forward(cfg, p, s);
  const auto terms = loss_terms(cfg, f, s);
  const std::optional<double> kl = s.supervision ? std::optional<double>(terms.kl) : std::nullopt;
  LossBreakdown loss;
  if (alpha_override) {
    loss.ce = terms.ce;
    loss.kl = kl.value_or(0.0);
    loss.alpha = kl ? *alpha_override : 0.0;
    loss.total = loss.ce + loss.alpha * loss.kl;
  } else {
    loss = total_loss(terms.ce, kl, *sched, t);
  }
  if (!std::isfinite(loss.total)) throw NumericError("non-finite loss");

  const std::size_t D = cfg.question_dim, C = cfg.feature_dim, N = cfg.cells(), G = cfg.glimpses,
                    K = cfg.answers, Z = cfg.classifier_inputs();
  auto grads = ToyParams<double>::zeros(cfg);

  std::vector<double> d_logits(f.probs);
  d_logits[s.answer] -= 1.0;

  std::vector<double> d_attended(G * C, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double* grow = &grads.classifier[k * Z];
    const double* prow = &p.classifier[k * Z];
    for (std::size_t d = 0; d < D; ++d) grow[d] = d_logits[k] * s.question[d];
    for (std::size_t i = 0; i < G * C; ++i) {
      grow[D + i] = d_logits[k] * f.attended[i];
      d_attended[i] += prow[D + i] * d_logits[k];
    }
  }

  // d loss / d C_v, then through each glimpse's softmax.
  std::vector<double> d_scores(G * N, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> d_att(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += d_attended[g * C + c] * s.image[c * N + n];
      d_att[n] = acc;
    }
    if (s.supervision && s.supervision->supervision_mask[g] && loss.alpha != 0.0) {
      const auto target = s.supervision->glimpses[g].values();
      for (std::size_t n = 0; n < N; ++n) d_att[n] -= loss.alpha * target[n] / f.attention[g * N + n];
    }
    double dot = 0.0;
    for (std::size_t n = 0; n < N; ++n) dot += f.attention[g * N + n] * d_att[n];
    for (std::size_t n = 0; n < N; ++n) d_scores[g * N + n] = f.attention[g * N + n] * (d_att[n] - dot);
  }

  std::vector<double> d_fused(C * N, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      const double w = p.attention_proj[g * C + c];
      for (std::size_t n = 0; n < N; ++n) {
        acc += d_scores[g * N + n] * f.fused[c * N + n];
        d_fused[c * N + n] += w * d_scores[g * N + n];
      }
      grads.attention_proj[g * C + c] = acc;
    }
  }

  for (std::size_t c = 0; c < C; ++c) {
    double d_proj = 0.0;
    double d_bias = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (f.fused[c * N + n] <= 0.0) continue;
      d_bias += d_fused[c * N + n];
      d_proj += d_fused[c * N + n] * s.image[c * N + n];
    }
    grads.fusion_bias[c] = d_bias;
    for (std::size_t d = 0; d < D; ++d) grads.question_proj[c * D + d] = d_proj * s.question[d];
  }
  return {loss, std::move(grads)};
}

inline LossAndGrads loss_and_grads(const ToyConfig& cfg, const ToyParams<double>& p, const ToySample& s,
                                   const Schedule& sched, long long t) {
  return loss_and_grads_at(cfg, p, s, std::nullopt, &sched, t);
}

inline LossAndGrads loss_and_grads(const ToyConfig& cfg, const ToyParams<double>& p, const ToySample& s,
                                   double alpha) {
  return loss_and_grads_at(cfg, p, s, alpha, nullptr, 0);
}

struct StepMetrics {
  std::size_t step = 0;
  double ce = 0.0;
  double kl = 0.0;
  double alpha = 0.0;
  double accuracy = 0.0;
  double rank_corr = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

// Mean CE and accuracy over all samples; mean KL and glimpse-0 rank
// correlation over supervised samples.
inline StepMetrics evaluate(const ToyConfig& cfg, const ToyParams<double>& p, const std::vector<ToySample>& data,
                            std::size_t step, double alpha) {
  StepMetrics m;
  m.step = step;
  m.alpha = alpha;
  std::size_t supervised = 0;
  std::size_t correlated = 0;
  for (const auto& s : data) {
    const auto f = forward(cfg, p, s);
    const auto terms = loss_terms(cfg, f, s);
    m.ce += terms.ce;
    if (f.predicted() == s.answer) m.accuracy += 1.0;
    if (!s.supervision) continue;
    ++supervised;
    m.kl += terms.kl;
    if (!s.supervision->supervision_mask[0]) continue;
    const std::span<const double> predicted(f.attention.data(), cfg.cells());
    try {
      m.rank_corr += rank_correlation(predicted, s.supervision->glimpses[0].values());
      ++correlated;
    } catch (const InputError&) {
      // constant map; correlation undefined for this sample
    }
  }
  const double n = static_cast<double>(data.size());
  m.ce /= n;
  m.accuracy /= n;
  if (supervised > 0) m.kl /= static_cast<double>(supervised);
  if (correlated > 0) m.rank_corr /= static_cast<double>(correlated);
  return m;
}

struct TrainResult {
  ToyParams<double> params;
  std::vector<StepMetrics> metrics;
};

// Full-batch gradient descent from a seeded uniform(-0.1, 0.1) init. Metrics
// are recorded before the update at every `log_every`-th step and once after
// the final step.
inline TrainResult train(const std::vector<ToySample>& data, const ToyConfig& cfg, const Schedule& sched,
                         std::size_t log_every = 1) {
  cfg.check();
  if (data.empty()) throw InputError("train: no samples");
  for (const auto& s : data) detail::check_sample(cfg, s);
  if (log_every == 0) log_every = 1;

  std::mt19937_64 rng(cfg.seed);
  TrainResult out{init_params(cfg, rng), {}};
  auto& p = out.params;
  const double inv_n = 1.0 / static_cast<double>(data.size());

  // Any non-finite value during a step, including metric evaluation, aborts
  // with that step's index.
  auto guarded = [](std::size_t step, auto&& body) {
    try {
      body();
    } catch (const TrainingDiverged&) {
      throw;
    } catch (const NumericError&) {
      throw TrainingDiverged(step);
    }
  };

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    guarded(step, [&] {
      const double alpha = sched.alpha(static_cast<long long>(step));
      if (step % log_every == 0) out.metrics.push_back(evaluate(cfg, p, data, step, alpha));

      auto total = ToyParams<double>::zeros(cfg);
      double loss_sum = 0.0;
      for (const auto& s : data) {
        auto lg = loss_and_grads(cfg, p, s, sched, static_cast<long long>(step));
        loss_sum += lg.loss.total;
        auto src = lg.grads.tensors(cfg);
        auto dst = total.tensors(cfg);
        for (std::size_t i = 0; i < src.size(); ++i) {
          for (std::size_t j = 0; j < src[i].data->size(); ++j) (*dst[i].data)[j] += (*src[i].data)[j];
        }
      }
      if (!std::isfinite(loss_sum)) throw TrainingDiverged(step);
      auto params = p.tensors(cfg);
      auto grads = total.tensors(cfg);
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].data->size(); ++j) {
          (*params[i].data)[j] -= cfg.learning_rate * inv_n * (*grads[i].data)[j];
        }
      }
    });
  }
  guarded(cfg.steps, [&] {
    const double final_alpha = sched.alpha(static_cast<long long>(cfg.steps));
    out.metrics.push_back(evaluate(cfg, p, data, cfg.steps, final_alpha));
  });
  return out;
}

struct SyntheticOptions {
  std::size_t keys = 4;          // distinct question types
  double question_noise = 2.0;   // per-sample wording noise on the question vector
  std::size_t min_box = 2;       // planted box side, in cells
  std::size_t max_box = 3;
  bool full_grid = false;        // plant the box over the whole grid
};

// Every cell holds a one-hot key (channels [0, keys)), a one-hot class
// (channels [keys, keys + K)) and noise in the remaining channels. The planted
// box carries the question's key and the answer class; every other cell is
// clutter with a different key and a random class, so the answer is only
// present inside the box. The question vector is the key's embedding plus
// wording noise, independent of the answer. Every supervision glimpse is the
// normalized box: with a single planted object, object- and region-level
// groundings coincide.
inline std::vector<ToySample> make_synthetic(const ToyConfig& cfg, std::size_t n, std::uint64_t seed,
                                             const SyntheticOptions& opts = {}) {
  cfg.check();
  if (n < 1) throw InputError("make_synthetic: n must be at least 1");
  if (opts.keys < 2) throw InputError("make_synthetic: needs at least two keys");
  if (cfg.feature_dim < opts.keys + cfg.answers) {
    throw InputError("make_synthetic: feature_dim must cover keys + answers");
  }
  if (opts.min_box < 1 || opts.max_box < opts.min_box) throw InputError("make_synthetic: bad box size range");
  const std::size_t H = cfg.grid_h, W = cfg.grid_w, N = cfg.cells(), C = cfg.feature_dim, K = cfg.answers;
  const std::size_t class0 = opts.keys;
  std::mt19937_64 rng(seed);

  std::vector<std::vector<double>> key_embedding(opts.keys, std::vector<double>(cfg.question_dim));
  for (auto& e : key_embedding) {
    for (double& v : e) v = uniform(rng, -1.0, 1.0);
  }

  std::vector<ToySample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ToySample s;
    const std::size_t key = uniform_index(rng, opts.keys);
    s.question = key_embedding[key];
    for (double& v : s.question) v += opts.question_noise * uniform(rng, -1.0, 1.0);
    s.answer = uniform_index(rng, K);

    BoundingBox box{0, 0, static_cast<int>(W) - 1, static_cast<int>(H) - 1};
    if (!opts.full_grid) {
      const std::size_t span = opts.max_box - opts.min_box + 1;
      const std::size_t bw = std::min(W, opts.min_box + uniform_index(rng, span));
      const std::size_t bh = std::min(H, opts.min_box + uniform_index(rng, span));
      const std::size_t x0 = uniform_index(rng, W - bw + 1);
      const std::size_t y0 = uniform_index(rng, H - bh + 1);
      box = {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x0 + bw - 1),
             static_cast<int>(y0 + bh - 1)};
    }

    s.image.assign(C * N, 0.0);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t cell = y * W + x;
        const bool in_box = box.x_min <= static_cast<int>(x) && static_cast<int>(x) <= box.x_max &&
                            box.y_min <= static_cast<int>(y) && static_cast<int>(y) <= box.y_max;
        const std::size_t cell_key = in_box ? key : (key + 1 + uniform_index(rng, opts.keys - 1)) % opts.keys;
        const std::size_t cell_class = in_box ? s.answer : uniform_index(rng, K);
        s.image[cell_key * N + cell] = 1.0;
        s.image[(class0 + cell_class) * N + cell] = 1.0;
        for (std::size_t c = class0 + K; c < C; ++c) s.image[c * N + cell] = uniform(rng, 0.0, 0.5);
      }
    }

    const std::array<BoundingBox, 1> planted{box};
    const auto target = l1_normalize(rasterize(planted, static_cast<int>(W), static_cast<int>(H), H, W));
    GlimpseStack sup;
    sup.glimpses.assign(cfg.glimpses, target);
    sup.supervision_mask.assign(cfg.glimpses, true);
    s.supervision = std::move(sup);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace vqag::toy
