// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corpus_gen.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "vqag/vqag.hpp"

using namespace vqag;
namespace test = vqag::test;

namespace {

// Tolerances and budgets.
constexpr double kGoldenSeconds = 1.0;
constexpr int kMiningCorpora = 200;
constexpr int kRasterCases = 500;
constexpr double kNormTol = 1e-9;
constexpr double kScheduleTol = 1e-12;
constexpr int kScheduleSamples = 1000;
constexpr int kGradCases = 20;
constexpr double kGradTol = 1e-5;
constexpr double kGradSeconds = 30.0;
constexpr double kRankGap = 0.2;
constexpr double kTrainSeconds = 120.0;
constexpr int kSpearmanPairs = 100;
constexpr double kSpearmanTol = 1e-9;
constexpr double kKlIdentityTol = 1e-12;
constexpr double kKlPointTol = 1e-9;
constexpr double kKlOracleTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 5) failures.push_back(what);
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::vector<double> values(const AttentionMap& m) { return {m.values().begin(), m.values().end()}; }

BoundingBox random_box(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> xd(0, w - 1), yd(0, h - 1);
  const int x0 = xd(rng), x1 = xd(rng), y0 = yd(rng), y1 = yd(rng);
  return {std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
}

AttentionMap random_map(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> d(0.01, 1.0);
  std::vector<double> v(h * w);
  for (auto& x : v) x = d(rng);
  return l1_normalize(AttentionMap(h, w, std::move(v)));
}

void golden_labels(Check& c) {
  test::TempDir dir;
  const auto t0 = Clock::now();
  const auto r = test::run_cli(test::park_bench_mine_args(dir / "labels.ndjson"));
  const double secs = seconds_since(t0);
  c.expect(r.exit_code == 0, "mine exited " + std::to_string(r.exit_code) + ": " + r.output);
  const auto labels = cmd::read_labels(dir / "labels.ndjson");
  c.expect(labels.size() == 2, "expected 2 labels");
  if (labels.size() == 2) {
    const auto& talk = labels[0];
    c.expect(talk.region_match_count == 2, "region match count " + std::to_string(talk.region_match_count));
    c.expect(talk.region_boxes == std::vector<BoundingBox>{{100, 150, 349, 329}}, "wrong region selected");
    const auto& count = labels[1];
    c.expect(count.is_counting && count.region_boxes.empty() && !count.object_boxes.empty(),
             "counting label should carry objects only");
    const QaTriplet t{2, 1, "How many people are there?", "Two", 500, 375};
    const auto stack = build_supervision(count, t, 14, 14);
    c.expect(stack.supervision_mask == std::vector<bool>{true, false}, "region glimpse not masked");
  }
  c.expect(test::slurp(dir / "labels.ndjson") == test::slurp(test::kFixtures / "park_bench" / "labels.golden.ndjson"),
           "output differs from golden labels");
  c.expect(secs < kGoldenSeconds, "took " + fmt(secs) + " s");
  c.detail = fmt(secs) + " s";
}

void mining_oracle(Check& c) {
  const auto& lex = test::shared_lexicon();
  test::CorpusGenerator gen(20240601);
  const MinerConfig cfg;
  std::size_t labels = 0;
  for (int i = 0; i < kMiningCorpora; ++i) {
    const auto d = gen.make();
    const auto got = mine(d, lex, cfg);
    labels += got.size();
    c.expect(got == oracle::mine(d, lex, cfg), "corpus " + std::to_string(i) + " differs from reference");
  }
  c.detail = std::to_string(kMiningCorpora) + " corpora, " + std::to_string(labels) + " labels";
}

void rasterization(Check& c) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < kRasterCases; ++i) {
    const int w = std::uniform_int_distribution<int>(1, 800)(rng);
    const int h = std::uniform_int_distribution<int>(1, 800)(rng);
    const std::size_t H = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t W = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    std::vector<BoundingBox> a(std::uniform_int_distribution<int>(1, 4)(rng));
    std::vector<BoundingBox> b(std::uniform_int_distribution<int>(1, 4)(rng));
    for (auto& x : a) x = random_box(rng, w, h);
    for (auto& x : b) x = random_box(rng, w, h);
    const std::string tag = "case " + std::to_string(i);

    const auto ma = rasterize(a, w, h, H, W);
    c.expect(values(ma) == oracle::rasterize(a, w, h, H, W), tag + ": cell mismatch");
    c.expect(std::abs(l1_normalize(ma).sum() - 1.0) <= kNormTol, tag + ": normalized sum");

    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto sum = ma;
    sum += rasterize(b, w, h, H, W);
    c.expect(values(rasterize(ab, w, h, H, W)) == values(sum), tag + ": not additive");
    std::shuffle(ab.begin(), ab.end(), rng);
    c.expect(values(rasterize(ab, w, h, H, W)) == values(sum), tag + ": order dependent");
  }
  c.detail = std::to_string(kRasterCases) + " box sets";
}

void schedule(Check& c) {
  const long long t_max = 1000;
  const auto s = Schedule::cosine(t_max);
  c.expect(std::abs(s.alpha(0) - 1.0) <= kScheduleTol, "alpha(0) = " + fmt(s.alpha(0)));
  c.expect(std::abs(s.alpha(t_max)) <= kScheduleTol, "alpha(t_max) = " + fmt(s.alpha(t_max)));
  c.expect(std::abs(s.alpha(t_max / 2) - 0.5) <= kScheduleTol, "alpha(t_max/2) = " + fmt(s.alpha(t_max / 2)));
  std::mt19937_64 rng(4);
  std::vector<long long> ts(kScheduleSamples);
  for (auto& t : ts) t = std::uniform_int_distribution<long long>(0, 2 * t_max)(rng);
  std::sort(ts.begin(), ts.end());
  for (std::size_t i = 1; i < ts.size(); ++i) {
    c.expect(s.alpha(ts[i]) <= s.alpha(ts[i - 1]), "increase at t = " + std::to_string(ts[i]));
  }
}

void gradient_check(Check& c) {
  const toy::ToyConfig cfg;
  std::mt19937_64 rng(2718);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < kGradCases; ++i) {
    const auto k = test::random_grad_case(cfg, rng);
    const auto r = test::check_gradients(cfg, k.params, k.sample, k.alpha);
    worst = std::max(worst, r.max_relative_error);
    c.expect(r.max_relative_error < kGradTol, "case " + std::to_string(i) + ": " + fmt(r.max_relative_error) +
                                                   " at " + r.worst);
  }
  const double secs = seconds_since(t0);
  c.expect(secs < kGradSeconds, "took " + fmt(secs) + " s");
  c.detail = "max rel error " + fmt(worst) + ", " + fmt(secs) + " s";
}

void supervision_gap(Check& c) {
  const toy::ToyConfig cfg;
  const auto data = toy::make_synthetic(cfg, 8, cfg.seed);
  auto run = [&](double alpha) {
    const auto t0 = Clock::now();
    const auto r = toy::train(data, cfg, Schedule::fixed(alpha), cfg.steps);
    const double secs = seconds_since(t0);
    c.expect(secs < kTrainSeconds, "alpha " + fmt(alpha) + " run took " + fmt(secs) + " s");
    return r.metrics.back().rank_corr;
  };
  const double supervised = run(1.0);
  const double unsupervised = run(0.0);
  c.expect(supervised - unsupervised >= kRankGap, "gap " + fmt(supervised - unsupervised));
  c.detail = "rank corr " + fmt(unsupervised) + " -> " + fmt(supervised);
}

void metric_kernels(Check& c) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < kSpearmanPairs; ++i) {
    const auto a = random_map(rng, 14, 14);
    auto b = random_map(rng, 14, 14);
    if (i % 4 == 0) {
      // Ties exercise the midrank path.
      std::vector<double> v = values(b);
      for (auto& x : v) x = std::round(x * 1000.0);
      b = AttentionMap(14, 14, v);
    }
    const double got = rank_correlation(a, b);
    const double want = *oracle::spearman(values(a), values(b));
    c.expect(std::abs(got - want) <= kSpearmanTol, "pair " + std::to_string(i) + ": " + fmt(got) + " vs " + fmt(want));
  }
  const auto m = random_map(rng, 14, 14);
  c.expect(rank_correlation(m, m) == 1.0, "identical maps");
  std::vector<double> up(196), down(196);
  std::iota(up.begin(), up.end(), 1.0);
  std::reverse_copy(up.begin(), up.end(), down.begin());
  c.expect(rank_correlation(AttentionMap(14, 14, up), AttentionMap(14, 14, down)) == -1.0, "reversed maps");
  for (int k = 0; k <= 10; ++k) {
    std::vector<std::string> refs(10, "other");
    std::fill_n(refs.begin(), k, "answer");
    const double want = std::min(k / 3.0, 1.0);
    c.expect(vqa_accuracy("answer", refs) == want, "vqa_accuracy with k = " + std::to_string(k));
  }
}

void kl(Check& c) {
  std::mt19937_64 rng(12);
  const auto p = random_map(rng, 14, 14);
  c.expect(std::abs(kl_divergence(p, p)) <= kKlIdentityTol, "kl(p, p) = " + fmt(kl_divergence(p, p)));
  AttentionMap point(14, 14);
  point.at(5, 9) = 1.0;
  const AttentionMap uniform(14, 14, std::vector<double>(196, 1.0 / 196.0));
  c.expect(std::abs(kl_divergence(point, uniform) - std::log(196.0)) <= kKlPointTol, "point mass vs uniform");
  for (int i = 0; i < 100; ++i) {
    const auto a = random_map(rng, 14, 14), b = random_map(rng, 14, 14);
    c.expect(std::abs(kl_divergence(a, b) - oracle::kl(values(a), values(b))) <= kKlOracleTol,
             "pair " + std::to_string(i));
  }
}

void determinism(Check& c) {
  test::TempDir dir;
  for (const char* name : {"a", "b"}) {
    const std::string n(name);
    c.expect(test::run_cli(test::park_bench_mine_args(dir / (n + ".labels.ndjson"))).exit_code == 0, "mine failed");
    c.expect(test::run_cli({"train-toy", "--steps", "300", "--log-every", "10", "--out", (dir / (n + ".csv")).string()})
                     .exit_code == 0,
             "train-toy failed");
  }
  for (const char* file : {"labels.ndjson", "csv", "csv.params.ndjson"}) {
    const std::string f(file);
    const auto a = test::slurp(dir / ("a." + f));
    c.expect(!a.empty() && a == test::slurp(dir / ("b." + f)), f + " differs between runs");
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"park-bench golden labels", golden_labels},
      {"mining equals brute-force reference", mining_oracle},
      {"rasterization oracle and invariants", rasterization},
      {"cosine schedule endpoints and monotonicity", schedule},
      {"analytic gradients vs central differences", gradient_check},
      {"attention supervision raises rank correlation", supervision_gap},
      {"Spearman and consensus accuracy kernels", metric_kernels},
      {"KL divergence", kl},
      {"byte-identical reruns", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << (i + 1) << " " << criteria[i].first;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << "\n";
    for (const auto& f : c.failures) std::cout << "       " << f << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
