#pragma once

// Slow, literal reference computations. They share no code with the library
// beyond the data types and the lexicon queries.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "vqag/attention_map.hpp"
#include "vqag/dataset.hpp"
#include "vqag/lexicon.hpp"
#include "vqag/miner.hpp"

namespace vqag::oracle {

// A box covers grid column x when its scaled pixel extent overlaps
// [x, x + 1) at all; same for rows.
inline bool covers(const BoundingBox& b, int img_w, int img_h, std::size_t H, std::size_t W, std::size_t y,
                   std::size_t x) {
  const long long w = static_cast<long long>(W), h = static_cast<long long>(H);
  const long long cx = static_cast<long long>(x), cy = static_cast<long long>(y);
  const bool col = static_cast<long long>(b.x_min) * w < (cx + 1) * img_w &&
                   (static_cast<long long>(b.x_max) + 1) * w > cx * img_w;
  const bool row = static_cast<long long>(b.y_min) * h < (cy + 1) * img_h &&
                   (static_cast<long long>(b.y_max) + 1) * h > cy * img_h;
  return col && row;
}

inline std::vector<double> rasterize(const std::vector<BoundingBox>& boxes, int img_w, int img_h, std::size_t H,
                                     std::size_t W) {
  std::vector<double> out(H * W, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (const auto& b : boxes) out[y * W + x] += covers(b, img_w, img_h, H, W, y, x) ? 1.0 : 0.0;
    }
  }
  return out;
}

// Midranks by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<long double> midranks(const std::vector<double>& v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double less = 0, equal = 0;
    for (double u : v) {
      if (u < v[i]) less += 1;
      if (u == v[i]) equal += 1;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = midranks(a), rb = midranks(b);
  const long double n = static_cast<long double>(a.size());
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  long double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return std::nullopt;
  return static_cast<double>(cov / std::sqrt(va * vb));
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) s += static_cast<long double>(p[i]) * std::log(static_cast<long double>(p[i]) / q[i]);
  }
  return static_cast<double>(s);
}

// Block means for an integer shrink factor: source cell (sy, sx) belongs to
// target cell (sy / fy, sx / fx).
inline std::vector<double> block_means(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t H,
                                       std::size_t W) {
  const std::size_t fy = h / H, fx = w / W;
  std::vector<long double> sum(H * W, 0);
  for (std::size_t sy = 0; sy < h; ++sy) {
    for (std::size_t sx = 0; sx < w; ++sx) sum[(sy / fy) * W + sx / fx] += src[sy * w + sx];
  }
  std::vector<double> out(H * W);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(sum[i] / (fy * fx));
  return out;
}

// ---------------------------------------------------------------- miner

inline std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '\'') continue;
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline void push_unique(std::vector<std::string>& v, const std::string& w) {
  if (std::find(v.begin(), v.end(), w) == v.end()) v.push_back(w);
}

inline bool is_noun(const Lexicon& lex, const std::string& w) {
  return lex.morphy(w, PartOfSpeech::Noun).has_value();
}
inline bool is_verb(const Lexicon& lex, const std::string& w) {
  return lex.morphy(w, PartOfSpeech::Verb).has_value();
}

inline std::vector<std::string> informative(const std::string& s, const Lexicon& lex, const MinerConfig& cfg,
                                            bool nouns_only) {
  std::vector<std::string> out;
  for (const auto& w : words_of(s)) {
    if (cfg.stopwords.count(w)) continue;
    if (!(is_noun(lex, w) || is_verb(lex, w))) continue;
    if (nouns_only && !is_noun(lex, w)) continue;
    push_unique(out, w);
  }
  return out;
}

struct Pair {
  int condition;
  std::size_t a;  // index in the first word list
  std::size_t b;  // index in the second word list
};

// Literal reading of the mining rules: enumerate every (annotation word,
// query word) pair, count annotation words with any match, keep all regions
// at the maximum if it reaches the threshold, then filter objects.
inline std::vector<GroundingLabel> mine(const Dataset& d, const Lexicon& lex, const MinerConfig& cfg) {
  std::vector<GroundingLabel> labels;
  for (const auto& t : d.triplets) {
    std::vector<std::string> queries = informative(t.question, lex, cfg, false);
    for (const auto& w : informative(t.answer, lex, cfg, false)) push_unique(queries, w);
    std::vector<std::string> nouns = informative(t.question, lex, cfg, true);
    for (const auto& w : informative(t.answer, lex, cfg, true)) push_unique(nouns, w);

    const auto& regions = d.regions(t.image_id);
    std::vector<std::size_t> counts(regions.size(), 0);
    std::vector<std::vector<WordMatch>> region_matches(regions.size());
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const auto words = informative(regions[r].phrase, lex, cfg, false);
      for (const auto& aw : words) {
        std::optional<Pair> best;
        for (std::size_t qi = 0; qi < queries.size(); ++qi) {
          const auto m = lex.words_match(queries[qi], aw);
          if (!m.matched) continue;
          const Pair p{static_cast<int>(m.condition), qi, 0};
          if (!best || std::tie(p.condition, p.a) < std::tie(best->condition, best->a)) best = p;
        }
        if (best) {
          ++counts[r];
          region_matches[r].push_back({queries[best->a], aw, static_cast<MatchCondition>(best->condition)});
        }
      }
    }
    std::size_t top = 0;
    for (auto c : counts) top = std::max(top, c);
    std::vector<std::size_t> chosen;
    if (top >= cfg.min_region_matches) {
      for (std::size_t r = 0; r < regions.size(); ++r) {
        if (counts[r] == top) chosen.push_back(r);
      }
    }

    const auto qn = words_of(t.question);
    bool counting = false;
    for (const auto& prefix : cfg.counting_prefixes) {
      const auto pw = words_of(prefix);
      if (!pw.empty() && qn.size() >= pw.size() && std::equal(pw.begin(), pw.end(), qn.begin())) counting = true;
    }

    struct Candidate {
      BoundingBox box;
      WordMatch match;
      std::size_t index;
    };
    std::vector<Candidate> cands;
    const auto& objects = d.objects(t.image_id);
    for (std::size_t oi = 0; oi < objects.size(); ++oi) {
      const auto& o = objects[oi];
      std::vector<std::string> name_words;
      for (const auto& n : o.names) {
        for (const auto& w : words_of(n)) {
          if (!cfg.stopwords.count(w)) push_unique(name_words, w);
        }
      }
      std::optional<Pair> best;
      for (std::size_t a = 0; a < name_words.size(); ++a) {
        for (std::size_t b = 0; b < nouns.size(); ++b) {
          const auto m = lex.words_match(nouns[b], name_words[a]);
          if (!m.matched) continue;
          const Pair p{static_cast<int>(m.condition), a, b};
          if (!best || std::tie(p.condition, p.a, p.b) < std::tie(best->condition, best->a, best->b)) best = p;
        }
      }
      if (!best) continue;
      if (!chosen.empty()) {
        bool in_any = false;
        for (auto r : chosen) {
          const auto& rb = regions[r].box;
          // 2 * center within 2 * bounds, in integers.
          const long long cx2 = static_cast<long long>(o.box.x_min) + o.box.x_max;
          const long long cy2 = static_cast<long long>(o.box.y_min) + o.box.y_max;
          if (cfg.containment == Containment::Center) {
            in_any = in_any || (2LL * rb.x_min <= cx2 && cx2 <= 2LL * rb.x_max && 2LL * rb.y_min <= cy2 &&
                                cy2 <= 2LL * rb.y_max);
          } else {
            in_any = in_any || (rb.x_min <= o.box.x_min && o.box.x_max <= rb.x_max && rb.y_min <= o.box.y_min &&
                                o.box.y_max <= rb.y_max);
          }
        }
        if (!in_any) continue;
      }
      cands.push_back({o.box, {nouns[best->b], name_words[best->a], static_cast<MatchCondition>(best->condition)},
                       oi});
    }
    const auto area = [](const BoundingBox& b) {
      return (static_cast<long long>(b.x_max) - b.x_min + 1) * (static_cast<long long>(b.y_max) - b.y_min + 1);
    };
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      return std::make_tuple(static_cast<int>(a.match.condition), -area(a.box), a.index) <
             std::make_tuple(static_cast<int>(b.match.condition), -area(b.box), b.index);
    });
    std::vector<Candidate> kept;
    for (const auto& c : cands) {
      bool dup = false;
      for (const auto& k : kept) {
        const long long ix = std::min(c.box.x_max, k.box.x_max) - std::max(c.box.x_min, k.box.x_min) + 1;
        const long long iy = std::min(c.box.y_max, k.box.y_max) - std::max(c.box.y_min, k.box.y_min) + 1;
        const double inter = ix > 0 && iy > 0 ? static_cast<double>(ix * iy) : 0.0;
        const double uni = static_cast<double>(area(c.box) + area(k.box)) - inter;
        if (inter / uni >= cfg.iou_threshold) dup = true;
      }
      if (!dup) kept.push_back(c);
    }

    GroundingLabel l;
    l.qa_id = t.qa_id;
    l.is_counting = counting;
    l.region_match_count = top;
    if (!counting) {
      for (auto r : chosen) {
        l.region_boxes.push_back(regions[r].box);
        l.matched_words.insert(l.matched_words.end(), region_matches[r].begin(), region_matches[r].end());
      }
    }
    for (const auto& k : kept) {
      l.object_boxes.push_back(k.box);
      l.matched_words.push_back(k.match);
    }
    if (!l.region_boxes.empty() || !l.object_boxes.empty()) labels.push_back(std::move(l));
  }
  return labels;
}

}  // namespace vqag::oracle
