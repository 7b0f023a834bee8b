#pragma once

// Mines grounding labels for QA triplets: scores region descriptions and
// object names against the informative words of the question and answer,
// applies the region threshold, region containment, IoU de-duplication and
// the counting rule.

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqag/dataset.hpp"
#include "vqag/error.hpp"
#include "vqag/lexicon.hpp"
#include "vqag/text.hpp"

namespace vqag {

enum class Containment { Center, Full };

inline std::set<std::string> default_stopwords() {
  return {"a",     "an",  "the", "is",    "are",   "was", "were", "be", "been", "do", "does",
          "what", "which", "who", "how", "where", "there", "of",  "on",   "in", "to"};
}

struct MinerConfig {
  double iou_threshold = 0.5;
  std::size_t min_region_matches = 2;
  std::set<std::string> stopwords = default_stopwords();
  std::vector<std::string> counting_prefixes = {"how many", "what number of", "count"};
  Containment containment = Containment::Center;
  unsigned threads = 1;

  void check() const {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw InputError("iou_threshold must lie in (0, 1]");
    if (min_region_matches < 1) throw InputError("min_region_matches must be at least 1");
  }
};

struct WordMatch {
  std::string query_word;
  std::string annotation_word;
  MatchCondition condition = MatchCondition::None;

  bool operator==(const WordMatch&) const = default;
};

struct GroundingLabel {
  QaId qa_id = 0;
  std::vector<BoundingBox> region_boxes;
  std::vector<BoundingBox> object_boxes;
  bool is_counting = false;
  std::size_t region_match_count = 0;
  std::vector<WordMatch> matched_words;

  bool operator==(const GroundingLabel&) const = default;
};

namespace detail {

inline void append_unique(std::vector<std::string>& out, std::vector<std::string> words) {
  for (auto& w : words) {
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(std::move(w));
  }
}

}  // namespace detail

// Lowercased tokens that are not stopwords and have a noun or verb entry
// (directly or through morphy). Order preserved, duplicates removed.
inline std::vector<std::string> informative_words(std::string_view sentence, const Lexicon& lex,
                                                  const MinerConfig& cfg) {
  std::vector<std::string> out;
  for (auto& tok : text::tokenize(sentence)) {
    if (cfg.stopwords.contains(tok)) continue;
    if (!lex.has_entry(tok, PartOfSpeech::Noun) && !lex.has_entry(tok, PartOfSpeech::Verb)) continue;
    if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(std::move(tok));
  }
  return out;
}

inline std::vector<std::string> informative_nouns(std::string_view sentence, const Lexicon& lex,
                                                  const MinerConfig& cfg) {
  auto words = informative_words(sentence, lex, cfg);
  std::erase_if(words, [&](const std::string& w) { return !lex.has_entry(w, PartOfSpeech::Noun); });
  return words;
}

inline std::vector<std::string> query_words(const QaTriplet& t, const Lexicon& lex, const MinerConfig& cfg) {
  auto words = informative_words(t.question, lex, cfg);
  detail::append_unique(words, informative_words(t.answer, lex, cfg));
  return words;
}

// Best-ranked match of `word` against `candidates`; ties go to the earliest
// candidate.
inline std::optional<WordMatch> best_match(const std::string& word, const std::vector<std::string>& candidates,
                                           const Lexicon& lex) {
  std::optional<WordMatch> best;
  for (const auto& c : candidates) {
    const auto r = lex.words_match(c, word);
    if (!r.matched) continue;
    if (!best || r.condition < best->condition) best = WordMatch{c, word, r.condition};
    if (best->condition == MatchCondition::Raw) break;
  }
  return best;
}

struct MatchCount {
  std::size_t count = 0;
  std::vector<WordMatch> matches;
};

// Number of distinct informative words of the annotation that match some
// informative word of the question or answer.
inline MatchCount match_count(std::string_view annotation_text, std::string_view question, std::string_view answer,
                              const Lexicon& lex, const MinerConfig& cfg) {
  auto queries = informative_words(question, lex, cfg);
  detail::append_unique(queries, informative_words(answer, lex, cfg));
  MatchCount mc;
  for (const auto& w : informative_words(annotation_text, lex, cfg)) {
    if (auto m = best_match(w, queries, lex)) {
      ++mc.count;
      mc.matches.push_back(std::move(*m));
    }
  }
  return mc;
}

struct RegionSelection {
  std::vector<RegionAnnotation> regions;
  std::size_t best_count = 0;
  std::vector<WordMatch> matches;  // of the selected regions, in region order
};

// All regions tied at the maximum match count, provided that count reaches
// cfg.min_region_matches.
inline RegionSelection select_regions(const QaTriplet& t, const std::vector<RegionAnnotation>& regions,
                                      const Lexicon& lex, const MinerConfig& cfg) {
  RegionSelection sel;
  std::vector<MatchCount> counts;
  counts.reserve(regions.size());
  for (const auto& r : regions) {
    counts.push_back(match_count(r.phrase, t.question, t.answer, lex, cfg));
    sel.best_count = std::max(sel.best_count, counts.back().count);
  }
  if (sel.best_count < cfg.min_region_matches) return sel;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (counts[i].count != sel.best_count) continue;
    sel.regions.push_back(regions[i]);
    sel.matches.insert(sel.matches.end(), counts[i].matches.begin(), counts[i].matches.end());
  }
  return sel;
}

inline bool is_counting_question(std::string_view question, const MinerConfig& cfg) {
  const std::string q = text::normalize(question);
  return std::any_of(cfg.counting_prefixes.begin(), cfg.counting_prefixes.end(),
                     [&](const std::string& p) { return text::starts_with_words(q, text::normalize(p)); });
}

inline bool inside(const BoundingBox& inner, const BoundingBox& outer, Containment mode) {
  if (mode == Containment::Full) {
    return outer.x_min <= inner.x_min && inner.x_max <= outer.x_max && outer.y_min <= inner.y_min &&
           inner.y_max <= outer.y_max;
  }
  const double cx = inner.center_x();
  const double cy = inner.center_y();
  return outer.x_min <= cx && cx <= outer.x_max && outer.y_min <= cy && cy <= outer.y_max;
}

struct ObjectMatch {
  ObjectAnnotation object;
  WordMatch match;
};

// Object-name tokens: the normalized words of every name, minus stopwords.
inline std::vector<std::string> object_name_words(const ObjectAnnotation& o, const MinerConfig& cfg) {
  std::vector<std::string> words;
  for (const auto& name : o.names) {
    auto toks = text::tokenize(name);
    std::erase_if(toks, [&](const std::string& w) { return cfg.stopwords.contains(w); });
    detail::append_unique(words, std::move(toks));
  }
  return words;
}

inline std::vector<ObjectMatch> select_objects(const QaTriplet& t, const std::vector<ObjectAnnotation>& objects,
                                               const std::vector<RegionAnnotation>& selected_regions,
                                               const Lexicon& lex, const MinerConfig& cfg) {
  auto nouns = informative_nouns(t.question, lex, cfg);
  detail::append_unique(nouns, informative_nouns(t.answer, lex, cfg));

  std::vector<ObjectMatch> kept;
  for (const auto& o : objects) {
    std::optional<WordMatch> best;
    for (const auto& w : object_name_words(o, cfg)) {
      auto m = best_match(w, nouns, lex);
      if (m && (!best || m->condition < best->condition)) best = std::move(m);
    }
    if (!best) continue;
    if (!selected_regions.empty() &&
        std::none_of(selected_regions.begin(), selected_regions.end(),
                     [&](const RegionAnnotation& r) { return inside(o.box, r.box, cfg.containment); })) {
      continue;
    }
    kept.push_back({o, std::move(*best)});
  }

  std::stable_sort(kept.begin(), kept.end(), [](const ObjectMatch& a, const ObjectMatch& b) {
    if (a.match.condition != b.match.condition) return a.match.condition < b.match.condition;
    return a.object.box.area() > b.object.box.area();
  });

  std::vector<ObjectMatch> out;
  for (auto& cand : kept) {
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const ObjectMatch& k) {
      return iou(cand.object.box, k.object.box) >= cfg.iou_threshold;
    });
    if (!duplicate) out.push_back(std::move(cand));
  }
  return out;
}

// Mines one triplet; nullopt when neither regions nor objects survive.
inline std::optional<GroundingLabel> mine_one(const QaTriplet& t, const Dataset& d, const Lexicon& lex,
                                              const MinerConfig& cfg) {
  const auto regions = select_regions(t, d.regions(t.image_id), lex, cfg);
  const auto objects = select_objects(t, d.objects(t.image_id), regions.regions, lex, cfg);

  GroundingLabel label;
  label.qa_id = t.qa_id;
  label.is_counting = is_counting_question(t.question, cfg);
  label.region_match_count = regions.best_count;
  // Counting questions keep only the object boxes found inside the regions.
  if (!label.is_counting) {
    for (const auto& r : regions.regions) label.region_boxes.push_back(r.box);
    label.matched_words = regions.matches;
  }
  for (const auto& o : objects) {
    label.object_boxes.push_back(o.object.box);
    label.matched_words.push_back(o.match);
  }
  if (label.region_boxes.empty() && label.object_boxes.empty()) return std::nullopt;
  return label;
}

// One label per triplet with any grounding, in input order. The result does
// not depend on cfg.threads.
inline std::vector<GroundingLabel> mine(const Dataset& d, const Lexicon& lex, const MinerConfig& cfg) {
  cfg.check();
  const std::size_t n = d.triplets.size();
  std::vector<std::optional<GroundingLabel>> slots(n);
  const std::size_t workers = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i] = mine_one(d.triplets[i], d, lex, cfg);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) slots[i] = mine_one(d.triplets[i], d, lex, cfg);
      });
    }
  }
  std::vector<GroundingLabel> labels;
  for (auto& s : slots) {
    if (s) labels.push_back(std::move(*s));
  }
  return labels;
}

inline nlohmann::ordered_json box_to_json(const BoundingBox& b) {
  return nlohmann::ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline BoundingBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw InputError("box must be [x_min, y_min, x_max, y_max]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline nlohmann::ordered_json to_json(const GroundingLabel& l) {
  nlohmann::ordered_json j;
  j["qa_id"] = l.qa_id;
  j["is_counting"] = l.is_counting;
  j["region_match_count"] = l.region_match_count;
  j["region_boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : l.region_boxes) j["region_boxes"].push_back(box_to_json(b));
  j["object_boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : l.object_boxes) j["object_boxes"].push_back(box_to_json(b));
  j["matched_words"] = nlohmann::ordered_json::array();
  for (const auto& m : l.matched_words) {
    j["matched_words"].push_back(
        {{"query", m.query_word}, {"annotation", m.annotation_word}, {"condition", to_string(m.condition)}});
  }
  return j;
}

inline MatchCondition condition_from_string(std::string_view s) {
  for (auto c : {MatchCondition::Raw, MatchCondition::Lemma, MatchCondition::Synset, MatchCondition::Alias}) {
    if (to_string(c) == s) return c;
  }
  return MatchCondition::None;
}

inline GroundingLabel label_from_json(const nlohmann::json& j) {
  GroundingLabel l;
  try {
    l.qa_id = j.at("qa_id").get<QaId>();
    l.is_counting = j.at("is_counting").get<bool>();
    l.region_match_count = j.at("region_match_count").get<std::size_t>();
    for (const auto& b : j.at("region_boxes")) l.region_boxes.push_back(box_from_json(b));
    for (const auto& b : j.at("object_boxes")) l.object_boxes.push_back(box_from_json(b));
    if (auto it = j.find("matched_words"); it != j.end()) {
      for (const auto& m : *it) {
        l.matched_words.push_back({m.at("query").get<std::string>(), m.at("annotation").get<std::string>(),
                                   condition_from_string(m.at("condition").get<std::string>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed grounding label: ") + e.what());
  }
  return l;
}

}  // namespace vqag
