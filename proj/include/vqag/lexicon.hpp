#pragma once

// WordNet (WNDB text format) lexicon: index/exception parsing, morphy
// lemmatization, synset lookup and the four-way word-match predicate used by
// the grounding miner.

#include <array>
#include <charconv>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vqag/error.hpp"
#include "vqag/text.hpp"

namespace vqag {

enum class PartOfSpeech : std::uint8_t { Noun, Verb };

inline constexpr std::array<PartOfSpeech, 2> kAllPos = {PartOfSpeech::Noun, PartOfSpeech::Verb};

inline char pos_char(PartOfSpeech pos) { return pos == PartOfSpeech::Noun ? 'n' : 'v'; }

// Synset offsets are only unique within one data file, so the id carries the
// part of speech as well.
struct SynsetId {
  PartOfSpeech pos;
  std::uint32_t offset;

  auto operator<=>(const SynsetId&) const = default;
};

inline std::string to_string(SynsetId id) {
  std::string digits = std::to_string(id.offset);
  return std::string(1, pos_char(id.pos)) + std::string(8 - std::min<std::size_t>(8, digits.size()), '0') +
         digits;
}

// Ordered by precedence: when several conditions hold, the smallest wins.
enum class MatchCondition : std::uint8_t { Raw, Lemma, Synset, Alias, None };

inline std::string_view to_string(MatchCondition c) {
  switch (c) {
    case MatchCondition::Raw: return "raw";
    case MatchCondition::Lemma: return "lemma";
    case MatchCondition::Synset: return "synset";
    case MatchCondition::Alias: return "alias";
    case MatchCondition::None: return "none";
  }
  return "none";
}

struct MatchResult {
  bool matched = false;
  MatchCondition condition = MatchCondition::None;

  bool operator==(const MatchResult&) const = default;
};

struct LexiconLoadReport {
  std::map<std::string, std::size_t> skipped_lines;  // file name -> count

  std::size_t total_skipped() const {
    std::size_t n = 0;
    for (const auto& [file, count] : skipped_lines) n += count;
    return n;
  }
};

class Lexicon {
 public:
  using Index = std::unordered_map<std::string, std::vector<SynsetId>>;
  using Exceptions = std::unordered_map<std::string, std::vector<std::string>>;

  Lexicon() = default;
  Lexicon(Index noun_index, Index verb_index, Exceptions noun_exc, Exceptions verb_exc)
      : noun_index_(std::move(noun_index)),
        verb_index_(std::move(verb_index)),
        noun_exceptions_(std::move(noun_exc)),
        verb_exceptions_(std::move(verb_exc)) {}

  const Index& index(PartOfSpeech pos) const {
    return pos == PartOfSpeech::Noun ? noun_index_ : verb_index_;
  }
  const Exceptions& exceptions(PartOfSpeech pos) const {
    return pos == PartOfSpeech::Noun ? noun_exceptions_ : verb_exceptions_;
  }
  const std::unordered_map<std::string, std::set<std::string>>& aliases() const { return aliases_; }

  std::size_t entry_count(PartOfSpeech pos) const { return index(pos).size(); }

  bool in_index(std::string_view word, PartOfSpeech pos) const {
    return index(pos).contains(std::string(word));
  }

  // WordNet morphy: exception list first, then the word itself if it is a
  // base form, then the detachment rules in table order. Exception bases that
  // have no index entry are skipped.
  std::optional<std::string> morphy(std::string_view word, PartOfSpeech pos) const {
    if (word.empty()) return std::nullopt;
    const std::string w(word);
    if (auto it = exceptions(pos).find(w); it != exceptions(pos).end()) {
      for (const auto& base : it->second) {
        if (in_index(base, pos)) return base;
      }
    }
    if (in_index(w, pos)) return w;
    for (const auto& [suffix, ending] : detachment_rules(pos)) {
      if (w.size() <= suffix.size() || !w.ends_with(suffix)) continue;
      std::string candidate = w.substr(0, w.size() - suffix.size());
      candidate += ending;
      if (in_index(candidate, pos)) return candidate;
    }
    return std::nullopt;
  }

  std::set<SynsetId> synsets(std::string_view word, PartOfSpeech pos) const {
    std::set<SynsetId> ids;
    const auto add = [&](const std::string& w) {
      if (auto it = index(pos).find(w); it != index(pos).end()) ids.insert(it->second.begin(), it->second.end());
    };
    const std::string w(word);
    add(w);
    if (auto lemma = morphy(w, pos); lemma && *lemma != w) add(*lemma);
    return ids;
  }

  std::set<SynsetId> all_synsets(std::string_view word) const {
    std::set<SynsetId> ids;
    for (auto pos : kAllPos) ids.merge(synsets(word, pos));
    return ids;
  }

  bool has_entry(std::string_view word, PartOfSpeech pos) const { return morphy(word, pos).has_value(); }

  bool are_aliases(const std::string& a, const std::string& b) const {
    auto it = aliases_.find(a);
    return it != aliases_.end() && it->second.contains(b);
  }

  // Names on one line become mutual aliases. Returns the number of classes read.
  std::size_t add_alias_class(const std::vector<std::string>& names) {
    std::vector<std::string> cleaned;
    for (const auto& n : names) {
      std::string c = text::normalize(n);
      if (!c.empty()) cleaned.push_back(std::move(c));
    }
    if (cleaned.empty()) return 0;
    for (const auto& a : cleaned) {
      for (const auto& b : cleaned) {
        if (a != b) aliases_[a].insert(b);
      }
    }
    return 1;
  }

  MatchResult words_match(std::string_view w1, std::string_view w2,
                          std::optional<PartOfSpeech> pos_hint = std::nullopt) const {
    const std::string a = text::to_lower(text::trim(w1));
    const std::string b = text::to_lower(text::trim(w2));
    if (a == b) return {true, MatchCondition::Raw};

    std::vector<PartOfSpeech> poses;
    if (pos_hint) {
      poses.push_back(*pos_hint);
    } else {
      poses.assign(kAllPos.begin(), kAllPos.end());
    }

    std::vector<std::string> forms_a{a};
    std::vector<std::string> forms_b{b};
    for (auto pos : poses) {
      auto la = morphy(a, pos);
      auto lb = morphy(b, pos);
      if (la && lb && *la == *lb) return {true, MatchCondition::Lemma};
      if (la) forms_a.push_back(*la);
      if (lb) forms_b.push_back(*lb);
    }

    std::set<SynsetId> sa;
    std::set<SynsetId> sb;
    for (auto pos : poses) {
      sa.merge(synsets(a, pos));
      sb.merge(synsets(b, pos));
    }
    for (const auto& id : sa) {
      if (sb.contains(id)) return {true, MatchCondition::Synset};
    }

    for (const auto& fa : forms_a) {
      for (const auto& fb : forms_b) {
        if (are_aliases(fa, fb)) return {true, MatchCondition::Alias};
      }
    }
    return {};
  }

 private:
  using Rule = std::pair<std::string_view, std::string_view>;

  static const std::vector<Rule>& detachment_rules(PartOfSpeech pos) {
    static const std::vector<Rule> noun = {{"s", ""},   {"ses", "s"},  {"xes", "x"}, {"zes", "z"},
                                           {"ches", "ch"}, {"shes", "sh"}, {"men", "man"}, {"ies", "y"}};
    static const std::vector<Rule> verb = {{"s", ""},   {"ies", "y"}, {"es", "e"},  {"es", ""},
                                           {"ed", "e"}, {"ed", ""},   {"ing", "e"}, {"ing", ""}};
    return pos == PartOfSpeech::Noun ? noun : verb;
  }

  Index noun_index_;
  Index verb_index_;
  Exceptions noun_exceptions_;
  Exceptions verb_exceptions_;
  std::unordered_map<std::string, std::set<std::string>> aliases_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// lemma pos synset_cnt p_cnt [ptr_symbol...] sense_cnt tagsense_cnt synset_offset...
inline std::optional<std::pair<std::string, std::vector<SynsetId>>> parse_index_line(std::string_view line,
                                                                                     PartOfSpeech pos) {
  const auto f = split_ws(line);
  if (f.size() < 6) return std::nullopt;
  if (f[1].size() != 1 || f[1][0] != pos_char(pos)) return std::nullopt;
  const auto synset_cnt = parse_int<std::size_t>(f[2]);
  const auto p_cnt = parse_int<std::size_t>(f[3]);
  if (!synset_cnt || !p_cnt) return std::nullopt;
  const std::size_t offsets_at = 4 + *p_cnt + 2;
  if (f.size() != offsets_at + *synset_cnt) return std::nullopt;
  if (!parse_int<std::size_t>(f[4 + *p_cnt]) || !parse_int<std::size_t>(f[5 + *p_cnt])) return std::nullopt;
  std::vector<SynsetId> ids;
  ids.reserve(*synset_cnt);
  for (std::size_t i = offsets_at; i < f.size(); ++i) {
    const auto off = parse_int<std::uint32_t>(f[i]);
    if (!off) return std::nullopt;
    ids.push_back({pos, *off});
  }
  return std::make_pair(text::to_lower(f[0]), std::move(ids));
}

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw LoadError(path.string(), "missing file " + path.filename().string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open " + path.filename().string());
  return in;
}

inline Lexicon::Index read_index(const std::filesystem::path& path, PartOfSpeech pos, LexiconLoadReport& report) {
  auto in = open_or_throw(path);
  Lexicon::Index index;
  std::size_t skipped = 0;
  std::size_t line_no = 0;
  bool in_header = true;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const bool header_line = line.starts_with("  ");
    if (header_line) {
      if (!in_header) {
        throw LoadError(path.string(),
                        "malformed header: license line " + std::to_string(line_no) + " follows data lines");
      }
      continue;
    }
    if (in_header && line.starts_with(" ")) {
      throw LoadError(path.string(), "malformed header at line " + std::to_string(line_no));
    }
    in_header = false;
    if (text::trim(line).empty()) continue;
    auto parsed = parse_index_line(line, pos);
    if (!parsed) {
      ++skipped;
      continue;
    }
    auto& slot = index[parsed->first];
    slot.insert(slot.end(), parsed->second.begin(), parsed->second.end());
  }
  report.skipped_lines[path.filename().string()] = skipped;
  return index;
}

inline Lexicon::Exceptions read_exceptions(const std::filesystem::path& path, LexiconLoadReport& report) {
  auto in = open_or_throw(path);
  Lexicon::Exceptions exc;
  std::size_t skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto f = split_ws(line);
    if (f.size() < 2 || line.starts_with(" ")) {
      ++skipped;
      continue;
    }
    auto& bases = exc[text::to_lower(f[0])];
    for (std::size_t i = 1; i < f.size(); ++i) bases.push_back(text::to_lower(f[i]));
  }
  report.skipped_lines[path.filename().string()] = skipped;
  return exc;
}

}  // namespace detail

// Reads index.noun, index.verb, noun.exc and verb.exc from a WordNet dict
// directory. Unparseable entry lines are skipped and counted in `report`.
inline Lexicon load_wordnet(const std::filesystem::path& dir, LexiconLoadReport* report = nullptr) {
  if (!std::filesystem::is_directory(dir)) {
    throw LoadError(dir.string(), "wordnet directory not found");
  }
  LexiconLoadReport local;
  LexiconLoadReport& r = report ? *report : local;
  auto noun_index = detail::read_index(dir / "index.noun", PartOfSpeech::Noun, r);
  auto verb_index = detail::read_index(dir / "index.verb", PartOfSpeech::Verb, r);
  auto noun_exc = detail::read_exceptions(dir / "noun.exc", r);
  auto verb_exc = detail::read_exceptions(dir / "verb.exc", r);
  return Lexicon(std::move(noun_index), std::move(verb_index), std::move(noun_exc), std::move(verb_exc));
}

// One comma-separated equivalence class per line; blank lines are ignored.
// Loading the same file twice leaves the table unchanged.
inline std::size_t load_aliases(Lexicon& lex, const std::filesystem::path& file) {
  if (!std::filesystem::is_regular_file(file)) throw LoadError(file.string(), "alias file not found");
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError(file.string(), "cannot open alias file");
  std::size_t classes = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    classes += lex.add_alias_class(text::split(line, ','));
  }
  return classes;
}

}  // namespace vqag
