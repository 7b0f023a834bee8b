#pragma once

// The pipeline steps behind each CLI subcommand. Every command writes its
// output plus a `<output>.manifest.json` describing inputs and settings.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqag/attention_map.hpp"
#include "vqag/dataset.hpp"
#include "vqag/error.hpp"
#include "vqag/lexicon.hpp"
#include "vqag/manifest.hpp"
#include "vqag/metrics.hpp"
#include "vqag/miner.hpp"
#include "vqag/schedule.hpp"
#include "vqag/serialize.hpp"
#include "vqag/text.hpp"
#include "vqag/toy_model.hpp"

namespace vqag::cmd {

namespace fs = std::filesystem;

inline fs::path manifest_path(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

inline std::string_view to_string(Containment c) { return c == Containment::Center ? "center" : "full"; }

inline nlohmann::ordered_json miner_config_json(const MinerConfig& cfg) {
  nlohmann::ordered_json j;
  j["iou_threshold"] = cfg.iou_threshold;
  j["min_region_matches"] = cfg.min_region_matches;
  j["stopwords"] = std::vector<std::string>(cfg.stopwords.begin(), cfg.stopwords.end());
  j["counting_prefixes"] = cfg.counting_prefixes;
  j["containment"] = to_string(cfg.containment);
  j["threads"] = cfg.threads;
  return j;
}

// ---------------------------------------------------------------- mine

struct MineOptions {
  fs::path regions;
  fs::path objects;
  fs::path qa;
  fs::path wordnet_dir;
  std::optional<fs::path> aliases;
  fs::path out;
  MinerConfig miner;
};

struct MineSummary {
  std::size_t triplets = 0;
  std::size_t labels = 0;
  DatasetLoadReport load;
};

inline MineSummary mine(const MineOptions& o, std::ostream& log = std::cerr) {
  o.miner.check();
  LexiconLoadReport lex_report;
  Lexicon lex = load_wordnet(o.wordnet_dir, &lex_report);
  if (o.aliases) load_aliases(lex, *o.aliases);
  MineSummary summary;
  const Dataset d = load_dataset(o.regions, o.objects, o.qa, &summary.load);
  for (const auto& m : summary.load.messages) log << m << "\n";

  const auto labels = vqag::mine(d, lex, o.miner);
  std::string body;
  for (const auto& l : labels) body += to_json(l).dump() + "\n";
  write_file(o.out, body);
  summary.triplets = d.triplets.size();
  summary.labels = labels.size();

  RunManifest m;
  m.command = "mine";
  m.config = miner_config_json(o.miner);
  m.add_input("regions", o.regions);
  m.add_input("objects", o.objects);
  m.add_input("qa", o.qa);
  m.add_input_dir("wordnet", o.wordnet_dir);
  if (o.aliases) m.add_input("aliases", *o.aliases);
  m.write(manifest_path(o.out));

  log << "mined " << summary.labels << " labels from " << summary.triplets << " triplets";
  if (lex_report.total_skipped() > 0) log << " (" << lex_report.total_skipped() << " wordnet lines skipped)";
  log << "\n";
  return summary;
}

// ----------------------------------------------------------- rasterize

struct RasterizeOptions {
  fs::path labels;
  fs::path qa;
  fs::path out;
  std::size_t grid_h = 14;
  std::size_t grid_w = 14;
};

inline std::vector<MapRow> rasterize_labels(const std::vector<GroundingLabel>& labels,
                                            const std::vector<QaTriplet>& triplets, std::size_t grid_h,
                                            std::size_t grid_w) {
  std::map<QaId, const QaTriplet*> by_id;
  for (const auto& t : triplets) by_id.emplace(t.qa_id, &t);
  std::vector<MapRow> rows;
  for (const auto& l : labels) {
    auto it = by_id.find(l.qa_id);
    if (it == by_id.end()) throw InputError("label qa_id " + std::to_string(l.qa_id) + " has no QA record");
    const auto stack = build_supervision(l, *it->second, grid_h, grid_w);
    for (std::size_t g = 0; g < stack.size(); ++g) {
      rows.push_back({l.qa_id, g, static_cast<bool>(stack.supervision_mask[g]), stack.glimpses[g]});
    }
  }
  return rows;
}

inline std::vector<GroundingLabel> read_labels(const fs::path& path) {
  std::vector<GroundingLabel> labels;
  for (const auto& doc : read_ndjson(path)) {
    try {
      labels.push_back(label_from_json(doc));
    } catch (const InputError& e) {
      throw LoadError(path.string(), e.what());
    }
  }
  return labels;
}

inline std::size_t rasterize(const RasterizeOptions& o, std::ostream& log = std::cerr) {
  if (o.grid_h < 1 || o.grid_w < 1) throw InputError("--grid dimensions must be at least 1");
  const auto labels = read_labels(o.labels);
  const auto triplets = load_triplets(o.qa);
  const auto rows = rasterize_labels(labels, triplets, o.grid_h, o.grid_w);
  std::string body;
  for (const auto& r : rows) body += to_json(r).dump() + "\n";
  write_file(o.out, body);

  RunManifest m;
  m.command = "rasterize";
  m.config["grid"] = {o.grid_h, o.grid_w};
  m.add_input("labels", o.labels);
  m.add_input("qa", o.qa);
  m.write(manifest_path(o.out));
  log << "wrote " << rows.size() << " maps for " << labels.size() << " labels\n";
  return rows.size();
}

// ----------------------------------------------------------- eval-rank

struct EvalRankOptions {
  fs::path maps_a;
  fs::path maps_b;
  fs::path out;
};

struct RankRow {
  QaId qa_id = 0;
  std::size_t glimpse = 0;
  std::optional<double> correlation;  // empty when either map is constant
};

struct RankReport {
  std::vector<RankRow> rows;
  std::optional<double> mean;
};

// Brings two maps onto a common grid by block-mean pooling the finer one.
inline std::pair<AttentionMap, AttentionMap> common_grid(const AttentionMap& a, const AttentionMap& b) {
  if (a.same_shape(b)) return {a, b};
  if (a.height() >= b.height() && a.width() >= b.width()) return {downsample(a, b.height(), b.width()), b};
  if (b.height() >= a.height() && b.width() >= a.width()) return {a, downsample(b, a.height(), a.width())};
  throw InputError("maps have incomparable grids " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                   " and " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

// Pairs supervised rows by (qa_id, glimpse) in the order of `a`.
inline RankReport rank_report(const std::vector<MapRow>& a, const std::vector<MapRow>& b) {
  std::map<std::pair<QaId, std::size_t>, const MapRow*> lookup;
  for (const auto& r : b) {
    if (r.supervised) lookup.emplace(std::pair{r.qa_id, r.glimpse}, &r);
  }
  RankReport rep;
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& r : a) {
    if (!r.supervised) continue;
    auto it = lookup.find({r.qa_id, r.glimpse});
    if (it == lookup.end()) continue;
    const auto [ma, mb] = common_grid(r.map, it->second->map);
    RankRow row{r.qa_id, r.glimpse, std::nullopt};
    try {
      row.correlation = rank_correlation(ma, mb);
      sum += *row.correlation;
      ++defined;
    } catch (const InputError&) {
    }
    rep.rows.push_back(row);
  }
  if (rep.rows.empty()) throw InputError("the two map files share no supervised (qa_id, glimpse) pairs");
  if (defined > 0) rep.mean = sum / static_cast<double>(defined);
  return rep;
}

inline std::string rank_csv(const RankReport& rep) {
  std::string out = "qa_id,glimpse,rank_corr\n";
  for (const auto& r : rep.rows) {
    out += std::to_string(r.qa_id) + "," + std::to_string(r.glimpse) + "," +
           (r.correlation ? text::format_real(*r.correlation) : std::string("undefined")) + "\n";
  }
  out += "mean,," + (rep.mean ? text::format_real(*rep.mean) : std::string("undefined")) + "\n";
  return out;
}

inline RankReport eval_rank(const EvalRankOptions& o, std::ostream& log = std::cerr) {
  const auto rep = rank_report(read_map_rows(o.maps_a), read_map_rows(o.maps_b));
  write_file(o.out, rank_csv(rep));
  RunManifest m;
  m.command = "eval-rank";
  m.add_input("maps_a", o.maps_a);
  m.add_input("maps_b", o.maps_b);
  m.write(manifest_path(o.out));
  log << "mean rank correlation over " << rep.rows.size() << " pairs: "
      << (rep.mean ? text::format_real(*rep.mean) : "undefined") << "\n";
  return rep;
}

// ------------------------------------------------------------ eval-acc

struct EvalAccOptions {
  fs::path preds;  // NDJSON {qa_id, answer}
  fs::path refs;   // NDJSON {qa_id, answers: [10 strings]}
  fs::path out;
};

struct AccReport {
  std::vector<std::pair<QaId, double>> rows;
  double mean = 0.0;
};

inline AccReport accuracy_report(const std::vector<nlohmann::json>& preds, const std::vector<nlohmann::json>& refs) {
  std::map<QaId, std::vector<std::string>> ref_by_id;
  for (const auto& r : refs) {
    try {
      ref_by_id[r.at("qa_id").get<QaId>()] = r.at("answers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("malformed reference row: ") + e.what());
    }
  }
  AccReport rep;
  double sum = 0.0;
  for (const auto& p : preds) {
    QaId id = 0;
    std::string answer;
    try {
      id = p.at("qa_id").get<QaId>();
      answer = p.at("answer").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("malformed prediction row: ") + e.what());
    }
    auto it = ref_by_id.find(id);
    if (it == ref_by_id.end()) throw InputError("prediction qa_id " + std::to_string(id) + " has no references");
    const double acc = vqa_accuracy(answer, it->second);
    rep.rows.emplace_back(id, acc);
    sum += acc;
  }
  if (rep.rows.empty()) throw InputError("no predictions to evaluate");
  rep.mean = sum / static_cast<double>(rep.rows.size());
  return rep;
}

inline std::string accuracy_csv(const AccReport& rep) {
  std::string out = "qa_id,accuracy\n";
  for (const auto& [id, acc] : rep.rows) out += std::to_string(id) + "," + text::format_real(acc) + "\n";
  out += "mean," + text::format_real(rep.mean) + "\n";
  return out;
}

inline AccReport eval_acc(const EvalAccOptions& o, std::ostream& log = std::cerr) {
  const auto preds = read_ndjson(o.preds);
  const auto refs = read_ndjson(o.refs);
  AccReport rep;
  try {
    rep = accuracy_report(preds, refs);
  } catch (const InputError& e) {
    throw LoadError(o.preds.string(), e.what());
  }
  write_file(o.out, accuracy_csv(rep));
  RunManifest m;
  m.command = "eval-acc";
  m.add_input("preds", o.preds);
  m.add_input("refs", o.refs);
  m.write(manifest_path(o.out));
  log << "mean accuracy over " << rep.rows.size() << " predictions: " << text::format_real(rep.mean) << "\n";
  return rep;
}

// ----------------------------------------------------------- train-toy

enum class AlphaMode { Cosine, Fixed };

struct TrainToyOptions {
  toy::ToyConfig model;
  toy::SyntheticOptions data;
  std::size_t samples = 8;
  AlphaMode alpha_mode = AlphaMode::Cosine;
  double alpha_value = 1.0;
  long long t_max = 0;  // 0: decay over the whole run
  std::size_t log_every = 1;
  fs::path out;  // metrics CSV
  std::optional<fs::path> params_out;
};

inline Schedule make_schedule(const TrainToyOptions& o) {
  const long long t_max = o.t_max > 0 ? o.t_max : std::max<long long>(1, static_cast<long long>(o.model.steps));
  return o.alpha_mode == AlphaMode::Cosine ? Schedule::cosine(t_max) : Schedule::fixed(o.alpha_value, t_max);
}

inline nlohmann::ordered_json train_config_json(const TrainToyOptions& o) {
  const auto sched = make_schedule(o);
  nlohmann::ordered_json j;
  j["question_dim"] = o.model.question_dim;
  j["feature_dim"] = o.model.feature_dim;
  j["grid"] = {o.model.grid_h, o.model.grid_w};
  j["glimpses"] = o.model.glimpses;
  j["answers"] = o.model.answers;
  j["fusion_dim"] = o.model.fusion_dim;
  j["seed"] = o.model.seed;
  j["steps"] = o.model.steps;
  j["lr"] = o.model.learning_rate;
  j["samples"] = o.samples;
  j["keys"] = o.data.keys;
  j["question_noise"] = o.data.question_noise;
  j["box_size"] = {o.data.min_box, o.data.max_box};
  j["alpha_mode"] = o.alpha_mode == AlphaMode::Cosine ? "cosine" : "fixed";
  if (o.alpha_mode == AlphaMode::Fixed) j["alpha_value"] = o.alpha_value;
  j["t_max"] = sched.t_max();
  j["log_every"] = o.log_every;
  return j;
}

inline fs::path params_path(const TrainToyOptions& o) {
  return o.params_out ? *o.params_out : fs::path(o.out.string() + ".params.ndjson");
}

// Samples and initial weights both derive from model.seed.
inline toy::TrainResult train_toy(const TrainToyOptions& o, std::ostream& log = std::cerr) {
  o.model.check();
  const auto sched = make_schedule(o);
  const auto data = toy::make_synthetic(o.model, o.samples, o.model.seed, o.data);
  auto result = toy::train(data, o.model, sched, o.log_every);
  write_file(o.out, metrics_csv(result.metrics));
  write_file(params_path(o), params_ndjson(o.model, result.params));

  RunManifest m;
  m.command = "train-toy";
  m.config = train_config_json(o);
  m.write(manifest_path(o.out));
  const auto& last = result.metrics.back();
  log << "step " << last.step << ": ce " << text::format_real(last.ce) << ", kl " << text::format_real(last.kl)
      << ", accuracy " << text::format_real(last.accuracy) << ", rank_corr " << text::format_real(last.rank_corr)
      << "\n";
  return result;
}

// -------------------------------------------------------------- render

struct RenderOptions {
  fs::path maps;
  fs::path out_dir;
};

inline std::string pgm_name(const MapRow& r) {
  return std::to_string(r.qa_id) + "_g" + std::to_string(r.glimpse) + ".pgm";
}

inline std::size_t render(const RenderOptions& o, std::ostream& log = std::cerr) {
  const auto rows = read_map_rows(o.maps);
  fs::create_directories(o.out_dir);
  for (const auto& r : rows) write_file(o.out_dir / pgm_name(r), encode_pgm(r.map));
  RunManifest m;
  m.command = "render";
  m.add_input("maps", o.maps);
  m.write(o.out_dir / "manifest.json");
  log << "rendered " << rows.size() << " maps into " << o.out_dir.string() << "\n";
  return rows.size();
}

}  // namespace vqag::cmd
