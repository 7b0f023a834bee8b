// vqag: mine grounding labels, rasterize them into attention maps, evaluate
// maps and answers, train the toy attention model, and render heatmaps.
//
// Exit status: 0 success, 1 internal error, 2 usage or input error.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vqag/commands.hpp"

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitInput = 2;

// Expands a JSON config file into command-line tokens. Keys are flag names
// without the leading dashes; arrays become repeated values and booleans
// toggle flags. Flags that also appear on the real command line win.
std::vector<std::string> config_tokens(const std::string& path, const std::vector<std::string>& cli_args) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vqag::LoadError(path, "cannot open config file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw vqag::LoadError(path, "malformed JSON at byte " + std::to_string(e.byte));
  }
  if (!j.is_object()) throw vqag::LoadError(path, "config must be a JSON object");

  std::set<std::string> given;
  for (const auto& a : cli_args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos
                                                                                         : a.find('=') - 2));
  }
  const auto scalar = [&](const std::string& key, const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number() || v.is_boolean()) return v.dump();
    throw vqag::LoadError(path, "config key '" + key + "' must hold scalars");
  };

  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    if (given.contains(key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) tokens.push_back("--" + key);
      continue;
    }
    if (value.is_array()) {
      if (value.empty()) continue;
      const bool repeat = key == "counting-prefix";
      if (!repeat) tokens.push_back("--" + key);
      for (const auto& v : value) {
        if (repeat) tokens.push_back("--" + key);
        tokens.push_back(scalar(key, v));
      }
      continue;
    }
    tokens.push_back("--" + key);
    tokens.push_back(scalar(key, value));
  }
  return tokens;
}

// Splices `--config FILE` (anywhere after the subcommand) into explicit flags.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return rest;
  const auto extra = config_tokens(config, rest);
  // Subcommand name stays first so injected flags bind to it.
  std::vector<std::string> out;
  auto it = std::find_if(rest.begin(), rest.end(), [](const std::string& a) { return a.rfind("-", 0) != 0; });
  out.insert(out.end(), rest.begin(), it == rest.end() ? it : it + 1);
  out.insert(out.end(), extra.begin(), extra.end());
  if (it != rest.end()) out.insert(out.end(), it + 1, rest.end());
  return out;
}

void add_config_flag(CLI::App* sub) {
  // Handled by expand_config before parsing; declared here for --help.
  sub->add_option("--config", "JSON file of flag values (keys are flag names without dashes)");
}

const std::map<std::string, vqag::Containment> kContainment{{"center", vqag::Containment::Center},
                                                            {"full", vqag::Containment::Full}};
const std::map<std::string, vqag::cmd::AlphaMode> kAlphaMode{{"cosine", vqag::cmd::AlphaMode::Cosine},
                                                             {"fixed", vqag::cmd::AlphaMode::Fixed}};

}  // namespace

int main(int argc, char** argv) {
  namespace cmd = vqag::cmd;
  CLI::App app{"Visual grounding label mining and attention supervision toolkit", "vqag"};
  app.set_version_flag("--version", std::string(vqag::kToolVersion));
  app.require_subcommand(1);

  // mine
  cmd::MineOptions mine;
  std::vector<std::string> stopwords(mine.miner.stopwords.begin(), mine.miner.stopwords.end());
  auto* mine_cmd = app.add_subcommand("mine", "Mine grounding labels (NDJSON) from region/object annotations");
  mine_cmd->add_option("--regions", mine.regions, "Region descriptions JSON")->required();
  mine_cmd->add_option("--objects", mine.objects, "Object annotations JSON")->required();
  mine_cmd->add_option("--qa", mine.qa, "QA triplets JSON")->required();
  mine_cmd->add_option("--wordnet", mine.wordnet_dir, "WordNet dict directory")->required();
  mine_cmd->add_option("--aliases", mine.aliases, "Alias classes, one comma-separated class per line");
  mine_cmd->add_option("--out", mine.out, "Output labels NDJSON")->required();
  mine_cmd->add_option("--iou-threshold", mine.miner.iou_threshold, "Object de-duplication IoU threshold")
      ->capture_default_str();
  mine_cmd->add_option("--min-region-matches", mine.miner.min_region_matches, "Region match threshold")
      ->capture_default_str();
  mine_cmd->add_option("--stopwords", stopwords, "Comma-separated stopword list (replaces the default)")
      ->delimiter(',');
  mine_cmd->add_option("--counting-prefix", mine.miner.counting_prefixes,
                       "Question prefix marking a counting question (repeatable)");
  mine_cmd->add_option("--containment", mine.miner.containment, "Object-in-region test: center or full")
      ->transform(CLI::CheckedTransformer(kContainment, CLI::ignore_case));
  mine_cmd->add_option("--threads", mine.miner.threads, "Worker threads")->capture_default_str();
  add_config_flag(mine_cmd);

  // rasterize
  cmd::RasterizeOptions raster;
  std::vector<std::size_t> raster_grid{raster.grid_h, raster.grid_w};
  auto* raster_cmd = app.add_subcommand("rasterize", "Turn grounding labels into per-glimpse attention maps");
  raster_cmd->add_option("--labels", raster.labels, "Labels NDJSON from mine")->required();
  raster_cmd->add_option("--qa", raster.qa, "QA triplets JSON (image sizes)")->required();
  raster_cmd->add_option("--out", raster.out, "Output maps NDJSON")->required();
  raster_cmd->add_option("--grid", raster_grid, "Grid height and width")->expected(2);
  add_config_flag(raster_cmd);

  // eval-rank
  cmd::EvalRankOptions rank;
  auto* rank_cmd = app.add_subcommand("eval-rank", "Spearman rank correlation between two map files (CSV)");
  rank_cmd->add_option("maps_a", rank.maps_a, "First maps NDJSON")->required();
  rank_cmd->add_option("maps_b", rank.maps_b, "Second maps NDJSON")->required();
  rank_cmd->add_option("--out", rank.out, "Output CSV")->required();
  add_config_flag(rank_cmd);

  // eval-acc
  cmd::EvalAccOptions acc;
  auto* acc_cmd = app.add_subcommand("eval-acc", "Consensus answer accuracy against ten references (CSV)");
  acc_cmd->add_option("preds", acc.preds, "Predictions NDJSON {qa_id, answer}")->required();
  acc_cmd->add_option("refs", acc.refs, "References NDJSON {qa_id, answers[10]}")->required();
  acc_cmd->add_option("--out", acc.out, "Output CSV")->required();
  add_config_flag(acc_cmd);

  // train-toy
  cmd::TrainToyOptions train;
  std::vector<std::size_t> train_grid{train.model.grid_h, train.model.grid_w};
  std::vector<std::size_t> box_size{train.data.min_box, train.data.max_box};
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy attention model on a synthetic task");
  train_cmd->add_option("--out", train.out, "Output metrics CSV")->required();
  train_cmd->add_option("--params-out", train.params_out, "Output parameters NDJSON (default <out>.params.ndjson)");
  train_cmd->add_option("--alpha-mode", train.alpha_mode, "Attention loss weight schedule: cosine or fixed")
      ->transform(CLI::CheckedTransformer(kAlphaMode, CLI::ignore_case));
  train_cmd->add_option("--alpha-value", train.alpha_value, "Weight for --alpha-mode fixed")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_option("--t-max", train.t_max, "Schedule length in steps (0: --steps)")->capture_default_str();
  train_cmd->add_option("--grid", train_grid, "Grid height and width")->expected(2);
  train_cmd->add_option("--seed", train.model.seed, "Seed for data and initialization")->capture_default_str();
  train_cmd->add_option("--steps", train.model.steps, "Gradient steps")->capture_default_str();
  train_cmd->add_option("--lr", train.model.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--samples", train.samples, "Synthetic samples")->capture_default_str();
  train_cmd->add_option("--log-every", train.log_every, "Metrics interval in steps")->capture_default_str();
  train_cmd->add_option("--question-dim", train.model.question_dim, "Question feature size")->capture_default_str();
  train_cmd->add_option("--feature-dim", train.model.feature_dim, "Image feature channels")->capture_default_str();
  train_cmd->add_option("--fusion-dim", train.model.fusion_dim, "Fusion width (must equal --feature-dim)")
      ->capture_default_str();
  train_cmd->add_option("--glimpses", train.model.glimpses, "Attention glimpses")->capture_default_str();
  train_cmd->add_option("--answers", train.model.answers, "Answer classes")->capture_default_str();
  train_cmd->add_option("--keys", train.data.keys, "Synthetic question types")->capture_default_str();
  train_cmd->add_option("--question-noise", train.data.question_noise, "Synthetic question noise amplitude")
      ->capture_default_str();
  train_cmd->add_option("--box-size", box_size, "Planted box side range in cells (min max)")->expected(2);
  add_config_flag(train_cmd);

  // render
  cmd::RenderOptions render;
  auto* render_cmd = app.add_subcommand("render", "Write one PGM image per (qa_id, glimpse) map");
  render_cmd->add_option("maps", render.maps, "Maps NDJSON")->required();
  render_cmd->add_option("--out-dir", render.out_dir, "Output directory")->required();
  add_config_flag(render_cmd);

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  } catch (const vqag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*mine_cmd) {
      std::erase(stopwords, std::string());
      mine.miner.stopwords = {stopwords.begin(), stopwords.end()};
      cmd::mine(mine);
    } else if (*raster_cmd) {
      raster.grid_h = raster_grid[0];
      raster.grid_w = raster_grid[1];
      cmd::rasterize(raster);
    } else if (*rank_cmd) {
      cmd::eval_rank(rank);
    } else if (*acc_cmd) {
      cmd::eval_acc(acc);
    } else if (*train_cmd) {
      train.model.grid_h = train_grid[0];
      train.model.grid_w = train_grid[1];
      train.data.min_box = box_size[0];
      train.data.max_box = box_size[1];
      cmd::train_toy(train);
    } else if (*render_cmd) {
      cmd::render(render);
    }
  } catch (const vqag::LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const vqag::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return EXIT_SUCCESS;
}
