#pragma once

// File formats: attention-map NDJSON rows, binary PGM renders, toy metrics CSV
// and toy parameter NDJSON.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqag/attention_map.hpp"
#include "vqag/error.hpp"
#include "vqag/text.hpp"
#include "vqag/toy_model.hpp"

namespace vqag {

struct MapRow {
  QaId qa_id = 0;
  std::size_t glimpse = 0;
  bool supervised = true;
  AttentionMap map;

  bool operator==(const MapRow&) const = default;
};

inline nlohmann::ordered_json real_array(std::span<const double> values) {
  auto arr = nlohmann::ordered_json::array();
  for (double v : values) arr.push_back(text::round_sig9(v));
  return arr;
}

inline nlohmann::ordered_json to_json(const MapRow& row) {
  nlohmann::ordered_json j;
  j["qa_id"] = row.qa_id;
  j["glimpse"] = row.glimpse;
  j["h"] = row.map.height();
  j["w"] = row.map.width();
  j["supervised"] = row.supervised;
  j["values"] = real_array(row.map.values());
  return j;
}

inline MapRow map_row_from_json(const nlohmann::json& j) {
  try {
    MapRow row;
    row.qa_id = j.at("qa_id").get<QaId>();
    row.glimpse = j.at("glimpse").get<std::size_t>();
    row.supervised = j.value("supervised", true);
    row.map = AttentionMap(j.at("h").get<std::size_t>(), j.at("w").get<std::size_t>(),
                           j.at("values").get<std::vector<double>>());
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed attention-map row: ") + e.what());
  }
}

// Parses one JSON document per non-blank line.
inline std::vector<nlohmann::json> read_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open file");
  std::vector<nlohmann::json> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      docs.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError(path.string(), "malformed JSON on line " + std::to_string(line_no) + " at byte " +
                                         std::to_string(e.byte));
    }
  }
  return docs;
}

inline std::vector<MapRow> read_map_rows(const std::filesystem::path& path) {
  std::vector<MapRow> rows;
  for (const auto& doc : read_ndjson(path)) {
    try {
      rows.push_back(map_row_from_json(doc));
    } catch (const InputError& e) {
      throw LoadError(path.string(), e.what());
    }
  }
  return rows;
}

// 8-bit binary PGM scaled so the largest cell is 255; an all-zero map is black.
inline std::string encode_pgm(const AttentionMap& m) {
  std::string out = "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n255\n";
  const auto v = m.values();
  const double mx = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  for (double x : v) {
    const double scaled = mx > 0.0 ? std::round(255.0 * x / mx) : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0))));
  }
  return out;
}

inline std::string metrics_csv(const std::vector<toy::StepMetrics>& metrics) {
  std::string out = "step,ce,kl,alpha,accuracy,rank_corr\n";
  for (const auto& m : metrics) {
    out += std::to_string(m.step) + "," + text::format_real(m.ce) + "," + text::format_real(m.kl) + "," +
           text::format_real(m.alpha) + "," + text::format_real(m.accuracy) + "," + text::format_real(m.rank_corr) +
           "\n";
  }
  return out;
}

inline std::string params_ndjson(const toy::ToyConfig& cfg, toy::ToyParams<double> params) {
  std::string out;
  for (const auto& t : params.tensors(cfg)) {
    nlohmann::ordered_json j;
    j["name"] = t.name;
    j["shape"] = {t.shape[0], t.shape[1]};
    j["values"] = real_array(*t.data);
    out += j.dump() + "\n";
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError(path.string(), "cannot write file");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw LoadError(path.string(), "write failed");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace vqag
