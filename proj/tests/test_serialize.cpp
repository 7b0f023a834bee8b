#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "support.hpp"
#include "vqag/manifest.hpp"
#include "vqag/serialize.hpp"
#include "vqag/text.hpp"

using namespace vqag;

namespace {

// Reference P5 encoder written from the format description.
std::string reference_pgm(std::size_t h, std::size_t w, const std::vector<double>& v) {
  double mx = 0.0;
  for (double x : v) mx = std::max(mx, x);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double x : v) {
    const long level = mx > 0 ? std::lround(x / mx * 255.0) : 0;
    out += static_cast<char>(static_cast<unsigned char>(level));
  }
  return out;
}

}  // namespace

TEST(FormatReal, NineSignificantDigits) {
  EXPECT_EQ(text::format_real(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(text::format_real(0.0), "0");
  EXPECT_EQ(text::format_real(1.0), "1");
  EXPECT_EQ(text::format_real(123456789012.0), "1.23456789e+11");
}

TEST(MapRow, JsonRoundTripAtNineDigits) {
  const MapRow row{42, 1, false, AttentionMap(2, 2, {0.1, 0.2, 1.0 / 3.0, 0.0})};
  const auto j = to_json(row);
  EXPECT_EQ(j.dump(), R"({"qa_id":42,"glimpse":1,"h":2,"w":2,"supervised":false,"values":[0.1,0.2,0.333333333,0.0]})");
  const auto back = map_row_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.qa_id, 42);
  EXPECT_FALSE(back.supervised);
  EXPECT_NEAR(back.map.at(1, 0), 1.0 / 3.0, 1e-9);
  EXPECT_THROW(map_row_from_json(nlohmann::json::parse(R"({"qa_id":1})")), InputError);
}

TEST(Pgm, UniformMapIsConstantGray) {
  const auto pgm = encode_pgm(AttentionMap(3, 4, std::vector<double>(12, 1.0 / 12)));
  const std::string header = "P5\n4 3\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  const auto body = pgm.substr(header.size());
  ASSERT_EQ(body.size(), 12u);
  for (char c : body) EXPECT_EQ(c, body[0]);
}

TEST(Pgm, PointMassIsOneWhitePixel) {
  AttentionMap m(5, 5);
  m.at(2, 3) = 1.0;
  const auto pgm = encode_pgm(m);
  const auto body = pgm.substr(std::string("P5\n5 5\n255\n").size());
  for (std::size_t i = 0; i < body.size(); ++i) {
    EXPECT_EQ(static_cast<unsigned char>(body[i]), i == 2 * 5 + 3 ? 255 : 0);
  }
}

TEST(Pgm, MatchesReferenceEncoder) {
  std::vector<double> v(14 * 14);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fmod(static_cast<double>(i) * 0.37, 1.0);
  EXPECT_EQ(encode_pgm(AttentionMap(14, 14, v)), reference_pgm(14, 14, v));
  EXPECT_EQ(encode_pgm(AttentionMap(2, 2)), reference_pgm(2, 2, {0, 0, 0, 0}));
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, Shape) {
  vqag::test::TempDir dir;
  vqag::test::spit(dir / "in.txt", "abc");
  RunManifest m;
  m.command = "demo";
  m.config["k"] = 3;
  m.add_input("source", dir / "in.txt");
  const auto j = m.to_json();
  EXPECT_EQ(j["command"], "demo");
  EXPECT_EQ(j["tool_version"], "0.1.0");
  EXPECT_EQ(j["config"]["k"], 3);
  EXPECT_EQ(j["inputs"]["source"]["sha256"], sha256_hex("abc"));
}

TEST(Ndjson, ReportsLineOfBadJson) {
  vqag::test::TempDir dir;
  vqag::test::spit(dir / "x.ndjson", "{\"a\":1}\n\n{oops}\n");
  try {
    read_ndjson(dir / "x.ndjson");
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(MetricsCsv, Header) {
  const std::vector<toy::StepMetrics> rows = {{0, 1.5, 2.0, 1.0, 0.25, 0.1}};
  EXPECT_EQ(metrics_csv(rows), "step,ce,kl,alpha,accuracy,rank_corr\n0,1.5,2,1,0.25,0.1\n");
}
