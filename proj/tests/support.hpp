#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "vqag/lexicon.hpp"

namespace vqag::test {

namespace fs = std::filesystem;

inline const fs::path kFixtures{VQAG_FIXTURES};
inline const fs::path kWordnetDir{VQAG_WORDNET_DIR};
inline const fs::path kAliases{VQAG_ALIASES};
inline const std::string kCli{VQAG_CLI};

// WordNet plus the alias table, loaded once per process.
inline const Lexicon& shared_lexicon() {
  static const Lexicon lex = [] {
    Lexicon l = load_wordnet(kWordnetDir);
    load_aliases(l, kAliases);
    return l;
  }();
  return lex;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    for (int attempt = 0; attempt < 100; ++attempt) {
      path_ = fs::temp_directory_path() / ("vqag-test-" + std::to_string(rd()));
      if (fs::create_directory(path_)) return;
    }
    throw std::runtime_error("cannot create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline CliResult run_cli(const std::vector<std::string>& args) {
  std::string command = quote(kCli);
  for (const auto& a : args) command += " " + quote(a);
  command += " 2>&1";
  CliResult r;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::vector<std::string> park_bench_mine_args(const fs::path& out) {
  const auto dir = kFixtures / "park_bench";
  return {"mine",      "--regions", (dir / "regions.json").string(), "--objects", (dir / "objects.json").string(),
          "--qa",      (dir / "qa.json").string(),  "--wordnet", kWordnetDir.string(),
          "--aliases", kAliases.string(),           "--out",     out.string()};
}

}  // namespace vqag::test
