#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <nlohmann/json.hpp>

#include "vqag/error.hpp"
#include "vqag/serialize.hpp"

namespace vqag {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

// What ran, with which settings, on which input bytes. Written next to every
// command's output; contains no timestamps so equal runs give equal manifests.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  struct Input {
    std::string role;
    std::string path;
    std::string sha256;
  };
  std::vector<Input> inputs;
  std::string tool_version{kToolVersion};

  void add_input(const std::string& role, const std::filesystem::path& path) {
    inputs.push_back({role, path.generic_string(), sha256_hex(read_file(path))});
  }

  // Hashes every regular file under `dir` in path order.
  void add_input_dir(const std::string& role, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string combined;
    for (const auto& f : files) {
      combined += std::filesystem::relative(f, dir).generic_string() + ":" + sha256_hex(read_file(f)) + "\n";
    }
    inputs.push_back({role, dir.generic_string(), sha256_hex(combined)});
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["tool_version"] = tool_version;
    j["config"] = config;
    j["inputs"] = nlohmann::ordered_json::object();
    for (const auto& in : inputs) j["inputs"][in.role] = {{"path", in.path}, {"sha256", in.sha256}};
    return j;
  }

  void write(const std::filesystem::path& path) const { write_file(path, to_json().dump(2) + "\n"); }
};

}  // namespace vqag
