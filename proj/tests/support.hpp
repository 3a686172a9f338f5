#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "procqa/error.hpp"

namespace support {

// Runs f and returns the code of the procqa::Error it throws.
template <class F>
procqa::Error caught(F&& f) {
  try {
    f();
  } catch (const procqa::Error& e) {
    return e;
  }
  FAIL("expected a procqa::Error");
  return procqa::Error(procqa::Errc::IoError, "unreachable");
}

template <class F>
procqa::Errc code_of(F&& f) {
  return caught(std::forward<F>(f)).code();
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::filesystem::path data_dir() { return PROCQA_TEST_DATA_DIR; }
inline std::filesystem::path source_dir() { return PROCQA_SOURCE_DIR; }

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() /
             ("procqa_test_" + name + "_" + std::to_string(rng() % 1000000007));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
