#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "isosr/tensor.hpp"

namespace testutil {

template <class T>
void fill_uniform(isosr::Tensor<T>& t, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (isosr::i64 i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(d(rng));
}

inline double rel_err(double a, double b, double floor = 1.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class A, class B>
double max_rel_diff(const isosr::Tensor<A>& a, const isosr::Tensor<B>& b, double floor = 1.0) {
  double worst = 0.0;
  for (isosr::i64 i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, rel_err(static_cast<double>(a[i]), static_cast<double>(b[i]), floor));
  }
  return worst;
}

// Self-cleaning unique directory under the system temp root.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& stem) {
    std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / (stem + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the installed command-line binary with stdout/stderr captured to files.
inline CliResult run_cli(const std::string& args, const std::string& env = "") {
  static int serial = 0;
  const std::string tag = std::to_string(++serial) + "_" + std::to_string(::getpid());
  const std::string out_path = (std::filesystem::temp_directory_path() / ("cli_out_" + tag)).string();
  const std::string err_path = (std::filesystem::temp_directory_path() / ("cli_err_" + tag)).string();
  const std::string cmd =
      (env.empty() ? "" : "env " + env + " ") + std::string(ISOSR_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out_path);
  r.err = read_file(err_path);
  std::error_code ec;
  std::filesystem::remove(out_path, ec);
  std::filesystem::remove(err_path, ec);
  return r;
}

}  // namespace testutil
