#pragma once

// Drives the CLI end to end (synth, extract, rank, train, predict, eval) in
// process and returns the bytes of every artifact it wrote.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "satfuse/cli.hpp"

namespace pipeline {

inline int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "satfuse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = satfuse::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

struct Result {
  bool ok = true;
  std::string failed_step;
  std::map<std::string, std::vector<std::uint8_t>> files;
};

inline Result full(const std::filesystem::path& dir, int per_class, int epochs, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };
  {
    std::ofstream cfg(p("model.cfg"));
    cfg << "epochs = " << epochs << "\nbatch_size = 16\nseed = " << seed << "\nreproducible = true\n";
  }
  const std::vector<std::vector<std::string>> steps{
      {"synth", "--out", p("train.satbin"), "--classes", "4", "--per-class", std::to_string(per_class), "--seed",
       std::to_string(seed)},
      {"synth", "--out", p("test.satbin"), "--classes", "4", "--per-class", std::to_string(per_class / 2 + 1),
       "--seed", std::to_string(seed + 1000)},
      {"extract", "--in", p("train.satbin"), "--out", p("train_all.csv")},
      {"rank", "--features", p("train_all.csv"), "--threshold", "0.3", "--out", p("ranking.csv")},
      {"extract", "--in", p("train.satbin"), "--out", p("train_sel.csv"), "--ranking", p("ranking.csv")},
      {"extract", "--in", p("test.satbin"), "--out", p("test_sel.csv"), "--ranking", p("ranking.csv"), "--threads",
       "2"},
      {"train", "--train", p("train.satbin"), "--test", p("test.satbin"), "--features-train", p("train_sel.csv"),
       "--features-test", p("test_sel.csv"), "--config", p("model.cfg"), "--out", p("model.ckpt"), "--report",
       p("report.csv")},
      {"predict", "--ckpt", p("model.ckpt"), "--in", p("test.satbin"), "--features", p("test_sel.csv"), "--out",
       p("pred.csv")},
      {"eval", "--pred", p("pred.csv"), "--labels", p("test.satbin"), "--out", p("eval.csv")},
      {"stats", "--in", p("train.satbin"), "--features", p("train_sel.csv"), "--out", p("stats.csv")},
  };
  Result r;
  for (const auto& s : steps) {
    std::string err;
    if (run(s, &err) != 0) {
      r.ok = false;
      r.failed_step = s.front() + ": " + err;
      return r;
    }
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    r.files[entry.path().filename().string()] = satfuse::io::read_file(entry.path());
  return r;
}

}  // namespace pipeline
