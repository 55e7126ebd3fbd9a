#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "simpfu/simpfu.hpp"

using namespace simpfu;

namespace {

TEST(ProcessingFactor, Arithmetic) {
  EXPECT_DOUBLE_EQ(processing_factor(1, 2.0), 5.0);
  EXPECT_DOUBLE_EQ(processing_factor(320, 16.0), 200.0);
  EXPECT_THROW(processing_factor(1, 0.0), ValidationError);
}

ArchConfig small_arch() {
  ArchConfig a;
  a.name = "bench-mini";
  a.blocks = {{4, true}, {4, true}};
  a.head_channels = 8;
  return a;
}

TEST(Bench, SequentialSpawnsNoWorkers) {
  const Network net(small_arch(), 1);
  BenchOptions opt;
  opt.n = 3;
  opt.runs = 3;
  opt.warmup = 1;
  const auto r = bench_sequential(net, opt);
  EXPECT_EQ(r.worker_threads_spawned, 0u);
  EXPECT_EQ(r.mode, BenchMode::Sequential);
  EXPECT_EQ(r.batch, 1u);
  EXPECT_EQ(r.run_seconds.size(), 3u);
  EXPECT_GT(r.processing_factor, 0.0);
  EXPECT_NEAR(r.processing_factor, 30.0 / r.wall_seconds, 1e-9);
  EXPECT_FALSE(r.includes_preprocessing);
  EXPECT_EQ(r.dsp_seconds, 0.0);
}

TEST(Bench, WallTimeIsMedianOfRuns) {
  const Network net(small_arch(), 1);
  BenchOptions opt;
  opt.n = 2;
  opt.runs = 5;
  opt.warmup = 0;
  const auto r = bench_sequential(net, opt);
  auto sorted = r.run_seconds;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_DOUBLE_EQ(r.wall_seconds, sorted[2]);
}

TEST(Bench, BatchedPadsFinalBatchAndCountsOnlyRealSegments) {
  const Network net(small_arch(), 1);
  BenchOptions opt;
  opt.n = 5;
  opt.batch = 4;
  opt.runs = 1;
  opt.threads = 2;
  const auto r = bench_batched(net, opt);
  EXPECT_EQ(r.n_segments, 5u);
  EXPECT_EQ(r.batch, 4u);
  EXPECT_NEAR(r.processing_factor, 50.0 / r.wall_seconds, 1e-9);
  EXPECT_GT(r.worker_threads_spawned, 0u);
}

TEST(Bench, IncludeDspReportsPreprocessingShare) {
  const Network net(small_arch(), 1);
  BenchOptions opt;
  opt.n = 1;
  opt.runs = 1;
  opt.warmup = 0;
  opt.include_dsp = true;
  const auto r = bench_sequential(net, opt);
  EXPECT_TRUE(r.includes_preprocessing);
  EXPECT_GT(r.dsp_seconds, 0.0);
  EXPECT_LT(r.dsp_seconds, r.wall_seconds);
}

TEST(Bench, RejectsEmptyRuns) {
  const Network net(small_arch(), 1);
  BenchOptions opt;
  opt.n = 0;
  EXPECT_THROW(bench_sequential(net, opt), ValidationError);
  EXPECT_THROW(bench_batched(net, opt), ValidationError);
}

TEST(Bench, CsvIsAppendOnly) {
  const auto path = std::filesystem::temp_directory_path() / "simpfu_bench_test.csv";
  std::filesystem::remove(path);
  BenchReport r;
  r.model_id = "B03";
  r.n_segments = 10;
  r.wall_seconds = 2.0;
  r.processing_factor = 50.0;
  append_bench_csv(path, r);
  r.model_id = "D03";
  append_bench_csv(path, r);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], kBenchCsvHeader);
  EXPECT_EQ(lines[1].substr(0, 4), "B03,");
  EXPECT_EQ(lines[2].substr(0, 4), "D03,");
  std::filesystem::remove(path);
}

}  // namespace
