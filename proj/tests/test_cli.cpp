#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "support/synth.hpp"

using namespace simpfu;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("simpfu_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const fs::path log = dir_ / "stdout.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" SIMPFU_CLI_PATH "' " + args + " > '" + log.string() +
                            "' 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  std::vector<fs::path> runs() const {
    std::vector<fs::path> out;
    if (!fs::exists(dir_ / "runs")) return out;
    for (const auto& e : fs::directory_iterator(dir_ / "runs")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
  }

  fs::path only_run(const std::string& suffix) const {
    for (const auto& p : runs())
      if (p.filename().string().ends_with(suffix)) return p;
    return {};
  }

  fs::path dir_;
};

TEST_F(Cli, MrfSingleModel) {
  const auto r = run("mrf --group E --index 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("mrf_bins=76"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("mrf_seconds=1.48"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("n_params=1770100"), std::string::npos) << r.out;
  EXPECT_TRUE(runs().empty());
}

TEST_F(Cli, MrfTableHasFortyRows) {
  const auto r = run("mrf --all");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 41);
  EXPECT_NE(r.out.find("D03,76,"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("mrf --group E --index 9").code, 1);
  EXPECT_EQ(run("mrf --group E").code, 1);
  const auto r = run("bench --model B03 --out r.csv --no-such-flag");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("--no-such-flag"), std::string::npos) << r.out;
  EXPECT_EQ(run("").code, 1);
}

TEST_F(Cli, MissingInputDirectoryLeavesNothing) {
  const auto r = run("train --data does_not_exist --epochs 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("does_not_exist"), std::string::npos);
  EXPECT_TRUE(runs().empty());
  EXPECT_EQ(run("preprocess --input nowhere").code, 1);
  EXPECT_EQ(run("eval --model none.json --data nowhere").code, 1);
  EXPECT_TRUE(runs().empty());
}

TEST_F(Cli, RuntimeFailureExitsTwoWithoutRunDirectory) {
  fs::create_directories(dir_ / "data");
  {
    std::ofstream(dir_ / "w.json") << "{\"not\": \"weights\"";
  }
  const auto r = run("bench --model w.json --out r.csv --n 1 --runs 1 --warmup 0");
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(runs().empty());
}

TEST_F(Cli, EndToEndPipeline) {
  // Two 10 s recordings: a tone burst (class 0) and a chirp (class 1).
  auto w0 = synth::silence();
  synth::add_tone(w0, 1500.0, 0.5, 2.0, 3.0);
  auto w1 = synth::silence();
  synth::add_chirp(w1, 800.0, 3000.0, 0.5, 5.0, 2.0);
  std::mt19937_64 rng(1);
  synth::add_noise(w0, 0.01, rng);
  synth::add_noise(w1, 0.01, rng);
  fs::create_directories(dir_ / "wav");
  write_wav_mono(dir_ / "wav" / "tone.wav", w0.samples);
  write_wav_mono(dir_ / "wav" / "chirp.wav", w1.samples);
  {
    std::ofstream csv(dir_ / "ann.csv");
    csv << "segment_id,class_id,start_s,end_s\ntone_0,0,2,5\nchirp_0,1,5,7\n";
  }

  auto r = run("preprocess --input wav");
  ASSERT_EQ(r.code, 0) << r.out;
  r = run("encode-labels --annotations ann.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path pre = only_run("-preprocess");
  const fs::path enc = only_run("-encode-labels");
  ASSERT_FALSE(pre.empty());
  ASSERT_FALSE(enc.empty());
  EXPECT_TRUE(fs::exists(pre / "spectrograms" / "tone_0.sfus"));
  EXPECT_TRUE(fs::exists(enc / "labels" / "chirp_0.sful"));

  fs::create_directories(dir_ / "data");
  for (const auto& id : {"tone_0", "chirp_0"}) {
    fs::copy_file(pre / "spectrograms" / (std::string(id) + ".sfus"), dir_ / "data" / (std::string(id) + ".sfus"));
    fs::copy_file(enc / "labels" / (std::string(id) + ".sful"), dir_ / "data" / (std::string(id) + ".sful"));
  }
  {
    std::ofstream cfg(dir_ / "train.cfg");
    cfg << "# small smoke run\nmodel = B07\nn_classes = 2\nhead_channels = 8\nepochs = 5\n"
           "batch_size = 2\ntarget_epoch_size = 0\naugment = false\nreplicates = 2\n";
  }
  r = run("train --data data --config train.cfg --epochs 1 --seed 3");
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path tr = only_run("-train");
  ASSERT_FALSE(tr.empty());
  const auto manifest = nlohmann::json::parse(std::ifstream(tr / "manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["config"]["epochs"], 1);  // flag beats config file
  EXPECT_EQ(manifest["config"]["model"], "B07");
  EXPECT_EQ(manifest["seeds"], nlohmann::json::array({3, 4}));
  EXPECT_TRUE(fs::exists(std::string(manifest["artifacts"]["weights_r1"])));
  EXPECT_TRUE(manifest.contains("version"));
  const std::string weights = manifest["artifacts"]["weights_r0"];
  EXPECT_TRUE(fs::exists(weights));

  r = run("eval --model '" + weights + "' --data data");
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path ev = only_run("-eval");
  EXPECT_TRUE(fs::exists(ev / "per_class.csv"));
  const auto summary = nlohmann::json::parse(std::ifstream(ev / "summary.json"));
  EXPECT_EQ(summary["n_segments"], 2);

  r = run("predict --model '" + weights + "' --input wav/tone.wav --time-indexed");
  ASSERT_EQ(r.code, 0) << r.out;
  const fs::path pr = only_run("-predict");
  std::ifstream seg(pr / "segment_scores.csv");
  std::string header, row;
  std::getline(seg, header);
  std::getline(seg, row);
  EXPECT_EQ(header, "segment,class_0,class_1");
  EXPECT_EQ(row.substr(0, 7), "tone_0,");
  EXPECT_TRUE(fs::exists(pr / "time_scores.csv"));

  // No staging directories left behind.
  for (const auto& p : runs()) EXPECT_NE(p.filename().string()[0], '.');
}

TEST_F(Cli, BenchAppendsToReport) {
  for (int k = 0; k < 2; ++k) {
    const auto r = run("bench --model B07 --n 1 --runs 1 --warmup 0 --out report.csv");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  std::ifstream in(dir_ / "report.csv");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 3);
  EXPECT_EQ(run("bench --model B07 --mode turbo --out report.csv").code, 1);
}

}  // namespace
