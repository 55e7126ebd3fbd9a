// simpfu command-line entry point.
//
// Every command except `mrf` writes into a fresh run directory
// <runs-dir>/<timestamp>-<command>/ holding manifest.json and its outputs.
// Work happens in a hidden staging directory that is renamed into place only
// on success, so failed runs leave nothing behind.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "simpfu/simpfu.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace simpfu;

namespace {

std::string utc_now(const char* fmt) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, fmt);
  return os.str();
}

class RunDir {
 public:
  RunDir(const fs::path& root, const std::string& command) : command_(command), started_(utc_now("%Y-%m-%dT%H:%M:%SZ")) {
    const std::string stamp = utc_now("%Y%m%dT%H%M%SZ");
    const fs::path abs_root = fs::absolute(root);
    fs::create_directories(abs_root);
    final_ = abs_root / (stamp + "-" + command);
    for (int k = 1; fs::exists(final_); ++k) final_ = abs_root / (stamp + "-" + command + "-" + std::to_string(k));
    staging_ = abs_root / ("." + final_.filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~RunDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const fs::path& path() const { return staging_; }
  fs::path final_path() const { return final_; }
  void add_artifact(const std::string& role, const fs::path& p) { artifacts_[role] = p; }

  // Writes the manifest and moves the run into place. Paths recorded in the
  // manifest point at the final location.
  void commit(const json& config, const json& seeds, const json& results = json::object()) {
    json arts = json::object();
    for (const auto& [role, p] : artifacts_) {
      const auto rel = p.lexically_relative(staging_);
      arts[role] = (!rel.empty() && rel.native()[0] != '.') ? (final_ / rel).string() : p.string();
    }
    const json manifest = {{"command", command_},
                           {"tool", "simpfu"},
                           {"version", kVersion},
                           {"started_utc", started_},
                           {"finished_utc", utc_now("%Y-%m-%dT%H:%M:%SZ")},
                           {"config", config},
                           {"seeds", seeds},
                           {"artifacts", arts},
                           {"results", results}};
    std::ofstream(staging_ / "manifest.json") << manifest.dump(2) << '\n';
    fs::rename(staging_, final_);
    committed_ = true;
    std::cout << "run directory: " << final_.string() << '\n';
  }

 private:
  std::string command_;
  std::string started_;
  fs::path final_;
  fs::path staging_;
  std::map<std::string, fs::path> artifacts_;
  bool committed_ = false;
};

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw ValidationError(what + " directory not found: " + p.string());
}

std::vector<fs::path> files_with_ext(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Pairs <id>.sfus with <id>.sful in one directory.
struct NamedExample {
  std::string id;
  LabeledSpectrogram example;
};

std::vector<NamedExample> load_dataset(const fs::path& dir) {
  require_dir(dir, "data");
  std::vector<NamedExample> out;
  for (const auto& spec_path : files_with_ext(dir, ".sfus")) {
    auto label_path = spec_path;
    label_path.replace_extension(".sful");
    if (!fs::exists(label_path)) throw ValidationError("missing labels for " + spec_path.string());
    NamedExample ex{spec_path.stem().string(), {read_spectrogram(spec_path), read_time_labels(label_path)}};
    if (ex.example.spec.data.rows != kTimeBins || ex.example.spec.data.cols != 128)
      throw ValidationError(spec_path.string() + ": expected a 512x128 spectrogram");
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw ValidationError("no .sfus/.sful pairs in " + dir.string());
  return out;
}

std::vector<LabeledSpectrogram> examples_of(const std::vector<NamedExample>& v) {
  std::vector<LabeledSpectrogram> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e.example);
  return out;
}

// Input spectrograms for predict: WAV file, directory of WAVs, or directory of .sfus.
std::vector<std::pair<std::string, MelSpectrogram>> load_inputs(const fs::path& in) {
  std::vector<std::pair<std::string, MelSpectrogram>> out;
  auto add_wav = [&](const fs::path& p) {
    for (const auto& seg : load_wav_segments(p))
      out.emplace_back(seg.source_id + "_" + std::to_string(seg.segment_index), preprocess(seg));
  };
  if (fs::is_regular_file(in)) {
    if (in.extension() == ".sfus") {
      out.emplace_back(in.stem().string(), read_spectrogram(in));
    } else {
      add_wav(in);
    }
    return out;
  }
  require_dir(in, "input");
  for (const auto& p : files_with_ext(in, ".wav")) add_wav(p);
  for (const auto& p : files_with_ext(in, ".sfus")) out.emplace_back(p.stem().string(), read_spectrogram(p));
  if (out.empty()) throw ValidationError("no .wav or .sfus inputs in " + in.string());
  return out;
}

// Model argument: a weights manifest, or a model id (B03) for random weights.
Network load_model(const std::string& model, std::uint64_t seed) {
  if (fs::exists(model)) return load_weights(model);
  if (model.size() == 3) return Network(ModelSpec::parse(model), seed);
  throw ValidationError("model must be a weights manifest or a model id like B03: " + model);
}

// key = value lines; '#' starts a comment.
std::map<std::string, std::string> read_config(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open config " + p.string());
  std::map<std::string, std::string> kv;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(p.string() + ":" + std::to_string(n) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config " + key + ": expected true/false, got " + v);
  } else {
    is >> out;
    if (!is || !is.eof()) throw ValidationError("config " + key + ": malformed value " + v);
  }
  return out;
}

json report_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json per = json::array();
  for (std::size_t c = 0; c < r.per_class_auc.size(); ++c)
    per.push_back({{"class", c}, {"auc", opt(r.per_class_auc[c])}, {"ap", opt(r.per_class_ap[c])},
                   {"proportion", r.class_proportions[c]}});
  return {{"n_segments", r.n_segments},
          {"macro_auc", std::isnan(r.macro_auc) ? json(nullptr) : json(r.macro_auc)},
          {"macro_ap", std::isnan(r.macro_ap) ? json(nullptr) : json(r.macro_ap)},
          {"undefined_auc_classes", r.undefined_auc},
          {"undefined_ap_classes", r.undefined_ap},
          {"per_class", per}};
}

void write_eval_csv(const fs::path& p, const EvalReport& r) {
  std::ofstream out(p);
  out << "class,auc,ap,proportion\n";
  auto cell = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  for (std::size_t c = 0; c < r.per_class_auc.size(); ++c)
    out << c << ',' << cell(r.per_class_auc[c]) << ',' << cell(r.per_class_ap[c]) << ',' << r.class_proportions[c]
        << '\n';
}

// ------------------------------------------------------------------ commands

struct Common {
  std::string runs_dir = "runs";
};

int cmd_preprocess(const Common& common, const std::string& input) {
  std::vector<fs::path> wavs;
  if (fs::is_regular_file(input)) {
    wavs.push_back(input);
  } else {
    require_dir(input, "input");
    wavs = files_with_ext(input, ".wav");
    if (wavs.empty()) throw ValidationError("no .wav files in " + input);
  }
  std::vector<std::pair<std::string, MelSpectrogram>> specs;
  std::size_t degenerate = 0;
  for (const auto& w : wavs)
    for (const auto& seg : load_wav_segments(w)) {
      specs.emplace_back(seg.source_id + "_" + std::to_string(seg.segment_index), preprocess(seg));
      degenerate += specs.back().second.degenerate;
    }
  RunDir run(common.runs_dir, "preprocess");
  const fs::path out = run.path() / "spectrograms";
  fs::create_directories(out);
  for (const auto& [id, spec] : specs) write_spectrogram(out / (id + ".sfus"), spec);
  run.add_artifact("spectrograms", out);
  run.commit({{"input", input}, {"dsp", {{"window", 2048}, {"hop", 938}, {"mels", 128}, {"band_hz", {100, 5000}}}}},
             json::object(), {{"segments", specs.size()}, {"degenerate_segments", degenerate}});
  std::cout << "wrote " << specs.size() << " spectrograms\n";
  return 0;
}

int cmd_encode_labels(const Common& common, const std::string& csv, std::size_t resolution) {
  if (!fs::is_regular_file(csv)) throw ValidationError("annotation file not found: " + csv);
  const auto groups = read_annotations_csv(fs::path(csv));
  std::vector<std::pair<std::string, LabelMatrix>> mats;
  for (const auto& [id, anns] : groups) mats.emplace_back(id, downsample(encode(anns), resolution));
  RunDir run(common.runs_dir, "encode-labels");
  const fs::path out = run.path() / "labels";
  fs::create_directories(out);
  for (const auto& [id, m] : mats) write_labels(out / (id + ".sful"), m);
  run.add_artifact("labels", out);
  run.commit({{"annotations", csv}, {"resolution", resolution}}, json::object(), {{"segments", mats.size()}});
  std::cout << "wrote " << mats.size() << " label matrices\n";
  return 0;
}

void print_mrf_row(const MrfReport& r) {
  std::cout << r.model << ',' << r.mrf_time_bins << ',' << std::fixed << std::setprecision(4) << r.mrf_seconds << ','
            << r.output_time_res << ',' << (r.output_freq_collapsed ? 1 : 0) << ',' << r.n_params << '\n';
}

int cmd_mrf(const std::string& group, int index, bool all) {
  if (all) {
    std::cout << "model,mrf_bins,mrf_seconds,output_time_res,output_freq_collapsed,n_params\n";
    for (const auto& r : mrf_table()) print_mrf_row(r);
    return 0;
  }
  if (group.size() != 1) throw ValidationError("--group must be one of A..E");
  ModelSpec s;
  s.group = group[0];
  s.index = index;
  const auto r = compute_mrf(s);
  std::cout << "model=" << r.model << " mrf_bins=" << r.mrf_time_bins << " mrf_seconds=" << std::setprecision(3)
            << r.mrf_seconds << " output_time_res=" << r.output_time_res
            << " output_freq_collapsed=" << (r.output_freq_collapsed ? "true" : "false") << " n_params=" << r.n_params
            << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string model = "B03";
  std::size_t n_classes = kNumClasses;
  std::size_t head_channels = 256;
  TrainConfig cfg;
  std::string val;
};

int cmd_train(const Common& common, TrainArgs a, const CLI::App& sub) {
  if (!a.config.empty()) {
    for (const auto& [k, v] : read_config(a.config)) {
      // Explicit flags win over the file.
      const std::string flag = "--" + k;
      bool given = false;
      try {
        given = sub.get_option(flag)->count() > 0;
      } catch (const CLI::OptionNotFound&) {
        throw ValidationError("unknown config key: " + k);
      }
      if (given) continue;
      if (k == "model") a.model = v;
      else if (k == "n_classes") a.n_classes = parse_value<std::size_t>(k, v);
      else if (k == "head_channels") a.head_channels = parse_value<std::size_t>(k, v);
      else if (k == "epochs") a.cfg.epochs = parse_value<std::size_t>(k, v);
      else if (k == "batch_size") a.cfg.batch_size = parse_value<std::size_t>(k, v);
      else if (k == "lr0") a.cfg.lr0 = parse_value<double>(k, v);
      else if (k == "decay") a.cfg.decay = parse_value<double>(k, v);
      else if (k == "seed") a.cfg.seed = parse_value<std::uint64_t>(k, v);
      else if (k == "target_epoch_size") a.cfg.target_epoch_size = parse_value<std::size_t>(k, v);
      else if (k == "augment") a.cfg.augment = parse_value<bool>(k, v);
      else if (k == "max_freq_shift") a.cfg.augmentation.max_freq_shift = parse_value<int>(k, v);
      else if (k == "mix_prob") a.cfg.augmentation.mix_prob = parse_value<double>(k, v);
      else if (k == "replicates") a.cfg.replicates = parse_value<std::size_t>(k, v);
      else if (k == "val") a.val = v;
      else if (k == "data") a.data = v;
      else throw ValidationError("unsupported config key: " + k);
    }
  }
  if (a.data.empty()) throw ValidationError("--data is required");
  a.cfg.validate();
  ModelSpec spec = ModelSpec::parse(a.model);
  spec.n_classes = a.n_classes;
  spec.head_channels = a.head_channels;
  const ArchConfig arch = spec.arch();
  const auto data = examples_of(load_dataset(a.data));
  std::vector<LabeledSpectrogram> val;
  if (!a.val.empty()) val = examples_of(load_dataset(a.val));

  RunDir run(common.runs_dir, "train");
  json seeds = json::array();
  json results = json::array();
  for (std::size_t r = 0; r < a.cfg.replicates; ++r) {
    TrainConfig cfg = a.cfg;
    cfg.seed = a.cfg.seed + r;
    seeds.push_back(cfg.seed);
    const fs::path log_path = run.path() / ("loss_r" + std::to_string(r) + ".csv");
    std::ofstream log(log_path);
    log << "epoch,loss" << (val.empty() ? "" : ",val_macro_auc,val_macro_ap") << '\n';
    auto on_epoch = [&](std::size_t epoch, const Network& net, double loss) {
      log << epoch << ',' << loss;
      std::cout << "replicate " << r << " epoch " << epoch << " loss " << loss;
      if (!val.empty()) {
        const auto rep = evaluate(net, val);
        log << ',' << rep.macro_auc << ',' << rep.macro_ap;
        std::cout << " val_auc " << rep.macro_auc;
      }
      log << '\n';
      std::cout << '\n';
      return true;
    };
    const auto res = train(data, arch, cfg, on_epoch);
    const fs::path weights = run.path() / ("weights_r" + std::to_string(r) + ".json");
    save_weights(res.network, weights, {{"seed", cfg.seed}, {"epochs", cfg.epochs}, {"steps", res.steps}});
    run.add_artifact("weights_r" + std::to_string(r), weights);
    run.add_artifact("loss_r" + std::to_string(r), log_path);
    results.push_back({{"seed", cfg.seed}, {"steps", res.steps}, {"epoch_loss", res.epoch_loss}});
  }
  const json config = {{"data", a.data},
                       {"val", a.val},
                       {"model", spec.id()},
                       {"arch", arch_to_json(arch)},
                       {"epochs", a.cfg.epochs},
                       {"batch_size", a.cfg.batch_size},
                       {"lr0", a.cfg.lr0},
                       {"decay", a.cfg.decay},
                       {"target_epoch_size", a.cfg.target_epoch_size},
                       {"augment", a.cfg.augment},
                       {"max_freq_shift", a.cfg.augmentation.max_freq_shift},
                       {"mix_prob", a.cfg.augmentation.mix_prob},
                       {"replicates", a.cfg.replicates},
                       {"seed", a.cfg.seed}};
  run.commit(config, seeds, {{"replicates", results}});
  return 0;
}

int cmd_eval(const Common& common, const std::string& model, const std::string& data, unsigned threads) {
  if (!fs::exists(model)) throw ValidationError("weights manifest not found: " + model);
  const auto named = load_dataset(data);
  const Network net = load_weights(model);
  const auto rep = evaluate(net, examples_of(named), threads);
  RunDir run(common.runs_dir, "eval");
  write_eval_csv(run.path() / "per_class.csv", rep);
  const json summary = report_json(rep);
  std::ofstream(run.path() / "summary.json") << summary.dump(2) << '\n';
  run.add_artifact("per_class", run.path() / "per_class.csv");
  run.add_artifact("summary", run.path() / "summary.json");
  run.commit({{"model", model}, {"data", data}, {"threads", threads}}, json::object(),
             {{"macro_auc", summary["macro_auc"]}, {"macro_ap", summary["macro_ap"]}});
  std::cout << "macro_auc=" << rep.macro_auc << " macro_ap=" << rep.macro_ap << " segments=" << rep.n_segments << '\n';
  return 0;
}

int cmd_predict(const Common& common, const std::string& model, const std::string& input, bool time_indexed) {
  if (!fs::exists(model)) throw ValidationError("weights manifest not found: " + model);
  const auto inputs = load_inputs(input);
  const Network net = load_weights(model);
  RunDir run(common.runs_dir, "predict");
  const std::size_t nc = net.arch().n_classes;
  std::ofstream seg_csv(run.path() / "segment_scores.csv");
  seg_csv << "segment";
  for (std::size_t c = 0; c < nc; ++c) seg_csv << ",class_" << c;
  seg_csv << '\n';
  std::ofstream time_csv;
  if (time_indexed) {
    time_csv.open(run.path() / "time_scores.csv");
    time_csv << "segment,time_bin";
    for (std::size_t c = 0; c < nc; ++c) time_csv << ",class_" << c;
    time_csv << '\n';
  }
  for (const auto& [id, spec] : inputs) {
    const Tensor out = net.infer(to_input_tensor(spec));
    const auto s = summarize_over_time(out);
    seg_csv << id;
    for (double v : s) seg_csv << ',' << v;
    seg_csv << '\n';
    if (time_indexed) {
      for (std::size_t t = 0; t < out.dim(1); ++t) {
        time_csv << id << ',' << t;
        for (std::size_t c = 0; c < nc; ++c) time_csv << ',' << out.at(0, t, c);
        time_csv << '\n';
      }
    }
  }
  run.add_artifact("segment_scores", run.path() / "segment_scores.csv");
  if (time_indexed) run.add_artifact("time_scores", run.path() / "time_scores.csv");
  run.commit({{"model", model}, {"input", input}, {"time_indexed", time_indexed}}, json::object(),
             {{"segments", inputs.size()}});
  return 0;
}

struct BenchArgs {
  std::string model;
  std::string mode = "sequential";
  std::string out;
  BenchOptions opt;
};

int cmd_bench(const Common& common, const BenchArgs& a) {
  if (a.mode != "sequential" && a.mode != "batched") throw ValidationError("--mode must be sequential or batched");
  if (a.out.empty()) throw ValidationError("--out is required");
  const Network net = load_model(a.model, a.opt.seed);
  const auto rep = a.mode == "sequential" ? bench_sequential(net, a.opt) : bench_batched(net, a.opt);
  RunDir run(common.runs_dir, "bench");
  append_bench_csv(a.out, rep);
  run.add_artifact("report_csv", fs::absolute(a.out));
  run.commit({{"model", a.model},
              {"mode", a.mode},
              {"n", a.opt.n},
              {"batch", a.opt.batch},
              {"warmup", a.opt.warmup},
              {"runs", a.opt.runs},
              {"include_dsp", a.opt.include_dsp},
              {"threads", a.opt.threads}},
             {{"input_seed", a.opt.seed}},
             {{"wall_seconds", rep.wall_seconds},
              {"run_seconds", rep.run_seconds},
              {"processing_factor", rep.processing_factor},
              {"dsp_seconds", rep.dsp_seconds},
              {"worker_threads_spawned", rep.worker_threads_spawned}});
  std::cout << "model=" << rep.model_id << " mode=" << mode_name(rep.mode) << " n=" << rep.n_segments
            << " wall_seconds=" << rep.wall_seconds << " processing_factor=" << rep.processing_factor << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simpfu: bioacoustic sound-type detection with time-local CNNs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  app.add_option("--runs-dir", common.runs_dir, "Root for run directories")->capture_default_str();

  std::string input;
  auto* pre = app.add_subcommand("preprocess", "WAV files -> 512x128 mel spectrograms");
  pre->add_option("--input", input, "WAV file or directory of WAV files")->required();

  std::string annotations;
  std::size_t resolution = kTimeBins;
  auto* enc = app.add_subcommand("encode-labels", "Annotation CSV -> time-indexed label matrices");
  enc->add_option("--annotations", annotations, "CSV with segment_id,class_id,start_s,end_s")->required();
  enc->add_option("--resolution", resolution, "Output time bins (divisor of 512)")->capture_default_str();

  std::string group;
  int index = 0;
  bool all = false;
  auto* mrf = app.add_subcommand("mrf", "Receptive field and size of a model");
  mrf->add_option("--group", group, "Model group A..E");
  mrf->add_option("--index", index, "Model index 0..7")->check(CLI::Range(0, 7));
  mrf->add_flag("--all", all, "CSV table for every model");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model on <id>.sfus/<id>.sful pairs");
  tr->add_option("--data", ta.data, "Directory of training pairs");
  tr->add_option("--val", ta.val, "Optional validation directory, scored after each epoch");
  tr->add_option("--config", ta.config, "key = value file; explicit flags override it");
  tr->add_option("--model", ta.model, "Model id, e.g. B03")->capture_default_str();
  tr->add_option("--n_classes", ta.n_classes)->capture_default_str();
  tr->add_option("--head_channels", ta.head_channels)->capture_default_str();
  tr->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
  tr->add_option("--batch_size", ta.cfg.batch_size)->capture_default_str();
  tr->add_option("--lr0", ta.cfg.lr0)->capture_default_str();
  tr->add_option("--decay", ta.cfg.decay)->capture_default_str();
  tr->add_option("--target_epoch_size", ta.cfg.target_epoch_size, "Segments per epoch; 0 disables re-balancing")
      ->capture_default_str();
  tr->add_option("--augment", ta.cfg.augment)->capture_default_str();
  tr->add_option("--max_freq_shift", ta.cfg.augmentation.max_freq_shift)->capture_default_str();
  tr->add_option("--mix_prob", ta.cfg.augmentation.mix_prob)->capture_default_str();
  tr->add_option("--replicates", ta.cfg.replicates, "Independent runs with seeds seed, seed+1, ...")->capture_default_str();
  tr->add_option("--seed", ta.cfg.seed)->capture_default_str();

  std::string model, data;
  unsigned threads = 1;
  auto* ev = app.add_subcommand("eval", "Segment-level AUC/AP on a labelled directory");
  ev->add_option("--model", model, "Weights manifest")->required();
  ev->add_option("--data", data, "Directory of <id>.sfus/<id>.sful pairs")->required();
  ev->add_option("--threads", threads)->capture_default_str();

  bool time_indexed = false;
  auto* pr = app.add_subcommand("predict", "Scores for WAV or spectrogram inputs");
  pr->add_option("--model", model, "Weights manifest")->required();
  pr->add_option("--input", input, "WAV file, directory of WAVs, or directory of .sfus")->required();
  pr->add_flag("--time-indexed", time_indexed, "Also write per-time-bin scores");

  BenchArgs ba;
  auto* be = app.add_subcommand("bench", "Inference speed as a processing factor");
  be->add_option("--model", ba.model, "Weights manifest or model id (random weights)")->required();
  be->add_option("--mode", ba.mode, "sequential or batched")->capture_default_str();
  be->add_option("--n", ba.opt.n)->capture_default_str();
  be->add_option("--batch", ba.opt.batch)->capture_default_str();
  be->add_option("--warmup", ba.opt.warmup)->capture_default_str();
  be->add_option("--runs", ba.opt.runs)->capture_default_str();
  be->add_option("--threads", ba.opt.threads, "Worker threads in batched mode")->capture_default_str();
  be->add_flag("--include-dsp", ba.opt.include_dsp, "Time preprocessing from waveforms as well");
  be->add_option("--seed", ba.opt.seed, "Seed for inputs and random weights")->capture_default_str();
  be->add_option("--out", ba.out, "CSV report (appended)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*pre) return cmd_preprocess(common, input);
    if (*enc) return cmd_encode_labels(common, annotations, resolution);
    if (*mrf) {
      if (!all && (group.empty() || mrf->count("--index") == 0))
        throw ValidationError("mrf needs --group and --index, or --all");
      return cmd_mrf(group, index, all);
    }
    if (*tr) return cmd_train(common, ta, *tr);
    if (*ev) return cmd_eval(common, model, data, threads);
    if (*pr) return cmd_predict(common, model, input, time_indexed);
    if (*be) return cmd_bench(common, ba);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
