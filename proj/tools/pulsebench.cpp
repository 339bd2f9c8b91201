#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pulse/ablation.hpp"
#include "pulse/error.hpp"
#include "pulse/metrics.hpp"
#include "pulse/rppg.hpp"
#include "pulse/selfsup.hpp"
#include "pulse/synth.hpp"
#include "pulse/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pulse;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string data;
  std::string checkpoint;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

ExperimentConfig experiment(const Common& c, const json& j) {
  auto exp = ExperimentConfig::from_json(j.contains("experiment") ? j["experiment"] : j);
  if (c.seed) {
    exp.train.seed = *c.seed;
    exp.model.seed = *c.seed;
    exp.split_seed = *c.seed;
  }
  return exp;
}

Benchmark load_data(const Common& c) {
  if (c.data.empty()) throw ConfigError("--data is required");
  return read_benchmark(c.data);
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

void print_summary(const RunReport& r) {
  std::printf("%s run %s", r.kind.c_str(), r.run_id.c_str());
  if (r.pooled) std::printf(": MAE %.3f RMSE %.3f SD %.3f", r.pooled->mae, r.pooled->rmse, r.pooled->sd);
  std::printf("\n");
}

int cmd_synth(const Common& c) {
  auto cfg = BenchmarkConfig::from_json(load_config(c.config));
  if (c.seed) cfg.seed = *c.seed;
  const auto bench = gen_benchmark(cfg);
  write_benchmark(c.out, bench);
  std::printf("wrote %zu subjects to %s\n", bench.ids.size(), c.out.c_str());
  return kOk;
}

int cmd_preprocess(const Common& c) {
  const auto exp = experiment(c, load_config(c.config)).resolved();
  const auto bench = load_data(c);
  const auto stack = stack_options(exp.data, exp.model, bench.subjects.front().traces.n_channels);
  const auto samples = supervised_samples(bench, bench.ids, exp.data, stack, exp.train.stride);
  json index = json::array();
  for (const auto& s : samples) {
    const std::string stem = s.subject + "_" + std::to_string(s.start);
    write_map(fs::path(c.out) / (stem + "_mst.map"), s.input);
    SignalMap target;
    target.kind = MapKind::Bvp;
    target.rows = s.rows;
    target.length = s.length;
    target.fs = s.input.fs;
    target.data.assign(s.target_rows.begin(), s.target_rows.end());
    target.row_index = s.input.row_index;
    write_map(fs::path(c.out) / (stem + "_bvp.map"), target);
    index.push_back({{"subject", s.subject}, {"start", s.start}, {"hr_bpm", s.hr_bpm}, {"stem", stem}});
  }
  write_json(fs::path(c.out) / "index.json", index);
  std::printf("wrote %zu windows to %s\n", samples.size(), c.out.c_str());
  return kOk;
}

int cmd_baseline(const Common& c) {
  const auto j = load_config(c.config);
  const int frames = j.value("frames", 576);
  const auto bench = load_data(c);
  json report = json::object();
  std::ofstream csv((fs::create_directories(c.out), fs::path(c.out) / "metrics.csv"));
  csv << "method,n,mae,rmse,sd\n";
  for (auto method : {RppgMethod::Green, RppgMethod::Chrom, RppgMethod::Pos, RppgMethod::Lgi}) {
    std::vector<double> pred, truth;
    for (const auto& [idx, start] : window_plan(bench, bench.ids, frames, frames)) {
      const auto& subj = bench.subjects[idx];
      pred.push_back(pseudo_hr(subj.traces.slice(start, frames), method).hr_bpm);
      truth.push_back(subj.window_hr(start, frames));
    }
    const auto m = compute_metrics(pred, truth);
    report[to_string(method)] = m.to_json();
    csv << to_string(method) << ',' << m.n << ',' << m.mae << ',' << m.rmse << ',' << m.sd << '\n';
    std::printf("%-6s MAE %.3f RMSE %.3f\n", to_string(method).c_str(), m.mae, m.rmse);
  }
  write_json(fs::path(c.out) / "report.json", report);
  return kOk;
}

int cmd_train(const Common& c) {
  const auto exp = experiment(c, load_config(c.config));
  const auto report = train_supervised(load_data(c), exp, fs::path(c.out) / "checkpoints");
  report.write(c.out);
  print_summary(report);
  return kOk;
}

int cmd_pretrain(const Common& c) {
  const auto j = load_config(c.config);
  const auto exp = experiment(c, j);
  auto spec = PretextSpec::parse(j.value("pretext", std::string("CHROM-Mask")));
  spec.mask.ratio = j.value("mask_ratio", spec.mask.ratio);
  spec.mask.seed = c.seed.value_or(j.value("mask_seed", spec.mask.seed));
  if (j.contains("mask_stage")) spec.stage = mask_stage_from_string(j["mask_stage"].get<std::string>());
  spec.mask_fill = j.value("mask_fill", spec.mask_fill);
  const auto result = pretrain(load_data(c), spec, exp, fs::path(c.out) / "pretrain.ckpt");
  result.report.write(c.out);
  std::printf("pretrain run %s -> %s\n", result.report.run_id.c_str(), result.checkpoint.c_str());
  return kOk;
}

int cmd_from_checkpoint(const Common& c, bool probe) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto j = load_config(c.config);
  ExperimentConfig exp = experiment(c, j);
  if (!j.contains("experiment") && !j.contains("train")) exp.train = TrainConfig::fine_tune();
  if (c.seed) exp.train.seed = *c.seed;
  const auto bench = load_data(c);
  const auto report = probe ? linear_probe(c.checkpoint, bench, exp) : transfer(c.checkpoint, bench, exp);
  report.write(c.out);
  print_summary(report);
  return kOk;
}

int cmd_eval(const Common& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto exp = experiment(c, load_config(c.config));
  const auto report = evaluate(c.checkpoint, load_data(c), exp);
  report.write(c.out);
  print_summary(report);
  return kOk;
}

int cmd_ablate(const Common& c, const std::string& suite) {
  auto cfg = AblationConfig::from_json(load_config(c.config));
  if (c.seed) {
    cfg.experiment.train.seed = *c.seed;
    cfg.experiment.model.seed = *c.seed;
    cfg.experiment.split_seed = *c.seed;
  }
  const auto table = run_ablation(ablation_suite_from_string(suite), load_data(c), cfg, c.out);
  table.write(c.out);
  for (const auto& r : table.rows) print_summary(r.report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heart-rate estimation benchmark: synthetic data, classical baselines, training and evaluation"};
  app.require_subcommand(1);
  Common c;
  std::string suite = "components";

  auto add_common = [&](CLI::App* sub, bool data, bool checkpoint) {
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--seed", c.seed, "Seed overriding the config");
    sub->add_option("--out", c.out, "Output directory");
    if (data) sub->add_option("--data", c.data, "Benchmark directory")->required();
    if (checkpoint) sub->add_option("--checkpoint", c.checkpoint, "Checkpoint file")->required();
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark");
  add_common(synth, false, false);
  auto* pre = app.add_subcommand("preprocess", "Write stacked MSTmaps and BVPmaps of every window");
  add_common(pre, true, false);
  auto* base = app.add_subcommand("baseline", "Score GREEN, CHROM, POS and LGI");
  add_common(base, true, false);
  auto* train = app.add_subcommand("train", "Supervised subject-exclusive cross-validation");
  add_common(train, true, false);
  auto* pretr = app.add_subcommand("pretrain", "Self-supervised pretraining on an unlabeled pool");
  add_common(pretr, true, false);
  auto* probe = app.add_subcommand("probe", "Linear probe from a checkpoint");
  add_common(probe, true, true);
  auto* trans = app.add_subcommand("transfer", "Fine-tune every parameter from a checkpoint");
  add_common(trans, true, true);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on non-overlapping windows");
  add_common(eval, true, true);
  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite");
  add_common(ablate, true, false);
  ablate->add_option("--suite", suite, "components, length or pretext");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(c);
    if (*pre) return cmd_preprocess(c);
    if (*base) return cmd_baseline(c);
    if (*train) return cmd_train(c);
    if (*pretr) return cmd_pretrain(c);
    if (*probe) return cmd_from_checkpoint(c, true);
    if (*trans) return cmd_from_checkpoint(c, false);
    if (*eval) return cmd_eval(c);
    if (*ablate) return cmd_ablate(c, suite);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const InputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
