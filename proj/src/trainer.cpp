#include "pulse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "pulse/error.hpp"
#include "pulse/params.hpp"

namespace pulse {

std::string to_string(Readout r) { return r == Readout::Head ? "head" : "map"; }

Readout readout_from_string(const std::string& s) {
  if (s == "head") return Readout::Head;
  if (s == "map") return Readout::Map;
  throw ConfigError("unknown readout '" + s + "'");
}

namespace {

std::string to_string(CprSource c) {
  switch (c) {
    case CprSource::Prediction: return "prediction";
    case CprSource::Label: return "label";
    case CprSource::Geometric: return "geometric";
  }
  return "prediction";
}

CprSource cpr_from_string(const std::string& s) {
  if (s == "prediction") return CprSource::Prediction;
  if (s == "label") return CprSource::Label;
  if (s == "geometric") return CprSource::Geometric;
  throw ConfigError("unknown cpr source '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TrainConfig TrainConfig::fine_tune() {
  TrainConfig c;
  c.epochs = 25;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || weight_decay < 0.0 || !(epsilon > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("invalid optimizer hyperparameters");
  if (batch < 1 || epochs < 1 || frames < 9 || stride < 1 || max_steps < 0)
    throw ConfigError("batch, epochs, frames and stride must be positive");
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0)
    throw ConfigError("loss weights must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"batch", batch},
          {"epochs", epochs},
          {"frames", frames},
          {"stride", stride},
          {"seed", seed},
          {"max_steps", max_steps},
          {"alpha", weights.alpha},
          {"beta", weights.beta},
          {"gamma", weights.gamma},
          {"max_lag_seconds", loss.max_lag_seconds},
          {"cpr", to_string(loss.cpr)},
          {"loss_on_masked_only", loss_on_masked_only},
          {"readout", to_string(readout)},
          {"validate_each_epoch", validate_each_epoch}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.frames = j.value("frames", c.frames);
    c.stride = j.value("stride", c.stride);
    c.seed = j.value("seed", c.seed);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.weights.alpha = j.value("alpha", c.weights.alpha);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.weights.gamma = j.value("gamma", c.weights.gamma);
    c.loss.max_lag_seconds = j.value("max_lag_seconds", c.loss.max_lag_seconds);
    if (j.contains("cpr")) c.loss.cpr = cpr_from_string(j["cpr"].get<std::string>());
    c.loss_on_masked_only = j.value("loss_on_masked_only", c.loss_on_masked_only);
    if (j.contains("readout")) c.readout = readout_from_string(j["readout"].get<std::string>());
    c.validate_each_epoch = j.value("validate_each_epoch", c.validate_each_epoch);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig e = *this;
  e.data.frames = train.frames;
  e.data.stride = train.stride;
  if (variant == ModelVariant::Unstacked) e.data.chunks = 1;
  return e;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"train", train.to_json()},
          {"model", model.to_json()},
          {"data", {{"chunks", data.chunks}, {"rows_mode", data.rows_mode}}},
          {"variant", to_string(variant)},
          {"folds", folds},
          {"max_folds", max_folds},
          {"split_seed", split_seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig e;
  try {
    if (j.contains("train")) e.train = TrainConfig::from_json(j["train"]);
    if (j.contains("model")) e.model = ModelConfig::from_json(j["model"]);
    if (j.contains("data")) {
      e.data.chunks = j["data"].value("chunks", e.data.chunks);
      e.data.rows_mode = j["data"].value("rows_mode", e.data.rows_mode);
    }
    if (j.contains("variant")) e.variant = model_variant_from_string(j["variant"].get<std::string>());
    e.folds = j.value("folds", e.folds);
    e.max_folds = j.value("max_folds", e.max_folds);
    e.split_seed = j.value("split_seed", e.split_seed);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("experiment config: ") + ex.what());
  }
  if (e.folds < 1 || e.max_folds < 0 || e.data.chunks < 1) throw ConfigError("folds and chunks must be positive");
  return e;
}

// ---------------------------------------------------------------------------
// Training

LossBreakdown sample_loss(const SwinUnet& model, const Sample& sample, const TrainConfig& cfg, bool backward,
                          double scale) {
  const ModelOutput out = model.forward(sample.input);
  const bool map_loss = out.has_map() && !sample.target_rows.empty();
  std::vector<double> pred_rows;
  if (map_loss) {
    const auto& idx = *sample.unstack_index;
    const auto img = out.map.value();
    pred_rows.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) pred_rows[i] = img[idx[i]];
  }
  LossPrediction pred;
  pred.map = pred_rows;
  pred.has_hr = out.has_hr();
  if (pred.has_hr) pred.hr = out.hr.value()[0];

  LossTarget target;
  target.map = sample.target_rows;
  target.rows = sample.rows;
  target.length = sample.length;
  target.hr = sample.hr_label;
  target.hr_valid = sample.hr_valid;

  LossOptions opts = cfg.loss;
  opts.fs = sample.input.fs;
  std::span<const std::uint8_t> mask;
  if (cfg.loss_on_masked_only && !sample.masked_elements.empty()) mask = sample.masked_elements;

  const TotalLoss tl = total_loss(pred, target, cfg.weights, opts, mask);
  if (!std::isfinite(tl.breakdown.total)) throw DivergenceError("non-finite loss on sample " + sample.subject);

  if (backward) {
    std::vector<std::pair<ag::Tensor, std::vector<double>>> seeds;
    if (map_loss) {
      const auto& idx = *sample.unstack_index;
      std::vector<double> grad(out.map.size(), 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i) grad[idx[i]] += scale * tl.map_grad[i];
      seeds.emplace_back(out.map, std::move(grad));
    }
    if (out.has_hr()) seeds.emplace_back(out.hr, std::vector<double>{scale * tl.hr_grad});
    ag::backward(seeds);
  }
  return tl.breakdown;
}

TrainLog train_model(SwinUnet& model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                     const std::vector<Sample>* validation) {
  cfg.validate();
  if (samples.empty()) throw InputError("no training samples");
  auto& params = model.params();
  AdamW opt(params, cfg.adamw());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch));
      const double scale = 1.0 / static_cast<double>(end - at);
      params.zero_grad();
      CurvePoint point;
      point.step = log.steps;
      point.epoch = epoch;
      for (std::size_t k = at; k < end; ++k) {
        const auto b = sample_loss(model, samples[order[k]], cfg, true, scale);
        point.total += scale * b.total;
        point.l_reg += scale * b.l_reg;
        point.l_temp += scale * b.l_temp;
        point.l_freq += scale * b.l_freq;
      }
      opt.step(params);
      log.curve.push_back(point);
      ++log.steps;
      if (cfg.max_steps > 0 && log.steps >= cfg.max_steps) break;
    }
    if (validation && !validation->empty() && cfg.validate_each_epoch) {
      const auto pred = predict_hr(model, *validation, cfg.readout);
      double mae = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(pred[i] - (*validation)[i].hr_bpm);
      log.validation_mae.push_back(mae / static_cast<double>(pred.size()));
    }
    if (cfg.max_steps > 0 && log.steps >= cfg.max_steps) break;
  }
  return log;
}

std::vector<double> predict_rows(const SwinUnet& model, const Sample& sample) {
  const ModelOutput out = model.forward(sample.input);
  if (!out.has_map()) throw ConfigError("model has no decoder");
  const auto& idx = *sample.unstack_index;
  const auto img = out.map.value();
  std::vector<double> rows(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) rows[i] = img[idx[i]];
  return rows;
}

std::vector<double> predict_hr(const SwinUnet& model, const std::vector<Sample>& samples, Readout readout) {
  const auto& mc = model.config();
  if (readout == Readout::Head && !mc.hr_head) readout = Readout::Map;
  if (readout == Readout::Map && !mc.decoder) readout = Readout::Head;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (readout == Readout::Head) {
      const ModelOutput o = model.forward(s.input);
      out.push_back(unscale_hr(o.hr.value()[0]));
      continue;
    }
    const auto rows = predict_rows(model, s);
    std::vector<double> avg(static_cast<std::size_t>(s.length), 0.0);
    for (int r = 0; r < s.rows; ++r)
      for (int t = 0; t < s.length; ++t)
        avg[static_cast<std::size_t>(t)] += rows[static_cast<std::size_t>(r) * s.length + t] / s.rows;
    try {
      out.push_back(dominant_hr(psd(avg, s.input.fs), kHeartBand));
    } catch (const NoPeakError&) {
      out.push_back(unscale_hr(0.5));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string run_id_for(const nlohmann::json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

nlohmann::json curve_json(const std::vector<CurvePoint>& curve) {
  auto arr = nlohmann::json::array();
  for (const auto& p : curve)
    arr.push_back({{"step", p.step}, {"epoch", p.epoch}, {"total", p.total}, {"l_reg", p.l_reg},
                   {"l_temp", p.l_temp}, {"l_freq", p.l_freq}});
  return arr;
}

}  // namespace

nlohmann::json RunReport::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["run_id"] = run_id;
  j["parent_run_id"] = parent_run_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(parent_run_id);
  j["config"] = config;
  j["folds"] = folds;
  j["fold_reports"] = nlohmann::json::array();
  for (const auto& f : fold_reports) {
    j["fold_reports"].push_back({{"fold", f.fold},
                                 {"test_subjects", f.test_subjects},
                                 {"metrics", f.metrics.to_json()},
                                 {"pred_bpm", f.pred_bpm},
                                 {"true_bpm", f.true_bpm},
                                 {"steps", f.log.steps},
                                 {"validation_mae", f.log.validation_mae},
                                 {"loss_curve", curve_json(f.log.curve)},
                                 {"checkpoint", f.checkpoint}});
  }
  j["pooled"] = pooled ? pooled->to_json() : nlohmann::json(nullptr);
  j["loss_curve"] = curve_json(curve);
  j["checkpoint"] = checkpoint;
  return j;
}

void RunReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw FormatError("cannot write report.json");
    out << to_json().dump(1) << '\n';
  }
  {
    std::ofstream out(dir / "metrics.csv");
    out << "fold,n,mae,rmse,sd,pearson_r\n";
    auto line = [&](const std::string& name, const Metrics& m) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.17g,", name.c_str(), m.n, m.mae, m.rmse, m.sd);
      out << buf;
      if (m.pearson_r) {
        std::snprintf(buf, sizeof buf, "%.17g", *m.pearson_r);
        out << buf;
      }
      out << '\n';
    };
    for (const auto& f : fold_reports) line(std::to_string(f.fold), f.metrics);
    if (pooled) line("pooled", *pooled);
  }
  {
    std::ofstream out(dir / "loss_curve.csv");
    out << "fold,step,epoch,total,l_reg,l_temp,l_freq\n";
    auto dump = [&](const std::string& fold, const std::vector<CurvePoint>& curve) {
      char buf[256];
      for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%.17g,%.17g,%.17g\n", fold.c_str(), p.step, p.epoch, p.total,
                      p.l_reg, p.l_temp, p.l_freq);
        out << buf;
      }
    };
    dump("all", curve);
    for (const auto& f : fold_reports) dump(std::to_string(f.fold), f.log.curve);
  }
}

// ---------------------------------------------------------------------------
// Experiments

nlohmann::json checkpoint_config(const SwinUnet& model, const ExperimentConfig& exp, const std::string& run_id) {
  return {{"model", model.config().to_json()}, {"experiment", exp.to_json()}, {"run_id", run_id}};
}

std::unique_ptr<SwinUnet> load_model(const std::filesystem::path& checkpoint) {
  const auto cfg = read_checkpoint_config(checkpoint);
  if (!cfg.contains("model")) throw FormatError("checkpoint lacks a model config");
  auto model = std::make_unique<SwinUnet>(ModelConfig::from_json(cfg["model"]));
  const auto report = load_checkpoint(checkpoint, model->params());
  if (!report.clean()) throw FormatError("checkpoint does not match its own model config");
  return model;
}

namespace {

int channel_count(const Benchmark& bench) {
  if (bench.subjects.empty()) throw InputError("benchmark has no subjects");
  return bench.subjects.front().traces.n_channels;
}

void apply_init(SwinUnet& model, const InitSpec& init) {
  if (init.checkpoint.empty()) return;
  const auto report = load_checkpoint(init.checkpoint, model.params());
  if (!report.missing.empty() || !report.shape_mismatch.empty()) {
    std::string what = "checkpoint does not fit the model:";
    for (const auto& n : report.missing) what += " missing " + n;
    for (const auto& n : report.shape_mismatch) what += " shape " + n;
    throw ConfigError(what);
  }
  if (init.probe) model.params().freeze_all_except(model.final_layer_names());
}

}  // namespace

RunReport cross_validate(const Benchmark& bench, const ExperimentConfig& exp_in, const InitSpec& init,
                         const std::filesystem::path& checkpoint_dir, const std::string& kind) {
  const ExperimentConfig exp = exp_in.resolved();
  exp.train.validate();
  RunReport report;
  report.kind = kind;
  report.config = exp.to_json();
  report.config["init_checkpoint"] = init.checkpoint.string();
  report.config["probe"] = init.probe;
  report.run_id = run_id_for(report.config);
  report.parent_run_id = init.parent_run_id;
  report.folds = kfold_split(bench.ids, exp.folds, exp.split_seed);

  const auto stack = stack_options(exp.data, exp.model, channel_count(bench));
  const int frames = exp.data.effective_frames();
  const int n_run = exp.max_folds > 0 ? std::min(exp.max_folds, exp.folds) : exp.folds;
  std::vector<double> all_pred, all_true;
  for (int f = 0; f < n_run; ++f) {
    const auto& test = report.folds[static_cast<std::size_t>(f)];
    std::vector<std::string> train;
    for (int g = 0; g < exp.folds; ++g)
      if (g != f)
        for (const auto& id : report.folds[static_cast<std::size_t>(g)]) train.push_back(id);

    const auto train_samples = supervised_samples(bench, train, exp.data, stack, exp.train.stride);
    const auto test_samples = supervised_samples(bench, test, exp.data, stack, frames);
    if (train_samples.empty() || test_samples.empty()) throw InputError("fold has no windows");

    SwinUnet model(variant_config(fit_model(exp.model, train_samples.front()), exp.variant));
    apply_init(model, init);
    FoldReport fr;
    fr.fold = f;
    fr.test_subjects = test;
    fr.log = train_model(model, train_samples, exp.train, &test_samples);
    fr.pred_bpm = predict_hr(model, test_samples, exp.train.readout);
    for (const auto& s : test_samples) fr.true_bpm.push_back(s.hr_bpm);
    if (fr.pred_bpm.size() >= 2) fr.metrics = compute_metrics(fr.pred_bpm, fr.true_bpm);
    if (!checkpoint_dir.empty()) {
      std::filesystem::create_directories(checkpoint_dir);
      const auto path = checkpoint_dir / ("fold" + std::to_string(f) + ".ckpt");
      save_checkpoint(path, model.params(), checkpoint_config(model, exp, report.run_id));
      fr.checkpoint = path.string();
    }
    all_pred.insert(all_pred.end(), fr.pred_bpm.begin(), fr.pred_bpm.end());
    all_true.insert(all_true.end(), fr.true_bpm.begin(), fr.true_bpm.end());
    report.fold_reports.push_back(std::move(fr));
  }
  if (all_pred.size() >= 2) report.pooled = compute_metrics(all_pred, all_true);
  return report;
}

RunReport train_supervised(const Benchmark& bench, const ExperimentConfig& exp,
                           const std::filesystem::path& checkpoint_dir) {
  return cross_validate(bench, exp, {}, checkpoint_dir, "train");
}

RunReport evaluate(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp_in) {
  const auto model = load_model(checkpoint);
  const auto header = read_checkpoint_config(checkpoint);
  ExperimentConfig exp = exp_in;
  if (header.contains("experiment")) exp = ExperimentConfig::from_json(header["experiment"]);
  exp.train.readout = exp_in.train.readout;
  exp = exp.resolved();
  const auto stack = stack_options(exp.data, model->config(), channel_count(bench));
  const int frames = exp.data.effective_frames();
  const auto samples = supervised_samples(bench, bench.ids, exp.data, stack, frames);

  RunReport report;
  report.kind = "eval";
  report.config = exp.to_json();
  report.config["checkpoint"] = checkpoint.string();
  report.run_id = run_id_for(report.config);
  report.parent_run_id = header.value("run_id", std::string());
  report.checkpoint = checkpoint.string();
  report.folds = {bench.ids};
  FoldReport fr;
  fr.test_subjects = bench.ids;
  fr.pred_bpm = predict_hr(*model, samples, exp.train.readout);
  for (const auto& s : samples) fr.true_bpm.push_back(s.hr_bpm);
  if (fr.pred_bpm.size() >= 2) {
    fr.metrics = compute_metrics(fr.pred_bpm, fr.true_bpm);
    report.pooled = fr.metrics;
  }
  report.fold_reports.push_back(std::move(fr));
  return report;
}

}  // namespace pulse
