#include "pulse/ablation.hpp"

#include <cstdio>
#include <fstream>

#include "pulse/error.hpp"

namespace pulse {

std::string to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::Components: return "components";
    case AblationSuite::Length: return "length";
    case AblationSuite::Pretext: return "pretext";
  }
  return "components";
}

AblationSuite ablation_suite_from_string(const std::string& s) {
  if (s == "components") return AblationSuite::Components;
  if (s == "length") return AblationSuite::Length;
  if (s == "pretext") return AblationSuite::Pretext;
  throw ConfigError("unknown ablation suite '" + s + "'");
}

std::vector<std::string> ablation_grid(AblationSuite suite) {
  switch (suite) {
    case AblationSuite::Components: return {"full", "no_hr_head", "no_decoder", "unstacked"};
    case AblationSuite::Length: return {"T=576", "T=384", "T=256"};
    case AblationSuite::Pretext:
      return {"none-none", "CHROM-none", "none-Mask", "CHROM-Mask", "GREEN-Mask", "LGI-Mask", "CHROM-PBVP"};
  }
  return {};
}

nlohmann::json AblationConfig::to_json() const {
  return {{"experiment", experiment.to_json()}, {"pretrain", pretrain.to_json()}, {"pool", pool.to_json()}};
}

AblationConfig AblationConfig::from_json(const nlohmann::json& j) {
  AblationConfig c;
  if (j.contains("experiment")) c.experiment = ExperimentConfig::from_json(j["experiment"]);
  c.pretrain = c.experiment.train;
  if (j.contains("pretrain")) c.pretrain = TrainConfig::from_json(j["pretrain"], c.pretrain);
  if (j.contains("pool")) c.pool = BenchmarkConfig::from_json(j["pool"]);
  return c;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json j;
  j["suite"] = to_string(suite);
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"name", r.name}, {"run_id", r.report.run_id}, {"parent_run_id", r.report.parent_run_id}};
    row["metrics"] = r.report.pooled ? r.report.pooled->to_json() : nlohmann::json(nullptr);
    j["rows"].push_back(row);
  }
  return j;
}

void AblationTable::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "ablation.json");
    if (!out) throw FormatError("cannot write ablation.json");
    out << to_json().dump(1) << '\n';
  }
  std::ofstream csv(dir / "ablation.csv");
  csv << "row,mae,rmse,sd,pearson_r,run_id\n";
  for (const auto& r : rows) {
    csv << r.name;
    if (r.report.pooled) {
      const auto& m = *r.report.pooled;
      char buf[128];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,", m.mae, m.rmse, m.sd);
      csv << buf;
      if (m.pearson_r) {
        std::snprintf(buf, sizeof buf, "%.17g", *m.pearson_r);
        csv << buf;
      }
    } else {
      csv << ",,,,";
    }
    csv << ',' << r.report.run_id << '\n';
    r.report.write(dir / r.name);
  }
}

AblationTable run_ablation(AblationSuite suite, const Benchmark& bench, const AblationConfig& cfg,
                           const std::filesystem::path& work_dir) {
  AblationTable table;
  table.suite = suite;
  for (const auto& name : ablation_grid(suite)) {
    ExperimentConfig exp = cfg.experiment;
    RunReport report;
    switch (suite) {
      case AblationSuite::Components:
        exp.variant = model_variant_from_string(name);
        report = cross_validate(bench, exp);
        break;
      case AblationSuite::Length:
        exp.train.frames = std::stoi(name.substr(2));
        report = cross_validate(bench, exp);
        break;
      case AblationSuite::Pretext: {
        if (name == "none-none") {
          report = cross_validate(bench, exp);
          break;
        }
        const auto spec = PretextSpec::parse(name);
        const auto pool = gen_benchmark(cfg.pool);
        ExperimentConfig pre = exp;
        pre.train = cfg.pretrain;
        pre.train.frames = exp.train.frames;
        const auto base = work_dir.empty() ? std::filesystem::temp_directory_path() : work_dir;
        const auto ckpt = base / ("pretrain_" + name + ".ckpt");
        const auto pr = pretrain(pool, spec, pre, ckpt);
        report = transfer(ckpt, bench, exp, pr.report.run_id);
        break;
      }
    }
    table.rows.push_back({name, std::move(report)});
  }
  return table;
}

}  // namespace pulse
