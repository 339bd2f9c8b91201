#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pulse/error.hpp"
#include "pulse/metrics.hpp"
#include "pulse/rppg.hpp"
#include "pulse/synth.hpp"

using namespace pulse;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("harmonic template constants") {
  CHECK(kHarmonicAmps[0] == 1.0);
  CHECK(kHarmonicAmps[1] == 0.35);
  CHECK(kHarmonicAmps[2] == 0.2);
  SynthConfig cfg;
  CHECK(cfg.harmonic_amps == std::vector<double>{1.0, 0.35, 0.2});
}

TEST_CASE("bvp without jitter peaks at its rate") {
  for (double hr : {48.0, 72.0, 111.0, 170.0}) {
    SynthConfig cfg;
    cfg.hr_bpm = hr;
    cfg.seed = 3;
    const auto b = gen_bvp(cfg);
    CHECK(b.bvp.size() == 576u);
    CHECK(b.hr_bpm == doctest::Approx(hr).epsilon(1e-9));
    // Off-bin rates sit between 3.125 bpm bins; 72 bpm is nearly bin-aligned.
    CHECK(std::abs(dominant_hr(psd(b.bvp)) - hr) <= (hr == 72.0 ? 0.5 : 1.0));
    double ms = 0.0;
    for (double v : b.bvp.samples) ms += v * v;
    CHECK(ms / 576.0 == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("bvp determinism and seed dependence") {
  SynthConfig cfg;
  cfg.hrv_jitter = 0.03;
  cfg.seed = 10;
  const auto a = gen_bvp(cfg), b = gen_bvp(cfg);
  CHECK(a.bvp.samples == b.bvp.samples);
  cfg.seed = 11;
  const auto c = gen_bvp(cfg);
  CHECK(a.bvp.samples != c.bvp.samples);
  CHECK(std::abs(a.hr_bpm - c.hr_bpm) <= 3.0);
  CHECK(std::abs(a.hr_bpm - 72.0) <= 3.0);
}

TEST_CASE("amplitude scaling keeps the dominant rate") {
  SynthConfig cfg;
  cfg.hr_bpm = 84.0;
  auto b = gen_bvp(cfg).bvp;
  const double ref = dominant_hr(psd(b));
  for (auto& v : b.samples) v *= 7.5;
  CHECK(dominant_hr(psd(b)) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("traces carry the pulse") {
  SynthConfig cfg;
  cfg.hr_bpm = 66.0;
  cfg.seed = 2;
  const auto s = gen_traces(cfg);
  CHECK(s.traces.n_rois == 4);
  CHECK(s.traces.n_channels == 6);
  CHECK(s.traces.channel_names == std::vector<std::string>{"R", "G", "B", "Y", "U", "V"});
  CHECK(std::abs(pseudo_hr(s.traces, RppgMethod::Chrom).hr_bpm - 66.0) <= 1.0);
  cfg.pulse_strength = {0.0, 0.0, 0.0};
  cfg.noise_std = 0.5;
  CHECK_FALSE(pseudo_hr(gen_traces(cfg).traces, RppgMethod::Chrom).reliable);
}

TEST_CASE("window hr follows the beat train") {
  SynthConfig cfg;
  cfg.hr_bpm = 90.0;
  cfg.frames = 1152;
  cfg.hrv_jitter = 0.02;
  cfg.seed = 8;
  const auto s = gen_traces(cfg);
  const double a = s.window_hr(0, 576), b = s.window_hr(576, 576);
  CHECK(std::abs(a - 90.0) <= 3.0);
  CHECK(std::abs(b - 90.0) <= 3.0);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  cfg.hr_bpm = 200.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.hr_bpm = 72.0;
  cfg.fs = 10.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  const SynthConfig d;
  const auto j = d.to_json();
  CHECK(SynthConfig::from_json(j).to_json() == j);
}

TEST_CASE("benchmark structure and folds") {
  BenchmarkConfig cfg;
  cfg.seed = 3;
  const auto bench = gen_benchmark(cfg);
  REQUIRE(bench.ids.size() == 10);
  CHECK(bench.ids[0] == "s000");
  for (const auto& s : bench.subjects) {
    CHECK(s.hr_bpm >= 50.0);
    CHECK(s.hr_bpm <= 150.0);
    CHECK(s.traces.length == 1152);
  }
  const auto folds = kfold_split(bench.ids, 5, 1);
  std::vector<std::string> seen;
  for (const auto& f : folds) {
    CHECK(f.size() == 2);
    seen.insert(seen.end(), f.begin(), f.end());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  CHECK(seen.size() == 10);
}

TEST_CASE("benchmark files round trip and regenerate byte-identically") {
  BenchmarkConfig cfg;
  cfg.n_subjects = 3;
  cfg.windows_per_subject = 1;
  cfg.seed = 21;
  const auto dir = fs::temp_directory_path() / "pulse_test_synth";
  fs::remove_all(dir);
  write_benchmark(dir / "a", gen_benchmark(cfg));
  write_benchmark(dir / "b", gen_benchmark(cfg));
  for (const auto& e : fs::directory_iterator(dir / "a"))
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));

  const auto bench = gen_benchmark(cfg);
  const auto back = read_benchmark(dir / "a");
  REQUIRE(back.ids == bench.ids);
  for (std::size_t i = 0; i < bench.ids.size(); ++i) {
    CHECK(back.subjects[i].hr_bpm == bench.subjects[i].hr_bpm);
    CHECK(back.subjects[i].traces.values == bench.subjects[i].traces.values);
    CHECK(back.subjects[i].bvp.samples == bench.subjects[i].bvp.samples);
    CHECK(back.subjects[i].window_hr(0, 576) == bench.subjects[i].window_hr(0, 576));
  }
  CHECK_THROWS_AS(read_benchmark(dir / "missing"), FormatError);
}
