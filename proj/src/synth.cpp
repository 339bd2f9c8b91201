#include "pulse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "pulse/error.hpp"
#include "pulse/trace_io.hpp"

namespace pulse {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t mix(std::uint64_t x) { return mix_seed(x); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void SynthConfig::validate() const {
  if (!(hr_bpm >= 42.0 && hr_bpm <= 180.0)) throw ConfigError("hr_bpm must lie in [42, 180]");
  if (!(fs >= 12.0)) throw ConfigError("fs must be at least 12 Hz");
  if (frames < 8) throw ConfigError("frames must be at least 8");
  if (harmonic_amps.empty()) throw ConfigError("harmonic_amps must not be empty");
  if (hrv_jitter < 0.0 || noise_std < 0.0 || drift < 0.0 || roi_gain_spread < 0.0 || roi_gain_spread >= 1.0)
    throw ConfigError("noise, jitter, drift and gain spread must be non-negative");
  if (pulse_strength.size() != 3 || baseline.size() != 3) throw ConfigError("pulse_strength and baseline need R, G, B");
  if (n_rois < 1 || n_rois > 16) throw ConfigError("n_rois must lie in [1, 16]");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"hr_bpm", hr_bpm},       {"fs", fs},
          {"frames", frames},       {"harmonic_amps", harmonic_amps},
          {"hrv_jitter", hrv_jitter}, {"noise_std", noise_std},
          {"drift", drift},         {"drift_hz", drift_hz},
          {"pulse_strength", pulse_strength}, {"baseline", baseline},
          {"roi_gain_spread", roi_gain_spread}, {"n_rois", n_rois},
          {"yuv", yuv},             {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.hr_bpm = j.value("hr_bpm", c.hr_bpm);
    c.fs = j.value("fs", c.fs);
    c.frames = j.value("frames", c.frames);
    c.harmonic_amps = j.value("harmonic_amps", c.harmonic_amps);
    c.hrv_jitter = j.value("hrv_jitter", c.hrv_jitter);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.drift = j.value("drift", c.drift);
    c.drift_hz = j.value("drift_hz", c.drift_hz);
    c.pulse_strength = j.value("pulse_strength", c.pulse_strength);
    c.baseline = j.value("baseline", c.baseline);
    c.roi_gain_spread = j.value("roi_gain_spread", c.roi_gain_spread);
    c.n_rois = j.value("n_rois", c.n_rois);
    c.yuv = j.value("yuv", c.yuv);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

double BeatTrain::hr_between(double t0, double t1) const {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    if (onsets[i] >= t0 && onsets[i] < t1) {
      sum += periods[i];
      ++count;
    }
  }
  if (count > 0) return 60.0 * count / sum;
  if (periods.empty()) throw InputError("beat train is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < onsets.size(); ++i)
    if (std::abs(onsets[i] - t0) < std::abs(onsets[best] - t0)) best = i;
  return 60.0 / periods[best];
}

SynthBvp gen_bvp(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix(cfg.seed));
  std::normal_distribution<double> jitter(0.0, 1.0);
  const double nominal = 60.0 / cfg.hr_bpm;
  const double duration = cfg.frames / cfg.fs;

  SynthBvp out;
  double onset = -uniform(rng, 0.0, 1.0) * nominal;
  while (onset < duration) {
    double p = nominal + cfg.hrv_jitter * jitter(rng);
    p = std::clamp(p, 0.5 * nominal, 1.5 * nominal);
    out.beats.onsets.push_back(onset);
    out.beats.periods.push_back(p);
    onset += p;
  }

  std::vector<double> x(static_cast<std::size_t>(cfg.frames));
  std::size_t beat = 0;
  for (int i = 0; i < cfg.frames; ++i) {
    const double t = i / cfg.fs;
    while (beat + 1 < out.beats.onsets.size() && out.beats.onsets[beat + 1] <= t) ++beat;
    const double phase = 2.0 * std::numbers::pi * (t - out.beats.onsets[beat]) / out.beats.periods[beat];
    double v = 0.0;
    for (std::size_t h = 0; h < cfg.harmonic_amps.size(); ++h) {
      const double offset = h < 3 ? kHarmonicPhases[h] : 0.0;
      v += cfg.harmonic_amps[h] * std::sin(static_cast<double>(h + 1) * phase + offset);
    }
    x[static_cast<std::size_t>(i)] = v;
  }
  const double m = mean(x);
  double rms = 0.0;
  for (double& v : x) {
    v -= m;
    rms += v * v;
  }
  rms = std::sqrt(rms / static_cast<double>(x.size()));
  if (rms > 0.0)
    for (double& v : x) v /= rms;
  out.bvp = TimeSeries(std::move(x), cfg.fs);
  out.hr_bpm = out.beats.hr_between(0.0, duration);
  return out;
}

double SynthSubject::window_hr(int start, int frames) const {
  return beats.hr_between(start / traces.fs, (start + frames) / traces.fs);
}

SynthSubject gen_traces(const SynthConfig& cfg) {
  auto pulse = gen_bvp(cfg);
  std::mt19937_64 rng(mix(cfg.seed ^ 0x5eedULL));
  std::normal_distribution<double> noise(0.0, 1.0);

  const double drift_hz = cfg.drift_hz >= 0.0 ? cfg.drift_hz : uniform(rng, 0.2, 0.4);
  const double drift_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const int channels = cfg.yuv ? 6 : 3;

  SynthSubject out;
  out.traces = RoiTraceSet(cfg.n_rois, channels, cfg.frames, cfg.fs);
  out.traces.channel_names = {"R", "G", "B"};
  if (cfg.yuv) out.traces.channel_names.insert(out.traces.channel_names.end(), {"Y", "U", "V"});
  out.traces.subject_id = "synthetic";

  for (int roi = 0; roi < cfg.n_rois; ++roi) {
    const double gain = 1.0 + cfg.roi_gain_spread * uniform(rng, -1.0, 1.0);
    const double shade = 1.0 + 0.05 * uniform(rng, -1.0, 1.0);
    for (int t = 0; t < cfg.frames; ++t) {
      const double light = 1.0 + cfg.drift * std::sin(2.0 * std::numbers::pi * drift_hz * t / cfg.fs + drift_phase);
      double rgb[3];
      for (int c = 0; c < 3; ++c) {
        rgb[c] = cfg.baseline[static_cast<std::size_t>(c)] * shade * light +
                 cfg.pulse_strength[static_cast<std::size_t>(c)] * gain * pulse.bvp.samples[static_cast<std::size_t>(t)] +
                 cfg.noise_std * noise(rng);
        out.traces.at(roi, c, t) = rgb[c];
      }
      if (cfg.yuv) {
        out.traces.at(roi, 3, t) = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        out.traces.at(roi, 4, t) = -0.147 * rgb[0] - 0.289 * rgb[1] + 0.436 * rgb[2] + 128.0;
        out.traces.at(roi, 5, t) = 0.615 * rgb[0] - 0.515 * rgb[1] - 0.100 * rgb[2] + 128.0;
      }
    }
  }
  out.bvp = std::move(pulse.bvp);
  out.beats = std::move(pulse.beats);
  out.hr_bpm = pulse.hr_bpm;
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

nlohmann::json BenchmarkConfig::to_json() const {
  return {{"n_subjects", n_subjects}, {"windows_per_subject", windows_per_subject},
          {"frames", frames},         {"fs", fs},
          {"hr_lo", hr_lo},           {"hr_hi", hr_hi},
          {"hrv_jitter", hrv_jitter}, {"noise_std", noise_std},
          {"drift", drift},           {"n_rois", n_rois},
          {"seed", seed}};
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j) {
  BenchmarkConfig c;
  try {
    c.n_subjects = j.value("n_subjects", c.n_subjects);
    c.windows_per_subject = j.value("windows_per_subject", c.windows_per_subject);
    c.frames = j.value("frames", c.frames);
    c.fs = j.value("fs", c.fs);
    c.hr_lo = j.value("hr_lo", c.hr_lo);
    c.hr_hi = j.value("hr_hi", c.hr_hi);
    c.hrv_jitter = j.value("hrv_jitter", c.hrv_jitter);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.drift = j.value("drift", c.drift);
    c.n_rois = j.value("n_rois", c.n_rois);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("benchmark config: ") + e.what());
  }
  if (c.n_subjects < 1 || c.windows_per_subject < 1) throw ConfigError("benchmark needs subjects and windows");
  if (!(c.hr_lo >= 42.0 && c.hr_lo < c.hr_hi && c.hr_hi <= 180.0)) throw ConfigError("benchmark HR range invalid");
  return c;
}

Benchmark gen_benchmark(const BenchmarkConfig& cfg) {
  BenchmarkConfig checked = BenchmarkConfig::from_json(cfg.to_json());
  Benchmark bench;
  bench.config = checked;
  std::mt19937_64 rng(mix(cfg.seed ^ 0xbe4cULL));
  for (int s = 0; s < cfg.n_subjects; ++s) {
    SynthConfig sc;
    sc.hr_bpm = uniform(rng, cfg.hr_lo, cfg.hr_hi);
    sc.fs = cfg.fs;
    sc.frames = cfg.frames * cfg.windows_per_subject;
    sc.hrv_jitter = cfg.hrv_jitter;
    sc.noise_std = cfg.noise_std;
    sc.drift = cfg.drift;
    sc.n_rois = cfg.n_rois;
    sc.seed = mix(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(s));
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", s);
    auto subject = gen_traces(sc);
    subject.traces.subject_id = id;
    bench.ids.emplace_back(id);
    bench.subjects.push_back(std::move(subject));
  }
  return bench;
}

void write_benchmark(const std::filesystem::path& dir, const Benchmark& bench) {
  std::filesystem::create_directories(dir);
  nlohmann::json labels;
  labels["config"] = bench.config.to_json();
  labels["subjects"] = nlohmann::json::array();
  for (std::size_t i = 0; i < bench.subjects.size(); ++i) {
    const auto& s = bench.subjects[i];
    const auto& id = bench.ids[i];
    write_traces(s.traces, dir / (id + ".csv"), dir / (id + ".json"));
    std::ofstream bvp(dir / (id + "_bvp.csv"));
    if (!bvp) throw FormatError("cannot write BVP for " + id);
    bvp << "frame,value\n";
    char buf[64];
    for (std::size_t t = 0; t < s.bvp.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", t, s.bvp.samples[t]);
      bvp << buf;
    }
    labels["subjects"].push_back(
        {{"id", id}, {"hr_bpm", s.hr_bpm}, {"beat_onsets", s.beats.onsets}, {"beat_periods", s.beats.periods}});
  }
  std::ofstream out(dir / "labels.json");
  if (!out) throw FormatError("cannot write labels.json");
  out << labels.dump(1) << '\n';
}

Benchmark read_benchmark(const std::filesystem::path& dir) {
  std::ifstream in(dir / "labels.json");
  if (!in) throw FormatError("cannot open " + (dir / "labels.json").string());
  nlohmann::json labels;
  try {
    in >> labels;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  }
  Benchmark bench;
  try {
    bench.config = BenchmarkConfig::from_json(labels.at("config"));
    for (const auto& entry : labels.at("subjects")) {
      const auto id = entry.at("id").get<std::string>();
      SynthSubject s;
      s.traces = read_traces(dir / (id + ".csv"), dir / (id + ".json"));
      s.hr_bpm = entry.at("hr_bpm").get<double>();
      s.beats.onsets = entry.at("beat_onsets").get<std::vector<double>>();
      s.beats.periods = entry.at("beat_periods").get<std::vector<double>>();
      if (s.beats.onsets.size() != s.beats.periods.size()) throw FormatError("beat table mismatch for " + id);

      std::ifstream bvp(dir / (id + "_bvp.csv"));
      if (!bvp) throw FormatError("cannot open BVP for " + id);
      std::string line;
      std::getline(bvp, line);
      if (line != "frame,value") throw FormatError("BVP CSV header must be frame,value");
      std::vector<double> values;
      while (std::getline(bvp, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("bad BVP line '" + line + "'");
        const auto frame = std::stoul(line.substr(0, comma));
        if (frame != values.size()) throw FormatError("BVP frames out of order for " + id);
        values.push_back(std::stod(line.substr(comma + 1)));
      }
      s.bvp = TimeSeries(std::move(values), s.traces.fs);
      if (static_cast<int>(s.bvp.size()) != s.traces.length) throw FormatError("BVP length mismatch for " + id);
      bench.ids.push_back(id);
      bench.subjects.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("benchmark: ") + e.what());
  }
  return bench;
}

}  // namespace pulse
