#include "pulse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pulse/error.hpp"

namespace pulse {

namespace {

constexpr double kHrLo = 42.0;
constexpr double kHrHi = 180.0;

}  // namespace

double scale_hr(double bpm) { return (bpm - kHrLo) / (kHrHi - kHrLo); }
double unscale_hr(double scaled) { return kHrLo + scaled * (kHrHi - kHrLo); }

nlohmann::json Metrics::to_json() const {
  nlohmann::json j{{"mae", mae}, {"rmse", rmse}, {"sd", sd}, {"n", n}, {"r_flagged", r_flagged}};
  j["pearson_r"] = pearson_r ? nlohmann::json(*pearson_r) : nlohmann::json(nullptr);
  return j;
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InputError("prediction and truth differ in length");
  if (pred.size() < 2) throw InputError("metrics need at least two samples");
  const auto n = static_cast<double>(pred.size());
  Metrics m;
  m.n = static_cast<int>(pred.size());
  double sum_abs = 0.0, sum_sq = 0.0, sum_e = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    sum_abs += std::abs(e);
    sum_sq += e * e;
    sum_e += e;
  }
  m.mae = sum_abs / n;
  m.rmse = std::sqrt(sum_sq / n);
  const double mean_e = sum_e / n;
  double var_e = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i] - mean_e;
    var_e += d * d;
  }
  m.sd = std::sqrt(var_e / n);

  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    spp += (pred[i] - mp) * (pred[i] - mp);
    stt += (truth[i] - mt) * (truth[i] - mt);
    spt += (pred[i] - mp) * (truth[i] - mt);
  }
  if (spp > 0.0 && stt > 0.0) {
    m.pearson_r = std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
  } else {
    m.r_flagged = true;
    if (std::equal(pred.begin(), pred.end(), truth.begin())) m.pearson_r = 1.0;
  }
  return m;
}

std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& subjects, int k,
                                                  std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be positive");
  const std::set<std::string> unique(subjects.begin(), subjects.end());
  if (unique.size() != subjects.size()) throw InputError("subject ids must be unique");
  if (static_cast<std::size_t>(k) > subjects.size()) throw ConfigError("more folds than subjects");

  std::vector<std::string> order(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  const std::size_t base = order.size() / static_cast<std::size_t>(k);
  const std::size_t extra = order.size() % static_cast<std::size_t>(k);
  std::size_t at = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) folds[f].push_back(order[at++]);
  }
  return folds;
}

}  // namespace pulse
