#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pulse/timeseries.hpp"

namespace pulse {

struct LossWeights {
  double alpha = 5.0;  ///< HR regression
  double beta = 1.0;   ///< temporal (MCC)
  double gamma = 5.0;  ///< frequency (PSD)
};

/// Which signal the in-band power ratio of the MCC is measured on.
enum class CprSource { Prediction, Label, Geometric };

struct LossOptions {
  FreqBand band = kHeartBand;
  double fs = 30.0;
  /// Lags searched by the MCC maximum, in seconds either side of zero.
  double max_lag_seconds = 2.0;
  CprSource cpr = CprSource::Prediction;
  Window window = Window::Rectangular;
};

struct MccResult {
  double value = 0.0;  ///< cpr * rho
  double rho = 0.0;    ///< normalized cross-correlation at the best lag
  double cpr = 0.0;
  int lag = 0;          ///< best lag in samples, in [-max_lag, max_lag]
  bool degenerate = false;  ///< a band-passed input had zero spread
};

/// Maximum band-limited cross-correlation scaled by the in-band power ratio.
MccResult mcc(std::span<const double> x, std::span<const double> y, const LossOptions& options = {});
double mcc(const TimeSeries& x, const TimeSeries& y, FreqBand band = kHeartBand);
/// Same, also writing d mcc / dx into `grad_x` (size of x).
MccResult mcc_with_grad(std::span<const double> x, std::span<const double> y, const LossOptions& options,
                        std::span<double> grad_x);

/// Signals with hard-masked DFT bins outside `band` removed.
std::vector<double> band_limit(std::span<const double> x, double fs, FreqBand band);

/// Back-propagates dL/dP (one-sided PSD bins) to dL/dx for the estimator
/// `psd(x, fs, window)`.
std::vector<double> psd_backward(std::span<const double> x, std::span<const double> grad_power, Window window);

/// Value and gradient of a map loss. Maps are rows x length, row-major.
struct MapLoss {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> row_mcc;
  int degenerate_rows = 0;
};

/// 1 - mean over rows of mcc(X_row, Y_row).
MapLoss l_temp(std::span<const double> x, std::span<const double> y, int rows, int length,
               const LossOptions& options = {}, bool want_grad = true);
/// Mean over rows of the summed squared PSD difference.
MapLoss l_freq(std::span<const double> x, std::span<const double> y, int rows, int length,
               const LossOptions& options = {}, bool want_grad = true);

struct RegLoss {
  double value = 0.0;
  double grad = 0.0;
};

/// |pred - label|, subgradient 0 at equality.
RegLoss l_reg(double pred, double label);

struct LossBreakdown {
  double l_reg = 0.0;
  double l_temp = 0.0;
  double l_freq = 0.0;
  double total = 0.0;
  std::vector<double> row_mcc;
};

/// alpha * l_reg + beta * l_temp + gamma * l_freq.
double combine(const LossWeights& w, double reg, double temp, double freq);

/// Model prediction in map-row form. An empty map means the model has no
/// decoder; `has_hr` false means it has no HR head.
struct LossPrediction {
  std::span<const double> map;
  double hr = 0.0;
  bool has_hr = true;
};

struct LossTarget {
  std::span<const double> map;
  int rows = 0;
  int length = 0;
  double hr = 0.0;
  /// Unreliable pseudo-labels contribute no regression loss.
  bool hr_valid = true;
};

struct TotalLoss {
  LossBreakdown breakdown;
  std::vector<double> map_grad;  ///< empty when the prediction has no map
  double hr_grad = 0.0;
};

/// Weighted sum of the three losses with gradients for both outputs. When
/// `element_mask` is non-empty, only elements with a nonzero mask entry are
/// taken from the prediction; the rest are copied from the target.
TotalLoss total_loss(const LossPrediction& pred, const LossTarget& target, const LossWeights& weights,
                     const LossOptions& options = {}, std::span<const std::uint8_t> element_mask = {});

}  // namespace pulse
