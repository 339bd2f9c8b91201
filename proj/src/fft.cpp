#include "pulse/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace pulse::fft {
namespace {

// FFTW planning is not thread-safe, execution with new-array calls is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> in(n), out(n);
    fftw_plan plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

std::vector<cplx> run(std::vector<cplx> in, int sign) {
  std::vector<cplx> out(in.size());
  if (in.empty()) return out;
  fftw_plan plan = cache().get(static_cast<int>(in.size()), sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace

std::vector<cplx> forward(std::span<const double> x) {
  return run(std::vector<cplx>(x.begin(), x.end()), FFTW_FORWARD);
}

std::vector<cplx> forward(std::span<const cplx> x) {
  return run(std::vector<cplx>(x.begin(), x.end()), FFTW_FORWARD);
}

std::vector<cplx> inverse(std::span<const cplx> spectrum) {
  auto out = run(std::vector<cplx>(spectrum.begin(), spectrum.end()), FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(spectrum.size());
  for (auto& v : out) v *= scale;
  return out;
}

}  // namespace pulse::fft
