#include "fft.hpp"

#include <map>
#include <tuple>
#include <mutex>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace hoaf::detail {
namespace {

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, int sign, bool in_place) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(n, sign, in_place);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<fftw_complex> a(n), b(n);
    // ESTIMATE keeps plan selection (and so the arithmetic) reproducible.
    fftw_plan plan = fftw_plan_dft_1d(n, a.data(), in_place ? a.data() : b.data(), sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

void run(const std::complex<double>* in, std::complex<double>* out, int n, int sign) {
  const bool in_place = static_cast<const void*>(in) == static_cast<const void*>(out);
  fftw_plan plan = cache().get(n, sign, in_place);
  fftw_execute_dft(plan,
                   reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
                   reinterpret_cast<fftw_complex*>(out));
}

}  // namespace

void fft_forward(const std::complex<double>* in, std::complex<double>* out, int n) {
  run(in, out, n, FFTW_FORWARD);
}

void fft_backward(const std::complex<double>* in, std::complex<double>* out, int n) {
  run(in, out, n, FFTW_BACKWARD);
}

}  // namespace hoaf::detail
