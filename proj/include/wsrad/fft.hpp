#pragma once

// Thin RAII wrapper over FFTW 2D complex transforms. Plans are created once
// per shape with FFTW_ESTIMATE (deterministic) and executed through the
// new-array interface, which is safe to call concurrently.

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "wsrad/common.hpp"

namespace wsrad {

using cplx = std::complex<double>;

class Fft2D {
 public:
  Fft2D(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    std::vector<cplx> scratch(rows * cols);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), p, p, FFTW_FORWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_2d(static_cast<int>(rows), static_cast<int>(cols), p, p, FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!forward_ || !inverse_) throw Error("FFTW planning failed");
  }
  ~Fft2D() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  Fft2D(const Fft2D&) = delete;
  Fft2D& operator=(const Fft2D&) = delete;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void forward(std::vector<cplx>& data) const {
    check(data);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(forward_, p, p);
  }

  /// Normalized inverse (divides by rows * cols).
  void inverse(std::vector<cplx>& data) const {
    check(data);
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(inverse_, p, p);
    const double scale = 1.0 / static_cast<double>(rows_ * cols_);
    for (auto& v : data) v *= scale;
  }

  /// Shared per-shape instance.
  static std::shared_ptr<const Fft2D> get(std::size_t rows, std::size_t cols) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const Fft2D>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[{rows, cols}];
    if (!slot) slot = std::make_shared<const Fft2D>(rows, cols);
    return slot;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex mu;
    return mu;
  }
  void check(const std::vector<cplx>& data) const {
    if (data.size() != rows_ * cols_) throw InvalidArgument("Fft2D: buffer size does not match plan shape");
  }

  std::size_t rows_;
  std::size_t cols_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace wsrad
