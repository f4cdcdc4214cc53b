#pragma once

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

#include "nodeonet/error.hpp"

namespace nodeonet {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// In-place 2-D complex FFT pair on an n x n buffer. Plans use FFTW_ESTIMATE
/// so the transform is reproducible run to run. FFTW leaves transforms
/// unnormalized; callers divide by n*n after the backward pass.
class Fft2d {
public:
    explicit Fft2d(std::size_t n) : n_(n), buf_(n * n) {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        auto* p = reinterpret_cast<fftw_complex*>(buf_.data());
        fwd_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), p, p, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
        require(fwd_ && bwd_, Error::BadGrid, "fftw plan creation failed");
    }

    ~Fft2d() {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    std::size_t n() const noexcept { return n_; }
    std::complex<double>* data() noexcept { return buf_.data(); }
    const std::complex<double>* data() const noexcept { return buf_.data(); }
    std::complex<double>& at(std::size_t i, std::size_t j) noexcept { return buf_[i * n_ + j]; }

    void forward() { fftw_execute(fwd_); }
    void backward() { fftw_execute(bwd_); }

    void backward_normalized() {
        fftw_execute(bwd_);
        const double s = 1.0 / static_cast<double>(n_ * n_);
        for (auto& z : buf_) z *= s;
    }

private:
    std::size_t n_;
    std::vector<std::complex<double>> buf_;
    fftw_plan fwd_;
    fftw_plan bwd_;
};

/// Signed integer frequency for index i on an n-point periodic grid.
inline int fft_freq(std::size_t i, std::size_t n) {
    return i <= n / 2 ? static_cast<int>(i) : static_cast<int>(i) - static_cast<int>(n);
}

/// Frequency used in spectral derivatives; the Nyquist mode is zeroed since
/// its odd derivative is not representable on the grid.
inline int fft_freq_deriv(std::size_t i, std::size_t n) {
    if (n % 2 == 0 && i == n / 2) return 0;
    return fft_freq(i, n);
}

}  // namespace nodeonet
