#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/error.hpp"
#include "nodeonet/fft.hpp"
#include "nodeonet/field.hpp"
#include "nodeonet/rng.hpp"

namespace nodeonet {

/// Squared-exponential covariance C(x1,x2) = variance * exp(-|x1-x2|^2/(2 l^2)).
struct RbfKernelSpec {
    double length_scale = 0.5;
    double variance = 1.0;
};

inline double rbf_kernel(const RbfKernelSpec& spec, double x1, double x2) {
    const double d = x1 - x2;
    return spec.variance * std::exp(-d * d / (2.0 * spec.length_scale * spec.length_scale));
}

/// Periodic 2-D Gaussian random field with per-mode standard deviation
/// scale * (4 pi^2 |k|^2 + tau_sq)^(-power/2).
struct SpectralGrfSpec {
    double scale = 1.0;
    double tau_sq = 49.0;
    double power = 2.5;
    std::size_t grid_n = 64;
    bool zero_mean = true;
};

namespace detail {

/// Lower-triangular Cholesky factor in place; returns false if a pivot is
/// not strictly positive.
inline bool cholesky_lower(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) return false;
        const double ljj = std::sqrt(d);
        a[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            const double* ri = &a[i * n];
            const double* rj = &a[j * n];
            for (std::size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
            a[i * n + j] = s / ljj;
        }
        for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
    }
    return true;
}

}  // namespace detail

/// Factors the kernel matrix once so many samples can reuse it.
class GpSampler1d {
public:
    GpSampler1d(const RbfKernelSpec& spec, std::vector<double> grid) : grid_(std::move(grid)) {
        require(spec.length_scale > 0.0, Error::Validation, "length_scale must be positive");
        const std::size_t n = grid_.size();
        require(n >= 1 && n <= 2048, Error::BadGrid, "GP grid size must be in [1, 2048] for dense Cholesky");
        for (std::size_t i = 1; i < n; ++i)
            require(grid_[i] > grid_[i - 1], Error::BadGrid, "GP grid must be strictly increasing");

        std::vector<double> kernel(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) kernel[i * n + j] = rbf_kernel(spec, grid_[i], grid_[j]);

        // Jitter ladder 1e-12 -> 1e-8; the RBF kernel matrix is numerically
        // rank-deficient for any usable length scale.
        for (double jitter : {1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
            chol_ = kernel;
            for (std::size_t i = 0; i < n; ++i) chol_[i * n + i] += jitter;
            if (detail::cholesky_lower(chol_, n)) {
                jitter_ = jitter;
                return;
            }
        }
        raise(Error::NotPositiveDefinite, "kernel matrix Cholesky failed after max jitter 1e-8");
    }

    const std::vector<double>& grid() const noexcept { return grid_; }
    double jitter_used() const noexcept { return jitter_; }

    Field sample(RngState& rng) const {
        const std::size_t n = grid_.size();
        std::vector<double> z(n);
        for (auto& zi : z) zi = rng.normal();
        Field f = Field::zeros_1d(grid_);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = &chol_[i * n];
            for (std::size_t j = 0; j <= i; ++j) s += row[j] * z[j];
            f.values[i] = s;
        }
        return f;
    }

private:
    std::vector<double> grid_;
    std::vector<double> chol_;
    double jitter_ = 0.0;
};

inline Field sample_gp_1d(const RbfKernelSpec& spec, const std::vector<double>& grid, RngState& rng) {
    GpSampler1d sampler(spec, grid);
    return sampler.sample(rng);
}

/// Spectral sampling of the periodic GRF: independent complex Gaussians per
/// mode scaled by the spectrum, Hermitian symmetrization, inverse FFT.
inline Field sample_grf_2d(const SpectralGrfSpec& spec, RngState& rng) {
    const std::size_t n = spec.grid_n;
    require(n >= 4 && n % 2 == 0, Error::BadGrid, "GRF grid_n must be even and >= 4");
    require(spec.power > 1.0, Error::Validation, "GRF power must exceed 1 for a summable 2-D spectrum");

    const double two_pi_sq4 = 4.0 * 9.869604401089358618834490999876;  // 4*pi^2

    Fft2d fft(n);
    // Draw one complex Gaussian per mode in a fixed (i,j) order, then fold to
    // Hermitian symmetry: coefficient(-k) = conj(coefficient(k)).
    std::vector<std::complex<double>> xi(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double re = rng.normal();
            const double im = rng.normal();
            xi[i * n + j] = {re, im};
        }

    const double inv_sqrt2 = 0.70710678118654752440084436210485;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t ic = (n - i) % n;
            const std::size_t jc = (n - j) % n;
            const int k1 = fft_freq(i, n);
            const int k2 = fft_freq(j, n);
            const double ksq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
            const double amp = spec.scale * std::pow(two_pi_sq4 * ksq + spec.tau_sq, -spec.power / 2.0);
            std::complex<double> c;
            if (ic == i && jc == j) {
                c = {xi[i * n + j].real(), 0.0};  // self-conjugate mode stays real
            } else if (i < ic || (i == ic && j < jc)) {
                c = xi[i * n + j] * inv_sqrt2;
            } else {
                c = std::conj(xi[ic * n + jc]) * inv_sqrt2;
            }
            fft.at(i, j) = amp * c;
        }
    }
    if (spec.zero_mean) fft.at(0, 0) = 0.0;

    // The unnormalized inverse transform realizes u(x) = sum_k c_k e^{2 pi i k.x}.
    fft.backward();

    Field out = Field::zeros_2d(n);
    double max_imag = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) {
        out.values[i] = fft.data()[i].real();
        max_imag = std::max(max_imag, std::fabs(fft.data()[i].imag()));
    }
    require(max_imag <= 1e-10, Error::NonFinite, "GRF imaginary residue exceeds 1e-10");
    return out;
}

/// D(x) = 0.01 (|g(x)| + 1); strictly positive diffusion from a GP draw.
inline Field derive_diffusion_input(const Field& g) {
    Field d = g;
    for (auto& v : d.values) v = 0.01 * (std::fabs(v) + 1.0);
    return d;
}

}  // namespace nodeonet
