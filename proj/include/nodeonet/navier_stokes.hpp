#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "nodeonet/diffusion_reaction.hpp"  // SolutionSnapshot
#include "nodeonet/error.hpp"
#include "nodeonet/fft.hpp"
#include "nodeonet/field.hpp"

namespace nodeonet {

/// 2-D incompressible Navier-Stokes in vorticity form on the periodic unit
/// square: w_t + V.grad(w) = nu Lap(w) + f, with V recovered from the
/// streamfunction psi_s = (-Lap)^{-1} w, V = (d_y psi_s, -d_x psi_s).
struct NavierStokesProblem {
    double nu = 1e-3;
    Field forcing;            // time-invariant, on the solve grid
    Field initial_vorticity;  // on the solve grid
    double horizon = 5.0;
};

/// Optional per-step diagnostics.
struct NsTrace {
    std::vector<double> time;
    std::vector<double> enstrophy;       // sum over grid of w^2
    std::vector<double> mean_vorticity;  // grid mean of w
};

/// Pseudo-spectral vorticity solver: Crank-Nicolson viscous term,
/// Adams-Bashforth 2 (Euler first step) advection + forcing, 2/3-rule
/// dealiasing on the quadratic term, mean mode held at its initial value.
class NavierStokesSolver {
public:
    explicit NavierStokesSolver(std::size_t grid_n)
        : n_(grid_n),
          fft_(grid_n),
          w_hat_(grid_n * grid_n),
          f_hat_(grid_n * grid_n),
          nl_hat_(grid_n * grid_n),
          nl_prev_(grid_n * grid_n),
          v1_(grid_n * grid_n),
          v2_(grid_n * grid_n),
          wx_(grid_n * grid_n),
          wy_(grid_n * grid_n) {
        require((grid_n & (grid_n - 1)) == 0 && grid_n >= 32, Error::BadGrid,
                "NS grid must be a power of two >= 32");
    }

    std::size_t grid_n() const noexcept { return n_; }

    /// Advective CFL bound from the initial velocity field, dx / (2 max|V|).
    double stable_dt(const NavierStokesProblem& p) {
        load_spectrum(p.initial_vorticity, w_hat_);
        compute_velocity_and_gradients();
        double vmax = 0.0;
        for (std::size_t i = 0; i < n_ * n_; ++i)
            vmax = std::max({vmax, std::fabs(v1_[i]), std::fabs(v2_[i])});
        const double dx = 1.0 / static_cast<double>(n_);
        if (vmax < 1e-12) return dx;  // pure decay: CN is unconditionally stable
        return 0.5 * dx / vmax;
    }

    SolutionSnapshot solve(const NavierStokesProblem& p, double dt,
                           const std::vector<double>& output_times, NsTrace* trace = nullptr) {
        require(p.initial_vorticity.dim == 2 && p.initial_vorticity.n2 == n_, Error::BadGrid,
                "initial vorticity grid does not match the solver grid");
        require(p.forcing.values.empty() || (p.forcing.dim == 2 && p.forcing.n2 == n_), Error::BadGrid,
                "forcing grid does not match the solver grid");
        require(dt > 0.0, Error::Validation, "dt must be positive");
        require(dt <= stable_dt(p) * (1.0 + 1e-9), Error::Validation,
                "dt exceeds the solver's advective stability bound");

        const std::size_t steps = static_cast<std::size_t>(std::llround(p.horizon / dt));
        require(std::fabs(static_cast<double>(steps) * dt - p.horizon) <= 1e-9 * p.horizon,
                Error::Validation, "dt must divide the horizon");
        for (double t : output_times) {
            require(t >= 0.0 && t <= p.horizon * (1.0 + 1e-12), Error::Validation,
                    "output time outside [0, T]");
            const double snapped = static_cast<double>(std::llround(t / dt)) * dt;
            require(std::fabs(snapped - t) <= 1e-9 * std::max(1.0, p.horizon), Error::Validation,
                    "output time " + std::to_string(t) + " is not on the dt step grid");
        }

        load_spectrum(p.initial_vorticity, w_hat_);
        if (!p.forcing.values.empty())
            load_spectrum(p.forcing, f_hat_);
        else
            std::fill(f_hat_.begin(), f_hat_.end(), std::complex<double>(0.0, 0.0));
        const std::complex<double> mean_mode = w_hat_[0];

        SolutionSnapshot out;
        out.times = output_times;
        out.values.assign(output_times.size(), {});

        auto emit_due = [&](std::size_t step_index) {
            const double t_now = static_cast<double>(step_index) * dt;
            for (std::size_t k = 0; k < output_times.size(); ++k) {
                if (!out.values[k].empty()) continue;
                if (std::llround(output_times[k] / dt) == static_cast<long long>(step_index) ||
                    (step_index == steps && output_times[k] >= t_now - 1e-9))
                    out.values[k] = spectrum_to_physical(w_hat_);
            }
        };
        auto record_trace = [&](std::size_t step_index) {
            if (!trace) return;
            trace->time.push_back(static_cast<double>(step_index) * dt);
            trace->enstrophy.push_back(enstrophy_from_spectrum(w_hat_));
            trace->mean_vorticity.push_back(w_hat_[0].real() / static_cast<double>(n_ * n_));
        };

        emit_due(0);
        record_trace(0);

        const double pi = 3.14159265358979323846264338328;
        const double visc4pi2 = p.nu * 4.0 * pi * pi;

        for (std::size_t step = 0; step < steps; ++step) {
            compute_velocity_and_gradients();

            for (std::size_t i = 0; i < n_ * n_; ++i) {
                const double nl = -(v1_[i] * wx_[i] + v2_[i] * wy_[i]);
                fft_.data()[i] = {nl, 0.0};
            }
            fft_.forward();
            dealias(fft_.data());
            for (std::size_t i = 0; i < n_ * n_; ++i) nl_hat_[i] = fft_.data()[i];

            // AB2 weights, plain Euler on the first step.
            const double c_now = step == 0 ? 1.0 : 1.5;
            const double c_prev = step == 0 ? 0.0 : -0.5;

            for (std::size_t i = 0; i < n_; ++i) {
                const int k1 = fft_freq(i, n_);
                for (std::size_t j = 0; j < n_; ++j) {
                    const int k2 = fft_freq(j, n_);
                    const double ksq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
                    const double q = 0.5 * dt * visc4pi2 * ksq;
                    const std::size_t idx = i * n_ + j;
                    const std::complex<double> expl =
                        c_now * nl_hat_[idx] + c_prev * nl_prev_[idx] + f_hat_[idx];
                    w_hat_[idx] = ((1.0 - q) * w_hat_[idx] + dt * expl) / (1.0 + q);
                }
            }
            w_hat_[0] = mean_mode;
            nl_prev_.swap(nl_hat_);

            // |w|_inf <= sum_k |c_k|; confirm pointwise only when the cheap
            // bound trips so the common path stays FFT-free.
            double coeff_l1 = 0.0;
            for (const auto& z : w_hat_) coeff_l1 += std::abs(z);
            if (!(coeff_l1 <= 1e6)) {
                if (!std::isfinite(coeff_l1))
                    raise(Error::Diverged, "NS solve blew up at step " + std::to_string(step + 1));
                const auto phys = spectrum_to_physical(w_hat_);
                double wmax = 0.0;
                for (double v : phys) wmax = std::max(wmax, std::fabs(v));
                if (!(wmax <= 1e6))
                    raise(Error::Diverged, "NS solve blew up at step " + std::to_string(step + 1));
            }

            emit_due(step + 1);
            record_trace(step + 1);
        }
        for (std::size_t k = 0; k < output_times.size(); ++k)
            require(!out.values[k].empty(), Error::Validation,
                    "output time " + std::to_string(output_times[k]) + " not on the step grid");
        return out;
    }

    /// Velocity recovered from a vorticity field via the streamfunction.
    std::pair<Field, Field> velocity_from_vorticity(const Field& w) {
        require(w.dim == 2 && w.n2 == n_, Error::BadGrid, "vorticity grid mismatch");
        load_spectrum(w, w_hat_);
        compute_velocity_and_gradients();
        Field a = Field::zeros_2d(n_), b = Field::zeros_2d(n_);
        a.values = v1_;
        b.values = v2_;
        return {a, b};
    }

    /// max_k |i k . V_hat(k)|, the spectral divergence of a velocity field.
    double divergence_max_fourier(const Field& v1, const Field& v2) {
        const double two_pi = 6.28318530717958647692528676656;
        std::vector<std::complex<double>> v1h(n_ * n_), v2h(n_ * n_);
        to_spectrum(v1.values, v1h);
        to_spectrum(v2.values, v2h);
        double worst = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double k1 = two_pi * fft_freq_deriv(i, n_);
            for (std::size_t j = 0; j < n_; ++j) {
                const double k2 = two_pi * fft_freq_deriv(j, n_);
                const std::size_t idx = i * n_ + j;
                worst = std::max(worst, std::abs(k1 * v1h[idx] + k2 * v2h[idx]));
            }
        }
        return worst;
    }

    static double enstrophy(const Field& w) {
        double s = 0.0;
        for (double v : w.values) s += v * v;
        return s;
    }

private:
    void to_spectrum(const std::vector<double>& phys, std::vector<std::complex<double>>& hat) {
        for (std::size_t i = 0; i < n_ * n_; ++i) fft_.data()[i] = {phys[i], 0.0};
        fft_.forward();
        const double s = 1.0 / static_cast<double>(n_ * n_);
        for (std::size_t i = 0; i < n_ * n_; ++i) hat[i] = fft_.data()[i] * s;
    }

    void load_spectrum(const Field& f, std::vector<std::complex<double>>& hat) {
        to_spectrum(f.values, hat);
        // Normalization: hat holds coefficients of sum_k c_k e^{2 pi i k.x}.
        for (std::size_t i = 0; i < n_ * n_; ++i) hat[i] *= static_cast<double>(n_ * n_);
    }

    std::vector<double> spectrum_to_physical(const std::vector<std::complex<double>>& hat) {
        for (std::size_t i = 0; i < n_ * n_; ++i) fft_.data()[i] = hat[i];
        fft_.backward_normalized();
        std::vector<double> out(n_ * n_);
        for (std::size_t i = 0; i < n_ * n_; ++i) out[i] = fft_.data()[i].real();
        return out;
    }

    double enstrophy_from_spectrum(const std::vector<std::complex<double>>& hat) const {
        // Parseval with w(x) = sum_k c_k e^{2 pi i k.x}: sum_x w^2 = n^2 sum_k |c_k|^2.
        double s = 0.0;
        for (const auto& z : hat) s += std::norm(z);
        return s * static_cast<double>(n_ * n_);
    }

    /// Fill v1_, v2_, wx_, wy_ (physical space) from w_hat_.
    void compute_velocity_and_gradients() {
        const double two_pi = 6.28318530717958647692528676656;
        const double four_pi_sq = 39.478417604357434475337963999505;

        auto ifft_into = [&](std::vector<double>& dst) {
            fft_.backward_normalized();
            for (std::size_t i = 0; i < n_ * n_; ++i) dst[i] = fft_.data()[i].real();
        };

        // V1 = d_y psi_s, psi_s = w_hat / (4 pi^2 |k|^2).
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                const int k1 = fft_freq(i, n_);
                const int k2 = fft_freq(j, n_);
                const double ksq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
                const std::size_t idx = i * n_ + j;
                const std::complex<double> psi =
                    ksq == 0.0 ? std::complex<double>(0.0, 0.0) : w_hat_[idx] / (four_pi_sq * ksq);
                const double kd2 = two_pi * fft_freq_deriv(j, n_);
                fft_.data()[idx] = std::complex<double>(0.0, kd2) * psi;
            }
        }
        ifft_into(v1_);

        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                const int k1 = fft_freq(i, n_);
                const int k2 = fft_freq(j, n_);
                const double ksq = static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2;
                const std::size_t idx = i * n_ + j;
                const std::complex<double> psi =
                    ksq == 0.0 ? std::complex<double>(0.0, 0.0) : w_hat_[idx] / (four_pi_sq * ksq);
                const double kd1 = two_pi * fft_freq_deriv(i, n_);
                fft_.data()[idx] = std::complex<double>(0.0, -kd1) * psi;
            }
        }
        ifft_into(v2_);

        for (std::size_t i = 0; i < n_; ++i) {
            const double kd1 = two_pi * fft_freq_deriv(i, n_);
            for (std::size_t j = 0; j < n_; ++j)
                fft_.data()[i * n_ + j] = std::complex<double>(0.0, kd1) * w_hat_[i * n_ + j];
        }
        ifft_into(wx_);

        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                const double kd2 = two_pi * fft_freq_deriv(j, n_);
                fft_.data()[i * n_ + j] = std::complex<double>(0.0, kd2) * w_hat_[i * n_ + j];
            }
        }
        ifft_into(wy_);
    }

    void dealias(std::complex<double>* hat) {
        const int cutoff = static_cast<int>(n_) / 3;
        for (std::size_t i = 0; i < n_; ++i) {
            const int k1 = std::abs(fft_freq(i, n_));
            for (std::size_t j = 0; j < n_; ++j) {
                const int k2 = std::abs(fft_freq(j, n_));
                if (k1 > cutoff || k2 > cutoff) hat[i * n_ + j] = 0.0;
            }
        }
    }

    std::size_t n_;
    Fft2d fft_;
    std::vector<std::complex<double>> w_hat_, f_hat_, nl_hat_, nl_prev_;
    std::vector<double> v1_, v2_, wx_, wy_;
};

/// One-shot wrapper matching the operation contract.
inline SolutionSnapshot solve_navier_stokes(const NavierStokesProblem& p, std::size_t grid_n,
                                            double dt, const std::vector<double>& output_times,
                                            NsTrace* trace = nullptr) {
    NavierStokesSolver solver(grid_n);
    return solver.solve(p, dt, output_times, trace);
}

}  // namespace nodeonet
