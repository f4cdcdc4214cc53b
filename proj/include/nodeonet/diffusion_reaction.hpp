#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "nodeonet/error.hpp"
#include "nodeonet/field.hpp"

namespace nodeonet {

/// 1-D nonlinear diffusion-reaction problem on [0,1] with homogeneous
/// Dirichlet boundaries:
///   u_t - (D(x) u_x)_x + R u^2 = f(t,x),  u(0,x) = u0(x).
struct DiffusionReactionProblem {
    std::function<double(double)> diffusion = [](double) { return 0.01; };
    double reaction = 0.0;
    std::function<double(double, double)> source = [](double, double) { return 0.0; };
    bool source_time_invariant = false;  // lets the solver tabulate f once
    std::function<double(double)> initial = [](double) { return 0.0; };
    double horizon = 1.0;

    static DiffusionReactionProblem from_fields(const Field& diffusion_field, double reaction,
                                                const Field& source_field, double horizon) {
        DiffusionReactionProblem p;
        p.diffusion = [diffusion_field](double x) { return diffusion_field.value_at(x); };
        p.source = [source_field](double, double x) { return source_field.value_at(x); };
        p.source_time_invariant = true;
        p.reaction = reaction;
        p.horizon = horizon;
        return p;
    }
};

/// Solution sampled on an output grid; values[k] holds the field over
/// `points` at times[k].
struct SolutionSnapshot {
    std::vector<double> times;
    std::vector<double> points;              // 1-D coordinates, or empty for 2-D
    std::vector<std::vector<double>> values;
};

namespace detail {

/// Thomas algorithm; overwrites the inputs.
inline void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag,
                              std::vector<double>& upper, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

}  // namespace detail

/// Conservative flux-form central differences in space, IMEX in time:
/// implicit backward-Euler diffusion (tridiagonal solve), explicit R u^2 and
/// source. Output is linearly interpolated in time and space.
inline SolutionSnapshot solve_diffusion_reaction(const DiffusionReactionProblem& p,
                                                 std::size_t n_fine_x, std::size_t n_fine_t,
                                                 const std::vector<double>& output_times,
                                                 const std::vector<double>& output_points) {
    require(n_fine_x >= 101, Error::BadGrid, "fine grid needs at least 101 points");
    require(n_fine_t >= 1, Error::BadGrid, "need at least one time step");
    for (double t : output_times)
        require(t >= 0.0 && t <= p.horizon * (1.0 + 1e-12), Error::BadGrid,
                "output time outside [0, T]");
    for (double x : output_points)
        require(x >= -1e-12 && x <= 1.0 + 1e-12, Error::BadGrid, "output point outside [0, 1]");

    const std::size_t nx = n_fine_x;
    const double h = 1.0 / static_cast<double>(nx - 1);
    const double dt = p.horizon / static_cast<double>(n_fine_t);

    std::vector<double> xs(nx);
    for (std::size_t i = 0; i < nx; ++i) xs[i] = static_cast<double>(i) * h;

    // Midpoint diffusion coefficients for the conservative flux form.
    std::vector<double> d_half(nx - 1);
    for (std::size_t i = 0; i + 1 < nx; ++i) d_half[i] = p.diffusion(0.5 * (xs[i] + xs[i + 1]));

    std::vector<double> u(nx), u_next(nx);
    for (std::size_t i = 0; i < nx; ++i) u[i] = p.initial(xs[i]);
    u.front() = 0.0;
    u.back() = 0.0;

    // Interior system (I - dt*A) u^{n+1} = rhs, boundary rows pinned to 0.
    const std::size_t m = nx - 2;
    std::vector<double> lower(m), diag(m), upper(m), rhs(m);

    SolutionSnapshot out;
    out.times = output_times;
    out.points = output_points;
    out.values.assign(output_times.size(), std::vector<double>(output_points.size(), 0.0));

    std::vector<bool> emitted(output_times.size(), false);
    auto emit_from_state = [&](std::size_t k, const std::vector<double>& state_prev,
                               const std::vector<double>& state_next, double t_prev, double w) {
        for (std::size_t j = 0; j < output_points.size(); ++j) {
            const double x = output_points[j];
            double fi = x / h;
            std::size_t i0 = std::min(static_cast<std::size_t>(fi), nx - 2);
            double wx = fi - static_cast<double>(i0);
            auto interp_x = [&](const std::vector<double>& s) {
                return (1.0 - wx) * s[i0] + wx * s[i0 + 1];
            };
            out.values[k][j] = (1.0 - w) * interp_x(state_prev) + w * interp_x(state_next);
        }
        (void)t_prev;
        emitted[k] = true;
    };

    // t = 0 snapshots come straight from the initial state.
    for (std::size_t k = 0; k < output_times.size(); ++k)
        if (output_times[k] <= 0.0) emit_from_state(k, u, u, 0.0, 0.0);

    std::vector<double> src_tab;
    if (p.source_time_invariant) {
        src_tab.resize(m);
        for (std::size_t i = 0; i < m; ++i) src_tab[i] = p.source(0.0, xs[i + 1]);
    }

    const double r_coeff = dt / (h * h);
    double t = 0.0;
    for (std::size_t step = 0; step < n_fine_t; ++step) {
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t gi = i + 1;
            const double dl = d_half[gi - 1], dr = d_half[gi];
            diag[i] = 1.0 + r_coeff * (dl + dr);
            lower[i] = -r_coeff * dl;
            upper[i] = -r_coeff * dr;
            const double f_val = p.source_time_invariant ? src_tab[i] : p.source(t, xs[gi]);
            rhs[i] = u[gi] + dt * (f_val - p.reaction * u[gi] * u[gi]);
        }
        detail::solve_tridiagonal(lower, diag, upper, rhs);
        u_next.front() = 0.0;
        u_next.back() = 0.0;
        for (std::size_t i = 0; i < m; ++i) u_next[i + 1] = rhs[i];

        const double t_next = t + dt;
        double max_abs = 0.0;
        for (double v : u_next) max_abs = std::max(max_abs, std::fabs(v));
        if (!(max_abs <= 1e6))
            raise(Error::Diverged, "diffusion-reaction solve diverged at step " + std::to_string(step));

        for (std::size_t k = 0; k < output_times.size(); ++k) {
            if (emitted[k]) continue;
            const double tk = output_times[k];
            if (tk <= t_next + 1e-12 * p.horizon) {
                const double w = std::min(1.0, std::max(0.0, (tk - t) / dt));
                emit_from_state(k, u, u_next, t, w);
            }
        }
        u.swap(u_next);
        t = t_next;
    }
    for (std::size_t k = 0; k < output_times.size(); ++k)
        if (!emitted[k]) emit_from_state(k, u, u, t, 0.0);
    return out;
}

}  // namespace nodeonet
