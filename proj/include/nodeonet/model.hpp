#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "nodeonet/decoder.hpp"
#include "nodeonet/encoder.hpp"
#include "nodeonet/field.hpp"
#include "nodeonet/node_variant.hpp"

namespace nodeonet {

/// A trained (or trainable) NODE-ONet: encoder sensors, one physics-encoded
/// NODE, and a spatial decoder. `train_horizon` / `train_steps` record the
/// Euler grid the model was fitted on.
struct NodeModel {
    NodeVariant variant;
    NodeParams params;
    SensorEncoder encoder;
    DecoderSpec decoder_spec;
    DecoderParams decoder;
    double train_horizon = 1.0;
    std::size_t train_steps = 5;
};

struct ForwardStats {
    std::size_t trajectory_integrations = 0;
    std::size_t rhs_steps = 0;
    std::size_t basis_point_evals = 0;
};

/// Predictions on a (times x points) query grid for one input sample,
/// row-major over times then points.
struct Prediction {
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    DenseArray values;  // (n_times x n_points)
};

namespace detail {

inline std::size_t grid_index_of(double t, double horizon, std::size_t n_steps) {
    const double dt = horizon / static_cast<double>(n_steps);
    const double idx = t / dt;
    const auto k = static_cast<long long>(std::llround(idx));
    require(k >= 0 && k <= static_cast<long long>(n_steps) &&
                std::fabs(idx - static_cast<double>(k)) <= 1e-9 * std::max(1.0, idx),
            Error::TimeNotOnGrid, "query time " + std::to_string(t) + " is not on the Euler grid");
    return static_cast<std::size_t>(k);
}

}  // namespace detail

/// Encode raw input fields at the model's sensors.
inline std::map<InputRole, EncodedInput> encode_inputs(const NodeModel& model,
                                                       const std::map<InputRole, Field>& raw) {
    std::map<InputRole, EncodedInput> out;
    for (const auto& [role, field] : raw)
        out.emplace(role, EncodedInput::invariant(encode(model.encoder, field)));
    return out;
}

/// Full NODE-ONet map: integrate the latent ODE on [0, horizon] with
/// `n_steps` Euler steps, decode once per query point, and form
/// sum_j alpha_j(x) psi_j(t) on the query grid. psi(t) is computed once per
/// sample; changing x only re-evaluates the decoder.
inline Prediction forward_on_grid(const NodeModel& model,
                                  const std::map<InputRole, EncodedInput>& encoded,
                                  const std::vector<double>& query_times,
                                  const std::vector<std::vector<double>>& query_points,
                                  double horizon, std::size_t n_steps,
                                  ForwardStats* stats = nullptr) {
    LatentTrajectory traj = integrate_euler(model.variant, model.params, encoded, horizon, n_steps);
    if (stats) {
        stats->trajectory_integrations += 1;
        stats->rhs_steps += n_steps;
    }

    DenseArray amat = basis_matrix(model.decoder_spec, model.decoder, query_points);
    if (stats) stats->basis_point_evals += query_points.size();

    Prediction pred;
    pred.times = query_times;
    pred.points = query_points;
    pred.values = DenseArray(Shape{query_times.size(), query_points.size()});
    const std::size_t n_pts = query_points.size();
    for (std::size_t ti = 0; ti < query_times.size(); ++ti) {
        const std::size_t k = detail::grid_index_of(query_times[ti], horizon, n_steps);
        const DenseArray& psi = traj.states[k];
        kernels::matvec(amat.data(), psi.data(), pred.values.data() + ti * n_pts, n_pts,
                        model.variant.d_u);
    }
    pred.values.check_finite();
    return pred;
}

inline Prediction forward(const NodeModel& model, const std::map<InputRole, Field>& raw_inputs,
                          const std::vector<double>& query_times,
                          const std::vector<std::vector<double>>& query_points,
                          std::size_t n_steps, ForwardStats* stats = nullptr) {
    return forward_on_grid(model, encode_inputs(model, raw_inputs), query_times, query_points,
                           model.train_horizon, n_steps, stats);
}

/// Re-run the trained dynamics past the training horizon; no retraining,
/// just a longer Euler grid with the same parameters.
inline Prediction extend_horizon(const NodeModel& model,
                                 const std::map<InputRole, EncodedInput>& encoded,
                                 double new_horizon, std::size_t n_steps,
                                 const std::vector<double>& query_times,
                                 const std::vector<std::vector<double>>& query_points,
                                 ForwardStats* stats = nullptr) {
    require(new_horizon >= model.train_horizon, Error::Validation,
            "extended horizon must not shrink the training horizon");
    return forward_on_grid(model, encoded, query_times, query_points, new_horizon, n_steps, stats);
}

}  // namespace nodeonet
