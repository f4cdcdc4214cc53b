#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "nodeonet/model.hpp"

namespace nodeonet {

/// Aggregate and per-time-slice RMS errors. `within_*` / `beyond_*` are the
/// horizon split; they coincide with the totals when nothing extrapolates.
struct EvalReport {
    double absolute_error = 0.0;
    double relative_error = 0.0;
    std::vector<double> times;
    std::vector<double> slice_absolute;
    std::vector<double> slice_relative;
    double train_horizon = 0.0;
    std::size_t within_count = 0;   // leading time slices inside the horizon
    double within_absolute = 0.0;
    double within_relative = 0.0;
    double beyond_absolute = 0.0;
    double beyond_relative = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_x = 0;
    std::size_t n_t = 0;
    double wall_seconds = 0.0;
    std::vector<double> sample0_truth;  // (n_t x n_x), plot payload
    std::vector<double> sample0_pred;
};

/// RMS error metrics over samples x time x space:
///   absolute = sqrt(mean |pred - label|^2),  relative = absolute / label RMS.
/// Accumulation is per time slice in fixed (sample, time, point) order so a
/// leading-slice restriction reproduces a shorter evaluation bitwise.
inline EvalReport compute_errors(const std::vector<DenseArray>& predictions,
                                 const std::vector<DenseArray>& labels,
                                 const std::vector<double>& times,
                                 std::size_t within_count = 0, double train_horizon = 0.0) {
    require(predictions.size() == labels.size() && !predictions.empty(), Error::Shape,
            "predictions/labels sample count mismatch");
    const std::size_t n_t = times.size();
    require(n_t >= 1, Error::Shape, "no time slices");
    const Shape expect{n_t, predictions[0].shape().at(1)};
    const std::size_t n_x = expect[1];
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        require(predictions[i].shape() == expect, Error::Shape, "prediction shape mismatch");
        require(labels[i].shape() == expect, Error::Shape, "label shape mismatch");
    }
    if (within_count == 0) within_count = n_t;

    std::vector<double> err_sq(n_t, 0.0), ref_sq(n_t, 0.0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const DenseArray& pred = predictions[i];
        const DenseArray& label = labels[i];
        for (std::size_t k = 0; k < n_t; ++k) {
            double e = 0.0, r = 0.0;
            for (std::size_t j = 0; j < n_x; ++j) {
                const double d = pred.at2(k, j) - label.at2(k, j);
                e += d * d;
                r += label.at2(k, j) * label.at2(k, j);
            }
            err_sq[k] += e;
            ref_sq[k] += r;
        }
    }

    EvalReport rep;
    rep.times = times;
    rep.n_samples = predictions.size();
    rep.n_x = n_x;
    rep.n_t = n_t;
    rep.train_horizon = train_horizon;
    rep.within_count = within_count;

    const double per_slice_count = static_cast<double>(rep.n_samples) * static_cast<double>(n_x);
    for (std::size_t k = 0; k < n_t; ++k) {
        const double abs_k = std::sqrt(err_sq[k] / per_slice_count);
        rep.slice_absolute.push_back(abs_k);
        const double ref_k = std::sqrt(ref_sq[k] / per_slice_count);
        rep.slice_relative.push_back(ref_k > 0.0 ? abs_k / ref_k : 0.0);
    }

    auto aggregate = [&](std::size_t k_begin, std::size_t k_end, double& abs_out, double& rel_out) {
        double e = 0.0, r = 0.0;
        for (std::size_t k = k_begin; k < k_end; ++k) {
            e += err_sq[k];
            r += ref_sq[k];
        }
        const double count = per_slice_count * static_cast<double>(k_end - k_begin);
        abs_out = std::sqrt(e / count);
        require(r > 0.0, Error::DegenerateLabels, "label RMS is zero");
        rel_out = abs_out / std::sqrt(r / count);
    };
    aggregate(0, n_t, rep.absolute_error, rep.relative_error);
    aggregate(0, within_count, rep.within_absolute, rep.within_relative);
    if (within_count < n_t)
        aggregate(within_count, n_t, rep.beyond_absolute, rep.beyond_relative);
    return rep;
}

/// Standard evaluation of a model on one set of samples at a query grid.
/// Predictions are re-integrated at `n_steps` Euler steps (test-time
/// resolution upsampling happens here).
inline EvalReport evaluate_model(const NodeModel& model,
                                 const std::vector<std::map<InputRole, EncodedInput>>& inputs,
                                 const std::vector<DenseArray>& labels,
                                 const std::vector<double>& times,
                                 const std::vector<std::vector<double>>& points,
                                 double horizon, std::size_t n_steps, bool keep_fields = true) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<DenseArray> preds;
    preds.reserve(inputs.size());
    for (const auto& enc : inputs)
        preds.push_back(forward_on_grid(model, enc, times, points, horizon, n_steps).values);
    EvalReport rep = compute_errors(preds, labels, times);
    rep.train_horizon = model.train_horizon;
    if (keep_fields && !preds.empty()) {
        rep.sample0_pred.assign(preds[0].data(), preds[0].data() + preds[0].size());
        rep.sample0_truth.assign(labels[0].data(), labels[0].data() + labels[0].size());
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Beyond-horizon evaluation: fresh labels over [0, t_eval] come from the
/// caller-supplied reference solve, the model is re-run with extend_horizon,
/// and the report is split at the training horizon. The within-horizon
/// leading slice aggregates exactly the same numbers as evaluate_model on
/// [0, T_train] at the same step density.
inline EvalReport evaluate_extrapolation(
    const NodeModel& model, const std::vector<std::map<InputRole, EncodedInput>>& inputs,
    const std::vector<DenseArray>& labels_extended, const std::vector<double>& times_extended,
    const std::vector<std::vector<double>>& points, double t_eval, std::size_t n_steps_extended,
    bool keep_fields = true) {
    require(t_eval >= model.train_horizon, Error::Validation,
            "extrapolation horizon must reach the training horizon");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<DenseArray> preds;
    preds.reserve(inputs.size());
    for (const auto& enc : inputs)
        preds.push_back(
            extend_horizon(model, enc, t_eval, n_steps_extended, times_extended, points).values);

    std::size_t within = 0;
    for (double t : times_extended)
        if (t <= model.train_horizon * (1.0 + 1e-12)) ++within;
    EvalReport rep = compute_errors(preds, labels_extended, times_extended, within,
                                    model.train_horizon);
    if (keep_fields && !preds.empty()) {
        rep.sample0_pred.assign(preds[0].data(), preds[0].data() + preds[0].size());
        rep.sample0_truth.assign(labels_extended[0].data(),
                                 labels_extended[0].data() + labels_extended[0].size());
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace nodeonet
