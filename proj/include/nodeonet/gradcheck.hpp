#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nodeonet/training.hpp"

namespace nodeonet {

/// Outcome of one variant/decoder gradient check against central finite
/// differences of the full training loss.
struct GradCheckResult {
    std::string case_name;
    std::uint64_t seed_used = 0;
    double kink_distance = 0.0;
    double max_rel_deviation = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

inline const char* variant_name(NodeVariantKind k) {
    switch (k) {
    case NodeVariantKind::DiffusionReactionFull: return "dr-full";
    case NodeVariantKind::SourceOnly: return "source-only";
    case NodeVariantKind::DiffusionInput: return "diffusion-input";
    case NodeVariantKind::MultiInput: return "multi-input";
    case NodeVariantKind::NavierStokes: return "navier-stokes";
    }
    return "?";
}

inline TrainingBatch random_batch(const NodeVariant& var, std::uint64_t seed, std::size_t n_samples,
                                  std::size_t n_t, std::size_t n_x, int spatial_dim) {
    RngState rng(seed);
    TrainingBatch batch;
    batch.horizon = 1.0;
    for (std::size_t k = 1; k <= n_t; ++k)
        batch.label_times.push_back(static_cast<double>(k) / static_cast<double>(n_t));
    for (std::size_t j = 0; j < n_x; ++j) {
        if (spatial_dim == 1)
            batch.label_points.push_back({static_cast<double>(j) / static_cast<double>(n_x - 1)});
        else
            batch.label_points.push_back({rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)});
    }
    for (std::size_t s = 0; s < n_samples; ++s) {
        TrainSample sample;
        for (InputRole role : var.required_roles()) {
            DenseArray v(Shape{var.d_v});
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
            sample.encoded.emplace(role, std::move(v));
        }
        DenseArray labels(Shape{n_t, n_x});
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.uniform(-1.0, 1.0);
        sample.labels = std::move(labels);
        batch.samples.push_back(std::move(sample));
    }
    return batch;
}

}  // namespace gradcheck_detail

/// Check one (variant, decoder) pair at the d_U=4, P=3, d_V=3, N_t=5,
/// 2-sample scale. Instances whose relu pre-activations (or, with L1 on,
/// parameters) sit within 1e-4 of a kink are re-drawn from the next seed.
inline GradCheckResult check_loss_gradient(NodeVariantKind kind, DecoderKind dec_kind,
                                           std::uint64_t seed, double lambda = 0.0,
                                           double tol = 1e-6) {
    GradCheckResult result;
    result.case_name = std::string(gradcheck_detail::variant_name(kind)) + "/" +
                       (dec_kind == DecoderKind::LearnedBasis ? "learned" : "fourier") +
                       (lambda > 0.0 ? "/l1" : "");

    NodeVariant var;
    var.kind = kind;
    var.terms = 3;
    var.d_u = 4;
    var.d_v = 3;
    var.poly_degree = 1;
    var.poly_zero_constant = true;

    const int spatial_dim = kind == NodeVariantKind::NavierStokes ? 2 : 1;
    DecoderSpec dec;
    dec.kind = dec_kind;
    dec.d_u = var.d_u;
    dec.input_dim = spatial_dim;
    dec.hidden = {8};
    dec.finalize();

    const double h = 1e-5;
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        const std::uint64_t s = seed + attempt;
        NodeModel model = init_params(var, dec, s);
        TrainingBatch batch = gradcheck_detail::random_batch(var, s * 7919 + 13, 2, 5, 6, spatial_dim);
        TrainConfig cfg;
        cfg.lambda = lambda;
        cfg.reg_kind = lambda > 0.0 ? TrainConfig::Reg::L1 : TrainConfig::Reg::None;
        cfg.epochs = 0;

        Trainer trainer(model, batch, cfg);
        trainer.enable_kink_tracking();
        LossBreakdown base = trainer.loss_and_gradients();
        (void)base;
        result.kink_distance = trainer.min_relu_kink_distance();
        if (result.kink_distance < 1e-4) continue;
        if (lambda > 0.0) {
            double min_theta = 1e300;
            for (const auto& r : trainer.params())
                for (std::size_t i = 0; i < r.value->size(); ++i)
                    min_theta = std::min(min_theta, std::fabs((*r.value)[i]));
            if (min_theta < 1e-4) continue;
        }
        result.seed_used = s;

        std::vector<DenseArray> ad;
        for (const auto& g : trainer.gradients()) ad.push_back(g);

        // Central finite differences on the same loss path.
        const auto& refs = trainer.params();
        double gmax = 0.0;
        std::vector<DenseArray> fd;
        for (const auto& r : refs) fd.emplace_back(r.value->shape());
        for (std::size_t p = 0; p < refs.size(); ++p) {
            for (std::size_t i = 0; i < refs[p].value->size(); ++i) {
                double& theta = (*refs[p].value)[i];
                const double keep = theta;
                theta = keep + h;
                const double up = trainer.loss_and_gradients().total;
                theta = keep - h;
                const double dn = trainer.loss_and_gradients().total;
                theta = keep;
                fd[p][i] = (up - dn) / (2.0 * h);
                gmax = std::max(gmax, std::fabs(fd[p][i]));
            }
        }
        double worst = 0.0;
        for (std::size_t p = 0; p < refs.size(); ++p)
            for (std::size_t i = 0; i < fd[p].size(); ++i) {
                const double denom =
                    std::max({std::fabs(fd[p][i]), std::fabs(ad[p][i]), 1e-3 * gmax, 1e-12});
                worst = std::max(worst, std::fabs(ad[p][i] - fd[p][i]) / denom);
            }
        result.max_rel_deviation = worst;
        result.pass = worst <= tol;
        return result;
    }
    result.pass = false;
    result.case_name += " (no kink-safe instance found)";
    return result;
}

/// Every NODE variant crossed with the learned and Fourier decoders, plus an
/// L1-regularized case.
inline std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, double tol = 1e-6) {
    std::vector<GradCheckResult> results;
    const NodeVariantKind kinds[] = {NodeVariantKind::SourceOnly, NodeVariantKind::DiffusionInput,
                                     NodeVariantKind::MultiInput,
                                     NodeVariantKind::DiffusionReactionFull,
                                     NodeVariantKind::NavierStokes};
    std::uint64_t s = seed;
    for (NodeVariantKind kind : kinds) {
        results.push_back(check_loss_gradient(kind, DecoderKind::LearnedBasis, s += 101, 0.0, tol));
        if (kind != NodeVariantKind::NavierStokes)  // the Fourier decoder is 1-D only
            results.push_back(check_loss_gradient(kind, DecoderKind::Fourier, s += 101, 0.0, tol));
    }
    results.push_back(
        check_loss_gradient(NodeVariantKind::SourceOnly, DecoderKind::LearnedBasis, s += 101, 1e-5, tol));
    return results;
}

}  // namespace nodeonet
