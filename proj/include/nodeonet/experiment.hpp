#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nodeonet/dataset.hpp"
#include "nodeonet/evaluation.hpp"
#include "nodeonet/gradcheck.hpp"
#include "nodeonet/training.hpp"

namespace nodeonet {

// ---------------------------------------------------------------------------
// Experiment configuration: strict JSON schema, unknown keys rejected.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string problem;  // family name; must match the dataset
    std::string variant;  // "" = family default; "dr-full" forces eq-pe3
    std::size_t d_v = 20;
    std::size_t d_u = 50;
    std::size_t terms = 100;  // P
    std::size_t poly_degree = 1;
    DecoderSpec decoder;
    TrainConfig train;
};

namespace experiment_detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        require(allowed.count(it.key()) == 1, Error::Validation,
                "unknown key '" + it.key() + "' in " + where);
}

inline NodeVariantKind variant_from_string(const std::string& s) {
    if (s == "source-only") return NodeVariantKind::SourceOnly;
    if (s == "diffusion-input") return NodeVariantKind::DiffusionInput;
    if (s == "multi-input") return NodeVariantKind::MultiInput;
    if (s == "dr-full") return NodeVariantKind::DiffusionReactionFull;
    if (s == "navier-stokes") return NodeVariantKind::NavierStokes;
    raise(Error::Validation, "unknown variant '" + s + "'");
}

inline const char* variant_to_string(NodeVariantKind k) {
    switch (k) {
    case NodeVariantKind::SourceOnly: return "source-only";
    case NodeVariantKind::DiffusionInput: return "diffusion-input";
    case NodeVariantKind::MultiInput: return "multi-input";
    case NodeVariantKind::DiffusionReactionFull: return "dr-full";
    case NodeVariantKind::NavierStokes: return "navier-stokes";
    }
    return "?";
}

inline const char* decoder_kind_to_string(DecoderKind k) {
    switch (k) {
    case DecoderKind::LearnedBasis: return "learned";
    case DecoderKind::Fourier: return "fourier";
    case DecoderKind::FemP1: return "femp1";
    }
    return "?";
}

inline DecoderKind decoder_kind_from_string(const std::string& s) {
    if (s == "learned") return DecoderKind::LearnedBasis;
    if (s == "fourier") return DecoderKind::Fourier;
    if (s == "femp1") return DecoderKind::FemP1;
    raise(Error::Validation, "unknown decoder kind '" + s + "'");
}

}  // namespace experiment_detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    using namespace experiment_detail;
    reject_unknown_keys(j, {"problem", "variant", "d_V", "d_U", "P", "poly_degree", "decoder", "train"},
                        "config");
    ExperimentConfig cfg;
    cfg.problem = j.at("problem").get<std::string>();
    family_from_name(cfg.problem);  // validates
    cfg.variant = j.value("variant", std::string());
    if (!cfg.variant.empty()) variant_from_string(cfg.variant);
    cfg.d_v = j.at("d_V").get<std::size_t>();
    cfg.d_u = j.at("d_U").get<std::size_t>();
    cfg.terms = j.at("P").get<std::size_t>();
    cfg.poly_degree = j.value("poly_degree", std::size_t{1});

    const auto& dec = j.at("decoder");
    reject_unknown_keys(dec, {"kind", "hidden", "activation"}, "config.decoder");
    cfg.decoder.kind = decoder_kind_from_string(dec.at("kind").get<std::string>());
    cfg.decoder.d_u = cfg.d_u;
    if (dec.contains("hidden")) cfg.decoder.hidden = dec.at("hidden").get<std::vector<std::size_t>>();
    if (dec.contains("activation")) {
        const std::string act = dec.at("activation").get<std::string>();
        require(act == "relu" || act == "tanh", Error::Validation, "activation must be relu or tanh");
        cfg.decoder.activation = act == "relu" ? Activation::Relu : Activation::Tanh;
    }

    const auto& tr = j.at("train");
    reject_unknown_keys(tr,
                        {"epochs", "learning_rate", "batch_size", "lambda", "reg", "seed",
                         "freeze_decoder", "log_every"},
                        "config.train");
    cfg.train.epochs = tr.at("epochs").get<std::size_t>();
    cfg.train.learning_rate = tr.at("learning_rate").get<double>();
    cfg.train.batch_size = tr.value("batch_size", std::size_t{0});
    cfg.train.lambda = tr.value("lambda", 0.0);
    const std::string reg = tr.value("reg", std::string("none"));
    require(reg == "none" || reg == "l1", Error::Validation, "reg must be none or l1");
    cfg.train.reg_kind = reg == "l1" ? TrainConfig::Reg::L1 : TrainConfig::Reg::None;
    cfg.train.seed = tr.value("seed", std::uint64_t{0});
    cfg.train.freeze_decoder = tr.value("freeze_decoder", false);
    cfg.train.log_every = tr.value("log_every", std::size_t{100});
    cfg.train.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), Error::Io, "cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Validation, std::string("config is not valid JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Model assembly and dataset encoding.
// ---------------------------------------------------------------------------

inline NodeModel build_model(const ExperimentConfig& cfg, const Dataset& ds) {
    using namespace experiment_detail;
    require(cfg.problem == family_name(ds.family), Error::Validation,
            "config problem '" + cfg.problem + "' does not match dataset family '" +
                family_name(ds.family) + "'");
    const bool is_ns = family_is_ns(ds.family);

    NodeVariant var;
    var.kind = cfg.variant.empty() ? family_default_variant(ds.family)
                                   : variant_from_string(cfg.variant);
    var.terms = cfg.terms;
    var.poly_degree = cfg.poly_degree;
    var.d_u = cfg.d_u;
    var.d_v = cfg.d_v;

    DecoderSpec dec = cfg.decoder;
    dec.d_u = cfg.d_u;
    dec.input_dim = is_ns ? 2 : 1;

    NodeModel model = init_params(var, dec, cfg.train.seed);
    if (is_ns) {
        require(cfg.d_v == ds.label_grid_n * ds.label_grid_n, Error::Validation,
                "d_V must equal the dataset's encoder grid (" +
                    std::to_string(ds.label_grid_n * ds.label_grid_n) + ")");
        model.encoder = SensorEncoder::grid_2d(ds.label_grid_n);
    } else {
        require(cfg.d_v >= 2 && cfg.d_v <= ds.fine_nx, Error::Validation,
                "d_V out of range for the 1-D input grid");
        model.encoder = SensorEncoder::uniform_1d(cfg.d_v);
    }
    model.train_horizon = ds.horizon;
    model.train_steps = ds.train.times.size();
    return model;
}

/// Encode one dataset sample for the model (constant fields, plus the scalar
/// reaction coefficient for the full variant).
inline std::map<InputRole, DenseArray> encode_sample(const NodeModel& model, const Dataset& ds,
                                                     const DatasetSplit& split, std::size_t i) {
    std::map<InputRole, DenseArray> out;
    auto fields = ds.sample_fields(split, i);
    for (InputRole role : model.variant.required_roles()) {
        if (fields.count(role)) {
            out.emplace(role, encode(model.encoder, fields.at(role)));
            continue;
        }
        // Constant-coefficient roles not stored as fields.
        if (role == InputRole::Diffusion)
            out.emplace(role, DenseArray(Shape{model.encoder.d_v()}, ds.diffusion_const));
        else if (role == InputRole::Reaction)
            out.emplace(role, DenseArray(Shape{model.encoder.d_v()}, ds.reaction));
        else if (role == InputRole::Initial)
            out.emplace(role, DenseArray(Shape{model.encoder.d_v()}, 0.0));
        else
            raise(Error::MissingInput, std::string("dataset lacks required input ") +
                                           input_role_name(role));
    }
    return out;
}

inline TrainingBatch make_training_batch(const NodeModel& model, const Dataset& ds) {
    TrainingBatch batch;
    batch.horizon = ds.horizon;
    batch.label_times = ds.train.times;
    batch.label_points = ds.train.points;
    for (std::size_t i = 0; i < ds.train.samples.size(); ++i) {
        TrainSample s;
        s.encoded = encode_sample(model, ds, ds.train, i);
        s.labels = ds.train.samples[i].labels;
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

struct Checkpoint {
    NodeModel model;
    AdamState adam;
    std::size_t epoch = 0;
    std::uint64_t rng_seed = 0;
    std::vector<HistoryRow> history;
    nlohmann::json config_echo;
};

inline Container checkpoint_to_container(Checkpoint& ck) {
    using namespace experiment_detail;
    Container c;
    c.meta["kind"] = "checkpoint";
    c.meta["variant"] = variant_to_string(ck.model.variant.kind);
    c.meta["P"] = ck.model.variant.terms;
    c.meta["poly_degree"] = ck.model.variant.poly_degree;
    c.meta["poly_zero_constant"] = ck.model.variant.poly_zero_constant;
    c.meta["d_U"] = ck.model.variant.d_u;
    c.meta["d_V"] = ck.model.variant.d_v;
    c.meta["activation"] = ck.model.variant.activation == Activation::Relu ? "relu" : "tanh";
    c.meta["decoder_kind"] = decoder_kind_to_string(ck.model.decoder_spec.kind);
    c.meta["decoder_hidden"] = ck.model.decoder_spec.hidden;
    c.meta["decoder_input_dim"] = ck.model.decoder_spec.input_dim;
    c.meta["encoder_dim"] = ck.model.encoder.dim;
    c.meta["encoder_grid"] =
        ck.model.encoder.dim == 2
            ? static_cast<std::size_t>(std::llround(std::sqrt(double(ck.model.encoder.d_v()))))
            : ck.model.encoder.d_v();
    c.meta["train_horizon"] = ck.model.train_horizon;
    c.meta["train_steps"] = ck.model.train_steps;
    c.meta["epoch"] = ck.epoch;
    c.meta["rng_seed"] = ck.rng_seed;
    c.meta["adam_step"] = ck.adam.step;
    c.meta["config"] = ck.config_echo;

    auto refs = flatten_params(ck.model);
    for (std::size_t p = 0; p < refs.size(); ++p) {
        c.arrays.emplace("param." + refs[p].name, *refs[p].value);
        if (p < ck.adam.m.size()) {
            c.arrays.emplace("adam.m." + refs[p].name, ck.adam.m[p]);
            c.arrays.emplace("adam.v." + refs[p].name, ck.adam.v[p]);
        }
    }
    if (!ck.history.empty()) {
        DenseArray h(Shape{ck.history.size(), 4});
        for (std::size_t r = 0; r < ck.history.size(); ++r) {
            h.at2(r, 0) = static_cast<double>(ck.history[r].epoch);
            h.at2(r, 1) = ck.history[r].data_term;
            h.at2(r, 2) = ck.history[r].reg_term;
            h.at2(r, 3) = ck.history[r].total;
        }
        c.arrays.emplace("history", h);
    }
    return c;
}

inline Checkpoint checkpoint_from_container(const Container& c) {
    using namespace experiment_detail;
    require(c.meta.value("kind", "") == "checkpoint", Error::Validation,
            "container is not a checkpoint");
    Checkpoint ck;
    NodeVariant var;
    var.kind = variant_from_string(c.meta.at("variant").get<std::string>());
    var.terms = c.meta.at("P").get<std::size_t>();
    var.poly_degree = c.meta.at("poly_degree").get<std::size_t>();
    var.poly_zero_constant = c.meta.at("poly_zero_constant").get<bool>();
    var.d_u = c.meta.at("d_U").get<std::size_t>();
    var.d_v = c.meta.at("d_V").get<std::size_t>();
    var.activation = c.meta.at("activation").get<std::string>() == "relu" ? Activation::Relu
                                                                          : Activation::Tanh;
    ck.model.variant = var;
    ck.model.params = NodeParams::zeros(var);

    ck.model.decoder_spec.kind = decoder_kind_from_string(c.meta.at("decoder_kind").get<std::string>());
    ck.model.decoder_spec.d_u = var.d_u;
    ck.model.decoder_spec.hidden = c.meta.at("decoder_hidden").get<std::vector<std::size_t>>();
    ck.model.decoder_spec.input_dim = c.meta.at("decoder_input_dim").get<int>();
    ck.model.decoder_spec.finalize();
    if (ck.model.decoder_spec.trainable()) {
        const auto sizes = ck.model.decoder_spec.layer_sizes();
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            ck.model.decoder.weights.emplace_back(Shape{sizes[l + 1], sizes[l]});
            ck.model.decoder.biases.emplace_back(Shape{sizes[l + 1]});
        }
    }
    const int enc_dim = c.meta.at("encoder_dim").get<int>();
    const std::size_t enc_grid = c.meta.at("encoder_grid").get<std::size_t>();
    ck.model.encoder = enc_dim == 2 ? SensorEncoder::grid_2d(enc_grid)
                                    : SensorEncoder::uniform_1d(enc_grid);
    ck.model.train_horizon = c.meta.at("train_horizon").get<double>();
    ck.model.train_steps = c.meta.at("train_steps").get<std::size_t>();
    ck.epoch = c.meta.at("epoch").get<std::size_t>();
    ck.rng_seed = c.meta.at("rng_seed").get<std::uint64_t>();
    ck.config_echo = c.meta.value("config", nlohmann::json::object());

    auto refs = flatten_params(ck.model);
    ck.adam = AdamState::like(refs);
    ck.adam.step = c.meta.at("adam_step").get<std::size_t>();
    for (std::size_t p = 0; p < refs.size(); ++p) {
        const DenseArray& v = c.arrays.at("param." + refs[p].name);
        require(v.shape() == refs[p].value->shape(), Error::Validation,
                "checkpoint parameter shape mismatch for " + refs[p].name);
        *refs[p].value = v;
        if (c.arrays.count("adam.m." + refs[p].name)) {
            ck.adam.m[p] = c.arrays.at("adam.m." + refs[p].name);
            ck.adam.v[p] = c.arrays.at("adam.v." + refs[p].name);
        }
    }
    if (c.arrays.count("history")) {
        const DenseArray& h = c.arrays.at("history");
        for (std::size_t r = 0; r < h.shape()[0]; ++r)
            ck.history.push_back(HistoryRow{static_cast<std::size_t>(h.at2(r, 0)), h.at2(r, 1),
                                            h.at2(r, 2), h.at2(r, 3)});
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Evaluation orchestration.
// ---------------------------------------------------------------------------

inline std::vector<std::map<InputRole, EncodedInput>> encode_split(const NodeModel& model,
                                                                   const Dataset& ds,
                                                                   const DatasetSplit& split) {
    std::vector<std::map<InputRole, EncodedInput>> out(split.samples.size());
    for (std::size_t i = 0; i < split.samples.size(); ++i)
        for (auto& [role, v] : encode_sample(model, ds, split, i))
            out[i].emplace(role, EncodedInput::invariant(std::move(v)));
    return out;
}

/// Evaluate a trained model on the dataset's test split at the test
/// resolution (the model re-integrates at the test step count).
inline EvalReport run_standard_eval(const NodeModel& model, const Dataset& ds, bool keep_fields = true) {
    require(!ds.test.samples.empty(), Error::Validation, "dataset has no test split");
    auto inputs = encode_split(model, ds, ds.test);
    std::vector<DenseArray> labels;
    for (const auto& s : ds.test.samples) labels.push_back(s.labels);
    return evaluate_model(model, inputs, labels, ds.test.times, ds.test.points, ds.horizon,
                          ds.test.times.size(), keep_fields);
}

/// Fresh reference labels over [0, t_eval] for one test sample, on the test
/// spatial grid with the dataset's fine-solver settings.
inline DenseArray extended_labels_for_sample(const Dataset& ds, std::size_t i,
                                             const std::vector<double>& times) {
    const auto fields = ds.sample_fields(ds.test, i);
    const std::size_t n_t = times.size(), n_x = ds.test.points.size();
    DenseArray labels(Shape{n_t, n_x});
    const double t_eval = times.back();
    if (!family_is_ns(ds.family)) {
        DiffusionReactionProblem p;
        p.horizon = t_eval;
        p.reaction = ds.reaction;
        if (fields.count(InputRole::Diffusion)) {
            const Field dfield = fields.at(InputRole::Diffusion);
            p.diffusion = [dfield](double x) { return dfield.value_at(x); };
        } else {
            const double d0 = ds.diffusion_const;
            p.diffusion = [d0](double) { return d0; };
        }
        const Field src = fields.at(InputRole::Source);
        p.source = [src](double, double x) { return src.value_at(x); };
        p.source_time_invariant = true;
        std::vector<double> xs;
        for (const auto& pt : ds.test.points) xs.push_back(pt[0]);
        // Same dt as generation so the [0, T] prefix reproduces the stored
        // labels bitwise.
        const std::size_t steps = static_cast<std::size_t>(
            std::llround(static_cast<double>(ds.fine_nt) * t_eval / ds.horizon));
        auto snap = solve_diffusion_reaction(p, ds.fine_nx, steps, times, xs);
        for (std::size_t k = 0; k < n_t; ++k)
            for (std::size_t j = 0; j < n_x; ++j) labels.at2(k, j) = snap.values[k][j];
    } else {
        NavierStokesProblem p;
        p.nu = ds.nu;
        p.horizon = t_eval;
        p.initial_vorticity = fields.count(InputRole::Initial) ? fields.at(InputRole::Initial)
                                                               : ds.shared.at(InputRole::Initial);
        p.forcing = fields.count(InputRole::Source) ? fields.at(InputRole::Source)
                                                    : ds.shared.at(InputRole::Source);
        NavierStokesSolver solver(ds.grid_n);
        auto snap = solver.solve(p, ds.ns_dt, times);
        for (std::size_t k = 0; k < n_t; ++k) {
            Field full;
            full.dim = 2;
            full.n2 = ds.grid_n;
            full.values = snap.values[k];
            Field coarse = restrict_2d(full, ds.label_grid_n);
            for (std::size_t j = 0; j < n_x; ++j) labels.at2(k, j) = coarse.values[j];
        }
    }
    return labels;
}

/// Beyond-horizon evaluation against freshly solved references on [0, t_max].
inline EvalReport run_extrapolation_eval(const NodeModel& model, const Dataset& ds, double t_max,
                                         std::size_t threads = 1, bool keep_fields = true) {
    require(t_max >= ds.horizon, Error::Validation, "t-max must reach the training horizon");
    const std::size_t n_t_test = ds.test.times.size();
    const double spacing = ds.horizon / static_cast<double>(n_t_test);
    const std::size_t n_t_ext = static_cast<std::size_t>(std::llround(t_max / spacing));
    std::vector<double> times(n_t_ext);
    for (std::size_t k = 0; k < n_t_ext; ++k) times[k] = static_cast<double>(k + 1) * spacing;

    auto inputs = encode_split(model, ds, ds.test);
    std::vector<DenseArray> labels(ds.test.samples.size());
    parallel_for(ds.test.samples.size(), threads,
                 [&](std::size_t i) { labels[i] = extended_labels_for_sample(ds, i, times); });
    const double t_eval = times.back();
    return evaluate_extrapolation(model, inputs, labels, times, ds.test.points, t_eval, n_t_ext,
                                  keep_fields);
}

// ---------------------------------------------------------------------------
// Report JSON.
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& rep, bool with_timings = false,
                                     bool with_fields = true,
                                     const std::vector<std::vector<double>>* points = nullptr) {
    nlohmann::json j;
    j["absolute_error"] = rep.absolute_error;
    j["relative_error"] = rep.relative_error;
    j["n_samples"] = rep.n_samples;
    j["n_x"] = rep.n_x;
    j["n_t"] = rep.n_t;
    j["times"] = rep.times;
    j["slice_absolute"] = rep.slice_absolute;
    j["slice_relative"] = rep.slice_relative;
    j["train_horizon"] = rep.train_horizon;
    j["within_count"] = rep.within_count;
    j["within"] = {{"absolute_error", rep.within_absolute}, {"relative_error", rep.within_relative}};
    if (rep.within_count < rep.n_t)
        j["beyond"] = {{"absolute_error", rep.beyond_absolute}, {"relative_error", rep.beyond_relative}};
    if (with_timings) j["timings"] = {{"wall_seconds", rep.wall_seconds}};
    if (with_fields && !rep.sample0_pred.empty()) {
        j["fields"] = {{"truth", rep.sample0_truth}, {"prediction", rep.sample0_pred}};
        if (points) j["fields"]["points"] = *points;
    }
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport rep;
    rep.absolute_error = j.at("absolute_error").get<double>();
    rep.relative_error = j.at("relative_error").get<double>();
    rep.n_samples = j.at("n_samples").get<std::size_t>();
    rep.n_x = j.at("n_x").get<std::size_t>();
    rep.n_t = j.at("n_t").get<std::size_t>();
    rep.times = j.at("times").get<std::vector<double>>();
    rep.slice_absolute = j.at("slice_absolute").get<std::vector<double>>();
    rep.slice_relative = j.at("slice_relative").get<std::vector<double>>();
    rep.train_horizon = j.at("train_horizon").get<double>();
    rep.within_count = j.at("within_count").get<std::size_t>();
    rep.within_absolute = j.at("within").at("absolute_error").get<double>();
    rep.within_relative = j.at("within").at("relative_error").get<double>();
    if (j.contains("beyond")) {
        rep.beyond_absolute = j.at("beyond").at("absolute_error").get<double>();
        rep.beyond_relative = j.at("beyond").at("relative_error").get<double>();
    }
    if (j.contains("fields")) {
        rep.sample0_truth = j.at("fields").at("truth").get<std::vector<double>>();
        rep.sample0_pred = j.at("fields").at("prediction").get<std::vector<double>>();
    }
    return rep;
}

}  // namespace nodeonet
