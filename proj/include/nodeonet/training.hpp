#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nodeonet/model.hpp"
#include "nodeonet/node_variant.hpp"
#include "nodeonet/rng.hpp"
#include "nodeonet/tape.hpp"

namespace nodeonet {

struct TrainConfig {
    std::size_t epochs = 50000;
    double learning_rate = 1e-3;
    std::size_t batch_size = 0;  // 0 = full batch
    double lambda = 0.0;
    enum class Reg { None, L1 } reg_kind = Reg::None;
    std::uint64_t seed = 0;
    bool freeze_decoder = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t log_every = 100;

    void validate() const {
        require(learning_rate > 0.0, Error::Validation, "learning_rate must be positive");
        require(lambda >= 0.0, Error::Validation, "lambda must be non-negative");
    }
};

struct LossBreakdown {
    double data_term = 0.0;
    double reg_term = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// One training sample: encoded inputs (time-invariant, as in all the
/// experiments) and labels on the (N_t x N_x) grid.
struct TrainSample {
    std::map<InputRole, DenseArray> encoded;
    DenseArray labels;  // (N_t x N_x)
};

struct TrainingBatch {
    std::vector<TrainSample> samples;
    std::vector<double> label_times;               // k * T / N_t, k = 1..N_t
    std::vector<std::vector<double>> label_points;
    double horizon = 1.0;

    std::size_t n_t() const noexcept { return label_times.size(); }
    std::size_t n_x() const noexcept { return label_points.size(); }

    void validate_against(const NodeModel& model) const {
        require(!samples.empty(), Error::Validation, "training batch is empty");
        const std::size_t nt = n_t();
        require(nt >= 1, Error::GridMismatch, "batch has no label times");
        const double dt = horizon / static_cast<double>(nt);
        for (std::size_t k = 0; k < nt; ++k)
            require(std::fabs(label_times[k] - static_cast<double>(k + 1) * dt) <=
                        1e-9 * std::max(1.0, horizon),
                    Error::GridMismatch, "label times must be the Euler grid k*T/N_t");
        for (const auto& s : samples) {
            require(s.labels.shape() == Shape{nt, n_x()}, Error::GridMismatch,
                    "label array must be (N_t x N_x)");
            for (InputRole role : model.variant.required_roles())
                require(s.encoded.count(role) == 1, Error::MissingInput,
                        std::string("sample lacks encoded input ") + input_role_name(role));
        }
    }
};

// ---------------------------------------------------------------------------
// Flat parameter view with deterministic order and names; ParamId is the
// index into this view.
// ---------------------------------------------------------------------------

struct ParamRef {
    std::string name;
    DenseArray* value = nullptr;
    bool decoder = false;
};

inline std::vector<ParamRef> flatten_params(NodeModel& model) {
    std::vector<ParamRef> refs;
    const NodeVariant& var = model.variant;
    auto push = [&](std::string name, DenseArray& v, bool dec = false) {
        refs.push_back(ParamRef{std::move(name), &v, dec});
    };
    for (std::size_t i = 0; i < var.terms; ++i) {
        const std::string si = std::to_string(i);
        push("node.W." + si, model.params.w[i]);
        if (var.uses_v()) push("node.V." + si, model.params.v[i]);
        push("node.A." + si, model.params.a[i]);
        push("node.B." + si, model.params.b[i]);
        if (var.uses_cd()) {
            push("node.C." + si, model.params.c[i]);
            push("node.D." + si, model.params.d[i]);
        }
        for (std::size_t j = var.poly_zero_constant ? 1 : 0; j <= var.poly_degree; ++j)
            push("node.poly." + si + "." + std::to_string(j), model.params.poly[i][j]);
    }
    if (var.uses_p_d()) push("mat.P_D", model.params.p_d);
    if (var.uses_p_r()) push("mat.P_r", model.params.p_r);
    push("mat.P_f", model.params.p_f);
    if (var.uses_p_u()) push("mat.P_u", model.params.p_u);
    if (model.decoder_spec.trainable()) {
        for (std::size_t l = 0; l < model.decoder.weights.size(); ++l) {
            push("dec.w." + std::to_string(l), model.decoder.weights[l], true);
            push("dec.b." + std::to_string(l), model.decoder.biases[l], true);
        }
    }
    return refs;
}

// ---------------------------------------------------------------------------
// ADAM with bias correction.
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<DenseArray> m;
    std::vector<DenseArray> v;
    std::size_t step = 0;

    static AdamState like(const std::vector<ParamRef>& refs) {
        AdamState s;
        for (const auto& r : refs) {
            s.m.emplace_back(r.value->shape());
            s.v.emplace_back(r.value->shape());
        }
        return s;
    }
};

/// One ADAM update over the trainable subset; frozen entries keep their
/// values and zero moments.
inline void adam_step(std::vector<ParamRef>& refs, const std::vector<char>& trainable,
                      const std::vector<DenseArray>& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < refs.size(); ++p) {
        if (!trainable[p]) continue;
        DenseArray& theta = *refs[p].value;
        DenseArray& m = state.m[p];
        DenseArray& v = state.v[p];
        const DenseArray& g = grads[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization: uniform fan-in scaling, one deterministic draw order.
// ---------------------------------------------------------------------------

inline NodeModel init_params(const NodeVariant& variant, const DecoderSpec& decoder_spec,
                             std::uint64_t seed) {
    NodeModel model;
    model.variant = variant;
    model.variant.validate();
    model.decoder_spec = decoder_spec;
    model.decoder_spec.finalize();
    model.params = NodeParams::zeros(variant);

    RngState rng(seed);
    auto fill_uniform = [&rng](DenseArray& a, double bound) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
    };

    const double vec_bound = 1.0 / std::sqrt(static_cast<double>(variant.d_u));
    const double mat_bound = 1.0 / std::sqrt(static_cast<double>(variant.d_v));
    for (std::size_t i = 0; i < variant.terms; ++i) {
        fill_uniform(model.params.w[i], vec_bound);
        if (variant.uses_v()) fill_uniform(model.params.v[i], vec_bound);
        fill_uniform(model.params.a[i], vec_bound);
        fill_uniform(model.params.b[i], vec_bound);
        if (variant.uses_cd()) {
            fill_uniform(model.params.c[i], vec_bound);
            fill_uniform(model.params.d[i], vec_bound);
        }
        for (std::size_t j = variant.poly_zero_constant ? 1 : 0; j <= variant.poly_degree; ++j)
            fill_uniform(model.params.poly[i][j], vec_bound);
    }
    if (variant.uses_p_d()) fill_uniform(model.params.p_d, mat_bound);
    if (variant.uses_p_r()) fill_uniform(model.params.p_r, mat_bound);
    fill_uniform(model.params.p_f, mat_bound);
    if (variant.uses_p_u()) fill_uniform(model.params.p_u, mat_bound);

    if (model.decoder_spec.trainable()) {
        const auto sizes = model.decoder_spec.layer_sizes();
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
            DenseArray w(Shape{sizes[l + 1], sizes[l]});
            DenseArray b(Shape{sizes[l + 1]});
            fill_uniform(w, bound);
            fill_uniform(b, bound);
            model.decoder.weights.push_back(std::move(w));
            model.decoder.biases.push_back(std::move(b));
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// The epoch engine. The decoder network is recorded once on its own tape and
// shared across samples; each sample owns a persistent tape holding its
// unrolled Euler graph and squared-error reduction. Backward runs per sample
// seeded with the loss weight, adjoints meet at the basis-matrix cut node,
// and the decoder tape finishes the chain. Gradient reduction follows sample
// order, so results are independent of everything but the batch itself.
// ---------------------------------------------------------------------------

class Trainer {
public:
    Trainer(NodeModel& model, const TrainingBatch& batch, const TrainConfig& config)
        : model_(model), batch_(batch), config_(config) {
        config_.validate();
        batch_.validate_against(model_);
        refs_ = flatten_params(model_);
        trainable_.resize(refs_.size());
        for (std::size_t p = 0; p < refs_.size(); ++p)
            trainable_[p] = refs_[p].decoder ? !config_.freeze_decoder : 1;

        // Gradient buffers exist before any tape binds to them.
        for (const auto& r : refs_) grads_.emplace_back(r.value->shape());
        amat_value_ = DenseArray(Shape{batch_.n_x(), model_.variant.d_u});
        amat_adj_ = DenseArray(Shape{batch_.n_x(), model_.variant.d_u});

        decoder_live_ = model_.decoder_spec.trainable() && !config_.freeze_decoder;
        build_decoder_stage();
        build_reg_stage();
        build_sample_graph();

        adam_ = AdamState::like(refs_);
    }

    const std::vector<ParamRef>& params() const noexcept { return refs_; }
    const std::vector<char>& trainable_mask() const noexcept { return trainable_; }
    AdamState& adam_state() noexcept { return adam_; }

    /// Loss and exact gradients of the current parameters over `sample_ids`
    /// scaled as in the full objective with `n_batch` samples.
    LossBreakdown loss_and_gradients(const std::vector<std::size_t>& sample_ids) {
        for (auto& g : grads_) g.fill(0.0);
        amat_adj_.fill(0.0);

        refresh_decoder_stage();
        const double weight = 1.0 / (static_cast<double>(sample_ids.size()) *
                                     static_cast<double>(batch_.n_x()) *
                                     static_cast<double>(batch_.n_t()));

        // One shared unrolled graph serves every sample: its data leaves are
        // repointed at the sample's encoded inputs and label rows, parameter
        // leaves read the live arrays, and leaf adjoints accumulate straight
        // into the gradient buffers, sample by sample in index order.
        double sse_total = 0.0;
        for (std::size_t idx : sample_ids) {
            for (const auto& b : bindings_[idx]) sample_tape_.rebind_leaf(b.node, b.data);
            sample_tape_.forward_all();
            sse_total += sample_tape_.scalar_value(sse_node_);
            if (track_kinks_)
                min_kink_ = std::min(min_kink_, sample_tape_.min_distance_to_relu_kink());
            sample_tape_.seed_scalar(sse_node_, weight);
            sample_tape_.run_backward();
        }

        LossBreakdown out;
        out.data_term = sse_total * weight;
        out.lambda = config_.lambda;

        if (reg_active()) {
            reg_tape_.forward_all();
            out.reg_term = reg_tape_.scalar_value(reg_node_);
            if (config_.lambda > 0.0) {
                reg_tape_.seed_scalar(reg_node_, config_.lambda);
                reg_tape_.run_backward();
            }
        }

        if (decoder_live_) {
            dec_tape_.seed_adjoint(amat_node_, amat_adj_.data(), amat_adj_.size());
            dec_tape_.run_backward();
        }

        out.total = out.data_term + config_.lambda * out.reg_term;
        return out;
    }

    LossBreakdown loss_and_gradients() {
        std::vector<std::size_t> all(batch_.samples.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return loss_and_gradients(all);
    }

    const std::vector<DenseArray>& gradients() const noexcept { return grads_; }

    void apply_adam() { adam_step(refs_, trainable_, grads_, adam_, config_); }

    /// Smallest |relu pre-activation| seen across samples since tracking was
    /// enabled; keeps finite-difference checks away from the kinks.
    void enable_kink_tracking() { track_kinks_ = true; }
    double min_relu_kink_distance() const {
        double best = min_kink_;
        if (decoder_live_) best = std::min(best, dec_tape_.min_distance_to_relu_kink());
        return best;
    }

    /// One full pass over the batch: one ADAM step per (mini-)batch chunk.
    LossBreakdown epoch() {
        const std::size_t n = batch_.samples.size();
        const std::size_t chunk = config_.batch_size == 0 ? n : std::min(config_.batch_size, n);
        double data_acc = 0.0;
        LossBreakdown last;
        std::size_t covered = 0;
        for (std::size_t start = 0; start < n; start += chunk) {
            std::vector<std::size_t> ids;
            for (std::size_t i = start; i < std::min(start + chunk, n); ++i) ids.push_back(i);
            last = loss_and_gradients(ids);
            apply_adam();
            data_acc += last.data_term * static_cast<double>(ids.size());
            covered += ids.size();
        }
        LossBreakdown out = last;
        out.data_term = data_acc / static_cast<double>(covered);
        out.total = out.data_term + out.lambda * out.reg_term;
        return out;
    }

private:
    bool reg_active() const noexcept { return config_.reg_kind == TrainConfig::Reg::L1; }

    void build_decoder_stage() {
        const auto& points = batch_.label_points;
        if (decoder_live_) {
            std::vector<NodeId> wn, bn;
            for (std::size_t p = 0; p < refs_.size(); ++p) {
                if (!refs_[p].decoder) continue;
                NodeId node = dec_tape_.bound_leaf(*refs_[p].value, grads_[p].data());
                if (refs_[p].name.find("dec.w.") == 0)
                    wn.push_back(node);
                else
                    bn.push_back(node);
            }
            amat_node_ = record_basis_matrix(dec_tape_, model_.decoder_spec, wn, bn, points);
            std::memcpy(amat_value_.data(), dec_tape_.value(amat_node_),
                        amat_value_.size() * sizeof(double));
        } else {
            amat_value_ = basis_matrix(model_.decoder_spec, model_.decoder, points);
        }
    }

    void refresh_decoder_stage() {
        if (!decoder_live_) return;
        dec_tape_.forward_all();
        std::memcpy(amat_value_.data(), dec_tape_.value(amat_node_),
                    amat_value_.size() * sizeof(double));
    }

    void build_reg_stage() {
        if (!reg_active()) return;
        // R(theta) = sum |theta| over the trainable parameters.
        NodeId acc = kNoNode;
        for (std::size_t p = 0; p < refs_.size(); ++p) {
            if (!trainable_[p]) continue;
            NodeId leaf = reg_tape_.bound_leaf(*refs_[p].value, grads_[p].data());
            NodeId term = reg_tape_.sum(reg_tape_.abs_(leaf));
            acc = acc == kNoNode ? term : reg_tape_.add(acc, term);
        }
        reg_node_ = acc;
    }

    void build_sample_graph() {
        Tape& t = sample_tape_;
        const NodeVariant& var = model_.variant;

        VariantProgram<TapeExec> prog;
        std::map<std::string, std::size_t> index;
        for (std::size_t p = 0; p < refs_.size(); ++p) index.emplace(refs_[p].name, p);
        auto leaf_for = [&](const std::string& name) -> NodeId {
            auto it = index.find(name);
            require(it != index.end(), Error::Validation, "unknown parameter " + name);
            const std::size_t p = it->second;
            return t.bound_leaf(*refs_[p].value, grads_[p].data());
        };
        for (std::size_t i = 0; i < var.terms; ++i) {
            const std::string si = std::to_string(i);
            prog.w.push_back(leaf_for("node.W." + si));
            if (var.uses_v()) prog.v.push_back(leaf_for("node.V." + si));
            prog.a.push_back(leaf_for("node.A." + si));
            prog.b.push_back(leaf_for("node.B." + si));
            if (var.uses_cd()) {
                prog.c.push_back(leaf_for("node.C." + si));
                prog.d.push_back(leaf_for("node.D." + si));
            }
            std::vector<NodeId> coeffs(var.poly_degree + 1, kNoNode);
            for (std::size_t j = 0; j <= var.poly_degree; ++j) {
                if (var.poly_zero_constant && j == 0)
                    coeffs[j] = t.leaf(model_.params.poly[i][j]);  // pinned zero vector
                else
                    coeffs[j] = leaf_for("node.poly." + si + "." + std::to_string(j));
            }
            prog.poly.push_back(std::move(coeffs));
        }
        if (var.uses_p_d()) prog.p_d = leaf_for("mat.P_D");
        if (var.uses_p_r()) prog.p_r = leaf_for("mat.P_r");
        prog.p_f = leaf_for("mat.P_f");
        if (var.uses_p_u()) prog.p_u = leaf_for("mat.P_u");

        // Record with sample 0's storage; per-sample rebinding swaps the data.
        const TrainSample& first = batch_.samples.front();
        std::vector<std::pair<InputRole, NodeId>> role_leaves;
        std::map<InputRole, EncodedSeq<NodeId>> seqs;
        for (InputRole role : var.required_roles()) {
            if (role == InputRole::Initial) continue;
            EncodedSeq<NodeId> seq;
            NodeId leaf = t.bound_leaf(first.encoded.at(role));
            role_leaves.emplace_back(role, leaf);
            seq.per_step.push_back(leaf);
            seqs.emplace(role, std::move(seq));
        }

        TapeExec ex{&t};
        NodeId psi0;
        if (var.uses_p_u()) {
            NodeId u0_leaf = t.bound_leaf(first.encoded.at(InputRole::Initial));
            role_leaves.emplace_back(InputRole::Initial, u0_leaf);
            psi0 = t.matvec(prog.p_u, u0_leaf);
        } else {
            psi0 = t.leaf(DenseArray(Shape{var.d_u}, 0.0));
        }

        auto states = recipe::euler(ex, var, prog, psi0, seqs, batch_.horizon, batch_.n_t());

        const std::size_t n_x = batch_.n_x();
        NodeId amat_leaf = t.bound_leaf(amat_value_, amat_adj_.data());
        std::vector<NodeId> label_leaves;
        NodeId sse = kNoNode;
        for (std::size_t k = 0; k < batch_.n_t(); ++k) {
            // label row k is contiguous in the (N_t x N_x) sample array
            DenseArray row_view(Shape{n_x});
            std::memcpy(row_view.data(), first.labels.data() + k * n_x, n_x * sizeof(double));
            NodeId label = t.bound_leaf(row_view);  // rebound below; row_view is a shape donor
            label_leaves.push_back(label);
            NodeId pred = t.matvec(amat_leaf, states[k + 1]);
            NodeId diff = t.sub(pred, label);
            NodeId term = t.sum(t.square(diff));
            sse = sse == kNoNode ? term : t.add(sse, term);
        }
        sse_node_ = sse;

        bindings_.resize(batch_.samples.size());
        for (std::size_t i = 0; i < batch_.samples.size(); ++i) {
            const TrainSample& sample = batch_.samples[i];
            for (auto [role, node] : role_leaves)
                bindings_[i].push_back(LeafBinding{node, sample.encoded.at(role).data()});
            for (std::size_t k = 0; k < batch_.n_t(); ++k)
                bindings_[i].push_back(LeafBinding{label_leaves[k], sample.labels.data() + k * n_x});
        }
    }

    struct LeafBinding {
        NodeId node;
        const double* data;
    };

    NodeModel& model_;
    const TrainingBatch& batch_;
    TrainConfig config_;

    std::vector<ParamRef> refs_;
    std::vector<char> trainable_;
    std::vector<DenseArray> grads_;
    AdamState adam_;

    bool decoder_live_ = false;
    Tape dec_tape_;
    NodeId amat_node_ = kNoNode;
    DenseArray amat_value_;

    Tape reg_tape_;
    NodeId reg_node_ = kNoNode;

    Tape sample_tape_;
    NodeId sse_node_ = kNoNode;
    std::vector<std::vector<LeafBinding>> bindings_;
    DenseArray amat_adj_;
    bool track_kinks_ = false;
    double min_kink_ = 1e300;
};

/// Loss of the current parameters on a batch, recorded through the staged
/// tapes (no parameter update).
inline LossBreakdown loss(NodeModel& model, const TrainingBatch& batch, const TrainConfig& config) {
    Trainer trainer(model, batch, config);
    return trainer.loss_and_gradients();
}

struct HistoryRow {
    std::size_t epoch;
    double data_term;
    double reg_term;
    double total;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    LossBreakdown final_loss;
    std::size_t epochs_run = 0;
};

/// Full-batch (or chunked) ADAM descent for config.epochs. The decoder is
/// bitwise untouched when freeze_decoder is set.
inline TrainResult train(NodeModel& model, const TrainingBatch& batch, const TrainConfig& config,
                         Trainer* external_trainer = nullptr) {
    TrainResult result;
    if (config.epochs == 0) {
        if (!batch.samples.empty()) result.final_loss = loss(model, batch, config);
        return result;
    }
    std::optional<Trainer> local;
    if (!external_trainer) local.emplace(model, batch, config);
    Trainer& trainer = external_trainer ? *external_trainer : *local;
    for (std::size_t e = 1; e <= config.epochs; ++e) {
        LossBreakdown lb;
        try {
            lb = trainer.epoch();
        } catch (const NodeOnetError& err) {
            if (err.code() == Error::NonFinite || err.code() == Error::Diverged)
                raise(Error::Diverged, "training diverged at epoch " + std::to_string(e));
            throw;
        }
        if (!std::isfinite(lb.total))
            raise(Error::Diverged, "training diverged at epoch " + std::to_string(e));
        if (e % std::max<std::size_t>(config.log_every, 1) == 0 || e == config.epochs)
            result.history.push_back(HistoryRow{e, lb.data_term, lb.reg_term, lb.total});
        result.final_loss = lb;
        result.epochs_run = e;
    }
    return result;
}

}  // namespace nodeonet
