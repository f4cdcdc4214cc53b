// nodeonet: data generation, training, evaluation, and diagnostics for the
// NODE-ONet operator-learning pipeline.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "nodeonet/consistency.hpp"
#include "nodeonet/experiment.hpp"

using namespace nodeonet;

namespace {

int to_exit_code(const NodeOnetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_usage() ? 2 : 3;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Io, "cannot open " + path + " for writing");
    out << text;
    require(out.good(), Error::Io, "short write to " + path);
}

std::string format_row(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

nlohmann::json loss_json(const LossBreakdown& lb) {
    return nlohmann::json{{"data_term", lb.data_term},
                          {"reg_term", lb.reg_term},
                          {"lambda", lb.lambda},
                          {"total", lb.total}};
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
    std::string csv = "epoch,data_term,reg_term,total\n";
    for (const auto& r : rows)
        csv += std::to_string(r.epoch) + "," + format_row(r.data_term) + "," +
               format_row(r.reg_term) + "," + format_row(r.total) + "\n";
    return csv;
}

// ---- gen-data --------------------------------------------------------------

struct GenDataArgs {
    std::string problem;
    BuildOptions opt;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& args) {
    try {
        ProblemFamily family = family_from_name(args.problem);
        Dataset ds = build_dataset(family, args.opt);
        write_container(args.out, dataset_to_container(ds));
        nlohmann::json summary{{"family", family_name(family)},
                               {"n_train", ds.train.samples.size()},
                               {"n_test", ds.test.samples.size()},
                               {"horizon", ds.horizon},
                               {"out", args.out}};
        std::cout << summary.dump() << "\n";
        return 0;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string resume;
    std::string history;
    std::string init_decoder_from;
};

int cmd_train(const TrainArgs& args) {
    try {
        Dataset ds = dataset_from_container(read_container(args.data));
        ExperimentConfig cfg = load_experiment_config(args.config);

        Checkpoint ck;
        std::size_t start_epoch = 0;
        if (!args.resume.empty()) {
            ck = checkpoint_from_container(read_container(args.resume));
            start_epoch = ck.epoch;
            require(start_epoch <= cfg.train.epochs, Error::Validation,
                    "resume checkpoint is already past the configured epochs");
        } else {
            ck.model = build_model(cfg, ds);
            ck.adam = AdamState::like(flatten_params(ck.model));
            if (!args.init_decoder_from.empty()) {
                Checkpoint donor = checkpoint_from_container(read_container(args.init_decoder_from));
                require(donor.model.decoder_spec.kind == ck.model.decoder_spec.kind &&
                            donor.model.decoder_spec.hidden == ck.model.decoder_spec.hidden &&
                            donor.model.decoder_spec.d_u == ck.model.decoder_spec.d_u,
                        Error::Validation, "donor decoder architecture does not match the config");
                ck.model.decoder = donor.model.decoder;
            }
        }
        ck.rng_seed = cfg.train.seed;
        {
            std::ifstream in(args.config);
            in >> ck.config_echo;
        }

        TrainingBatch batch = make_training_batch(ck.model, ds);
        LossBreakdown final_loss;
        if (cfg.train.epochs == 0) {
            Trainer trainer(ck.model, batch, cfg.train);
            final_loss = trainer.loss_and_gradients();
        } else if (cfg.train.epochs > start_epoch) {
            Trainer trainer(ck.model, batch, cfg.train);
            trainer.adam_state() = ck.adam;
            for (std::size_t e = start_epoch + 1; e <= cfg.train.epochs; ++e) {
                LossBreakdown lb;
                try {
                    lb = trainer.epoch();
                } catch (const NodeOnetError& err) {
                    if (err.code() == Error::NonFinite || err.code() == Error::Diverged)
                        raise(Error::Diverged, "training diverged at epoch " + std::to_string(e));
                    throw;
                }
                if (e % std::max<std::size_t>(cfg.train.log_every, 1) == 0 || e == cfg.train.epochs)
                    ck.history.push_back(HistoryRow{e, lb.data_term, lb.reg_term, lb.total});
            }
            // Printed loss reflects the parameters actually saved.
            final_loss = trainer.loss_and_gradients();
            ck.adam = trainer.adam_state();
        }
        ck.epoch = cfg.train.epochs;

        write_container(args.out, checkpoint_to_container(ck));
        if (!args.history.empty()) write_text(args.history, history_csv(ck.history));
        std::cout << loss_json(final_loss).dump() << "\n";
        return 0;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

// ---- eval / extrapolate ------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string report;
    std::string split = "test";
    bool timings = false;
    bool no_fields = false;
    double t_max = 0.0;  // extrapolate only
    std::size_t threads = 0;
};

int cmd_eval(const EvalArgs& args, bool extrapolate) {
    try {
        Checkpoint ck = checkpoint_from_container(read_container(args.checkpoint));
        Dataset ds = dataset_from_container(read_container(args.data));
        EvalReport rep;
        const std::vector<std::vector<double>>* points = nullptr;
        if (extrapolate) {
            rep = run_extrapolation_eval(ck.model, ds, args.t_max, resolve_threads(args.threads),
                                         !args.no_fields);
            points = &ds.test.points;
        } else if (args.split == "train") {
            auto inputs = encode_split(ck.model, ds, ds.train);
            std::vector<DenseArray> labels;
            for (const auto& s : ds.train.samples) labels.push_back(s.labels);
            rep = evaluate_model(ck.model, inputs, labels, ds.train.times, ds.train.points,
                                 ds.horizon, ds.train.times.size(), !args.no_fields);
            points = &ds.train.points;
        } else {
            require(args.split == "test", Error::Validation, "--split must be train or test");
            rep = run_standard_eval(ck.model, ds, !args.no_fields);
            points = &ds.test.points;
        }
        nlohmann::json j = report_to_json(rep, args.timings, !args.no_fields, points);
        write_text(args.report, j.dump(2) + "\n");
        nlohmann::json summary{{"absolute_error", rep.absolute_error},
                               {"relative_error", rep.relative_error}};
        if (extrapolate) {
            summary["within_relative"] = rep.within_relative;
            summary["beyond_relative"] = rep.beyond_relative;
        }
        std::cout << summary.dump() << "\n";
        return 0;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

// ---- consistency -------------------------------------------------------------

int cmd_consistency(const std::string& klass, double alpha, std::size_t levels,
                    const std::string& report_path) {
    try {
        FunctionClass fc;
        if (klass == "holder")
            fc = FunctionClass::HolderAlpha;
        else if (klass == "c1")
            fc = FunctionClass::C1;
        else if (klass == "c2")
            fc = FunctionClass::C2;
        else
            raise(Error::Validation, "--class must be holder, c1, or c2");
        auto rep = consistency_study(fc, alpha, geometric_levels(levels));
        nlohmann::json j{{"class", klass},     {"alpha", alpha},
                         {"h", rep.h},         {"d1", rep.d1},
                         {"d2", rep.d2},       {"order_d1", rep.order_d1},
                         {"order_d2", rep.order_d2}};
        write_text(report_path, j.dump(2) + "\n");
        std::cout << j.dump() << "\n";
        return 0;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

// ---- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, const std::string& report_path) {
    try {
        auto results = run_gradient_checks(seed);
        nlohmann::json cases = nlohmann::json::array();
        bool all_pass = true;
        double worst = 0.0;
        for (const auto& r : results) {
            cases.push_back({{"case", r.case_name},
                             {"seed", r.seed_used},
                             {"kink_distance", r.kink_distance},
                             {"max_rel_deviation", r.max_rel_deviation},
                             {"pass", r.pass}});
            all_pass = all_pass && r.pass;
            worst = std::max(worst, r.max_rel_deviation);
        }
        nlohmann::json j{{"tolerance", 1e-6}, {"max_rel_deviation", worst}, {"cases", cases},
                         {"pass", all_pass}};
        if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
        std::cout << j.dump() << "\n";
        return all_pass ? 0 : 3;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

// ---- export-plot -----------------------------------------------------------------

int cmd_export_plot(const std::string& report_path, const std::string& format,
                    const std::string& out, double slice_t, bool have_slice) {
    try {
        require(format == "csv", Error::Validation, "unknown format '" + format + "'");
        std::ifstream in(report_path);
        require(in.good(), Error::Io, "cannot open report " + report_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            raise(Error::Io, std::string("report is not valid JSON: ") + e.what());
        }

        if (!have_slice) {
            std::string csv = "t,abs_error,rel_error,training_horizon\n";
            if (j.contains("times")) {
                const auto times = j.at("times").get<std::vector<double>>();
                const auto abs = j.at("slice_absolute").get<std::vector<double>>();
                const auto rel = j.at("slice_relative").get<std::vector<double>>();
                const double horizon = j.value("train_horizon", 0.0);
                for (std::size_t k = 0; k < times.size(); ++k)
                    csv += format_row(times[k]) + "," + format_row(abs[k]) + "," +
                           format_row(rel[k]) + "," +
                           (horizon > 0.0 && times[k] <= horizon * (1 + 1e-12) ? "1" : "0") + "\n";
            }
            write_text(out, csv);
            return 0;
        }

        // Field slice at the requested time.
        std::string csv;
        if (!j.contains("fields") || !j.at("fields").contains("points") || !j.contains("times")) {
            csv = "t,x,truth,prediction,abs_error\n";
            write_text(out, csv);
            return 0;
        }
        const auto times = j.at("times").get<std::vector<double>>();
        std::size_t k_best = 0;
        for (std::size_t k = 1; k < times.size(); ++k)
            if (std::fabs(times[k] - slice_t) < std::fabs(times[k_best] - slice_t)) k_best = k;
        const auto pts = j.at("fields").at("points").get<std::vector<std::vector<double>>>();
        const auto truth = j.at("fields").at("truth").get<std::vector<double>>();
        const auto pred = j.at("fields").at("prediction").get<std::vector<double>>();
        const std::size_t n_x = pts.size();
        const bool two_d = !pts.empty() && pts[0].size() == 2;
        csv = two_d ? "t,x,y,truth,prediction,abs_error\n" : "t,x,truth,prediction,abs_error\n";
        for (std::size_t p = 0; p < n_x; ++p) {
            const double tv = truth.at(k_best * n_x + p);
            const double pv = pred.at(k_best * n_x + p);
            csv += format_row(times[k_best]) + "," + format_row(pts[p][0]);
            if (two_d) csv += "," + format_row(pts[p][1]);
            csv += "," + format_row(tv) + "," + format_row(pv) + "," + format_row(std::fabs(pv - tv)) +
                   "\n";
        }
        write_text(out, csv);
        return 0;
    } catch (const NodeOnetError& e) {
        return to_exit_code(e);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NODE-ONet operator-learning toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    std::size_t gen_threads = 0;
    auto* sc_gen = app.add_subcommand("gen-data", "Generate a training/test dataset");
    sc_gen->add_option("--problem", gen.problem,
                       "dr-source|dr-diffusion|dr-multi|ns-initial|ns-source|ns-multi")
        ->required();
    sc_gen->add_option("--n-train", gen.opt.n_train, "training samples");
    sc_gen->add_option("--n-test", gen.opt.n_test, "test samples");
    sc_gen->add_option("--nx", gen.opt.nx, "training label points (dr) or grid side (ns)");
    sc_gen->add_option("--nt", gen.opt.nt, "training label snapshots");
    sc_gen->add_option("--test-nx", gen.opt.test_nx, "test label points (0 = default)");
    sc_gen->add_option("--test-nt", gen.opt.test_nt, "test label snapshots (0 = default)");
    sc_gen->add_option("--seed", gen.opt.seed, "base RNG seed");
    sc_gen->add_option("--length-scale", gen.opt.length_scale, "GP length scale override");
    double gen_diffusion = -1.0, gen_reaction = -1e300;
    sc_gen->add_option("--diffusion", gen_diffusion, "dr constant diffusion override");
    sc_gen->add_option("--reaction", gen_reaction, "dr reaction coefficient override");
    sc_gen->add_option("--grid-n", gen.opt.grid_n, "ns generation grid side");
    sc_gen->add_option("--t-horizon", gen.opt.horizon, "time horizon override");
    sc_gen->add_option("--threads", gen_threads, "worker threads");
    sc_gen->add_option("--out", gen.out, "output dataset path")->required();

    TrainArgs tr;
    auto* sc_train = app.add_subcommand("train", "Train a NODE-ONet on a dataset");
    sc_train->add_option("--data", tr.data, "dataset file")->required();
    sc_train->add_option("--config", tr.config, "experiment config JSON")->required();
    sc_train->add_option("--out", tr.out, "output checkpoint path")->required();
    sc_train->add_option("--resume", tr.resume, "resume from checkpoint");
    sc_train->add_option("--history", tr.history, "loss history CSV path");
    sc_train->add_option("--init-decoder-from", tr.init_decoder_from,
                         "seed the decoder parameters from another checkpoint");

    EvalArgs ev;
    auto* sc_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    sc_eval->add_option("--checkpoint", ev.checkpoint)->required();
    sc_eval->add_option("--data", ev.data)->required();
    sc_eval->add_option("--report", ev.report, "report JSON path")->required();
    sc_eval->add_option("--split", ev.split, "train|test (default test)");
    sc_eval->add_flag("--timings", ev.timings, "include wall-clock timings in the report");
    sc_eval->add_flag("--no-fields", ev.no_fields, "omit field payloads from the report");
    sc_eval->add_option("--threads", ev.threads);

    EvalArgs ex;
    auto* sc_ext = app.add_subcommand("extrapolate", "Evaluate beyond the training horizon");
    sc_ext->add_option("--checkpoint", ex.checkpoint)->required();
    sc_ext->add_option("--data", ex.data)->required();
    sc_ext->add_option("--t-max", ex.t_max, "evaluation horizon")->required();
    sc_ext->add_option("--report", ex.report, "report JSON path")->required();
    sc_ext->add_flag("--timings", ex.timings);
    sc_ext->add_flag("--no-fields", ex.no_fields);
    sc_ext->add_option("--threads", ex.threads);

    std::string cons_class;
    double cons_alpha = 0.5;
    std::size_t cons_levels = 6;
    std::string cons_report;
    auto* sc_cons = app.add_subcommand("consistency", "Encoder/decoder consistency rate study");
    sc_cons->add_option("--class", cons_class, "holder|c1|c2")->required();
    sc_cons->add_option("--alpha", cons_alpha, "Holder exponent");
    sc_cons->add_option("--levels", cons_levels, "number of geometric mesh levels");
    sc_cons->add_option("--report", cons_report, "report JSON path")->required();

    std::uint64_t gc_seed = 0;
    std::string gc_report;
    auto* sc_gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    sc_gc->add_option("--seed", gc_seed)->required();
    sc_gc->add_option("--report", gc_report, "report JSON path");

    std::string ep_report, ep_format = "csv", ep_out;
    double ep_slice_t = 0.0;
    auto* sc_ep = app.add_subcommand("export-plot", "Emit plot-ready CSV from a report");
    sc_ep->add_option("--report", ep_report)->required();
    sc_ep->add_option("--format", ep_format, "output format (csv)");
    sc_ep->add_option("--out", ep_out)->required();
    auto* slice_opt = sc_ep->add_option("--slice-t", ep_slice_t, "emit a field slice at this time");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    if (sc_gen->parsed()) {
        gen.opt.threads = resolve_threads(gen_threads);
        if (gen_diffusion >= 0.0) gen.opt.diffusion_const = gen_diffusion;
        if (gen_reaction > -1e299) gen.opt.reaction = gen_reaction;
        return cmd_gen_data(gen);
    }
    if (sc_train->parsed()) return cmd_train(tr);
    if (sc_eval->parsed()) return cmd_eval(ev, false);
    if (sc_ext->parsed()) return cmd_eval(ex, true);
    if (sc_cons->parsed()) return cmd_consistency(cons_class, cons_alpha, cons_levels, cons_report);
    if (sc_gc->parsed()) return cmd_gradcheck(gc_seed, gc_report);
    if (sc_ep->parsed()) return cmd_export_plot(ep_report, ep_format, ep_out, ep_slice_t,
                                                slice_opt->count() > 0);
    return 2;
}
