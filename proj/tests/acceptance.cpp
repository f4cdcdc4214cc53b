// Acceptance suite: one pass/fail line per criterion, exit nonzero if any
// criterion fails. Criteria 6-10 drive the CLI end to end and reuse each
// other's artifacts inside ./acceptance_work.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nodeonet/consistency.hpp"
#include "nodeonet/diffusion_reaction.hpp"
#include "nodeonet/gradcheck.hpp"
#include "nodeonet/navier_stokes.hpp"
#include "nodeonet/random_fields.hpp"

using namespace nodeonet;
using nlohmann::json;

namespace {

const std::string cli = NODEONET_CLI_PATH;
const std::string work = "acceptance_work";

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args, std::string* stdout_text = nullptr) {
    const std::string out_path = work + "/last_stdout.txt";
    const std::string cmd = cli + " " + args + " > " + out_path;
    const int rc = std::system(cmd.c_str());
    if (stdout_text) {
        std::ifstream in(out_path);
        std::stringstream ss;
        ss << in.rdbuf();
        *stdout_text = ss.str();
    }
    return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// --------------------------------------------------------------------------
// Criterion 1: loss gradients vs central finite differences for every
// variant and both decoder kinds used in the experiments.
// --------------------------------------------------------------------------
Outcome criterion_1() {
    const auto t0 = Clock::now();
    auto results = run_gradient_checks(7);
    double worst = 0.0;
    bool pass = true;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_deviation);
        pass = pass && r.pass;
    }
    const double secs = elapsed_s(t0);
    pass = pass && secs < 60.0;
    return {pass, std::to_string(results.size()) + " cases, max rel dev " + fmt(worst) +
                      " (tol 1e-6), " + fmt(secs) + "s"};
}

// --------------------------------------------------------------------------
// Criterion 2: 1-D solver spatial order and pure-source exactness.
// --------------------------------------------------------------------------
Outcome criterion_2() {
    const auto t0 = Clock::now();
    constexpr double pi = 3.14159265358979323846;
    auto manufactured_u = [&](double t, double x) {
        return (1.0 - std::exp(-t)) * std::sin(2.0 * pi * x);
    };
    DiffusionReactionProblem p;
    const double d0 = 0.01;
    p.diffusion = [d0](double) { return d0; };
    p.source = [d0, pi](double t, double x) {
        return std::exp(-t) * std::sin(2.0 * pi * x) +
               d0 * 4.0 * pi * pi * (1.0 - std::exp(-t)) * std::sin(2.0 * pi * x);
    };
    p.horizon = 1.0;

    auto eval_x = uniform_grid(201);
    auto error_at = [&](std::size_t nx, std::size_t nt) {
        auto snap = solve_diffusion_reaction(p, nx, nt, {0.5, 1.0}, eval_x);
        double worst = 0.0;
        for (std::size_t k = 0; k < snap.times.size(); ++k)
            for (std::size_t j = 0; j < eval_x.size(); ++j)
                worst = std::max(worst, std::fabs(snap.values[k][j] -
                                                  manufactured_u(snap.times[k], eval_x[j])));
        return worst;
    };
    // dt ~ h^2 so the first-order temporal error refines with the spatial one
    const double e1 = error_at(101, 1000), e2 = error_at(201, 4000), e3 = error_at(401, 16000);
    const double order_a = std::log2(e1 / e2), order_b = std::log2(e2 / e3);

    DiffusionReactionProblem ps;
    ps.diffusion = [](double) { return 0.0; };
    ps.source = [](double, double) { return 1.3; };
    ps.horizon = 1.0;
    auto snap = solve_diffusion_reaction(ps, 101, 1000, {0.25, 1.0}, {0.3, 0.5, 0.9});
    double exact_dev = 0.0;
    for (std::size_t k = 0; k < snap.times.size(); ++k)
        for (double v : snap.values[k])
            exact_dev = std::max(exact_dev, std::fabs(v - 1.3 * snap.times[k]));

    const double secs = elapsed_s(t0);
    const bool pass = order_a >= 1.9 && order_b >= 1.9 && exact_dev <= 1e-12 && secs < 60.0;
    return {pass, "orders " + fmt(order_a) + "/" + fmt(order_b) + " (>=1.9), pure-source dev " +
                      fmt(exact_dev) + " (<=1e-12), " + fmt(secs) + "s"};
}

// --------------------------------------------------------------------------
// Criterion 3: NS single-mode decay, spectral divergence, enstrophy decay.
// --------------------------------------------------------------------------
Outcome criterion_3() {
    const auto t0 = Clock::now();
    constexpr double two_pi = 6.283185307179586476925286766559;
    const std::size_t n = 64;

    NavierStokesProblem p;
    p.nu = 1e-3;
    p.horizon = 1.0;
    p.initial_vorticity =
        Field::from_function_2d(n, [&](double x, double y) { return std::sin(two_pi * (x + y)); });
    auto snap = solve_navier_stokes(p, n, 1e-2, {1.0});
    const double decay = std::exp(-8.0 * 9.869604401089358 * p.nu);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double exact = decay * std::sin(two_pi * (static_cast<double>(i) / n +
                                                            static_cast<double>(j) / n));
            const double got = snap.values[0][i * n + j];
            num += (got - exact) * (got - exact);
            den += exact * exact;
        }
    const double rel = std::sqrt(num / den);

    RngState rng(3);
    Field w = sample_grf_2d({std::pow(7.0, 1.5), 49.0, 2.5, n, true}, rng);
    NavierStokesSolver solver(n);
    auto [v1, v2] = solver.velocity_from_vorticity(w);
    const double div = solver.divergence_max_fourier(v1, v2);

    NavierStokesProblem pf;
    pf.nu = 1e-3;
    pf.horizon = 0.2;
    pf.initial_vorticity = w;
    NsTrace trace;
    solve_navier_stokes(pf, n, 1e-3, {0.2}, &trace);
    bool enstrophy_ok = true;
    for (std::size_t k = 1; k < trace.enstrophy.size(); ++k)
        enstrophy_ok = enstrophy_ok && trace.enstrophy[k] <= trace.enstrophy[k - 1] + 1e-10;

    const double secs = elapsed_s(t0);
    const bool pass = rel <= 1e-3 && div <= 1e-12 && enstrophy_ok && secs < 120.0;
    return {pass, "decay rel err " + fmt(rel) + " (<=1e-3), div " + fmt(div) +
                      " (<=1e-12), enstrophy " + (enstrophy_ok ? "monotone" : "NOT monotone") +
                      ", " + fmt(secs) + "s"};
}

// --------------------------------------------------------------------------
// Criterion 4: FemP1 pseudo-inverse identities and encoder linearity.
// --------------------------------------------------------------------------
Outcome criterion_4() {
    SensorEncoder enc = SensorEncoder::uniform_1d(17);
    DecoderSpec dec;
    dec.kind = DecoderKind::FemP1;
    dec.d_u = 17;
    dec.nodes = enc.xs;
    dec.finalize();
    auto rep = pseudo_inverse_check(enc, dec);

    RngState rng(5);
    Field v = sample_gp_1d(RbfKernelSpec{0.3, 1.0}, uniform_grid(401), rng);
    Field w = sample_gp_1d(RbfKernelSpec{0.3, 1.0}, uniform_grid(401), rng);
    Field combo = v;
    const double a = 1.3, b = -0.7;
    for (std::size_t i = 0; i < combo.values.size(); ++i)
        combo.values[i] = a * v.values[i] + b * w.values[i];
    DenseArray ev = encode(enc, v), ew = encode(enc, w), ec = encode(enc, combo);
    double lin_dev = 0.0;
    for (std::size_t l = 0; l < enc.d_v(); ++l)
        lin_dev = std::max(lin_dev, std::fabs(ec[l] - (a * ev[l] + b * ew[l])));

    const bool pass = rep.ok() && lin_dev <= 1e-12;
    return {pass, "alpha_i(x_j) dev " + fmt(rep.max_identity_err) + ", DoEoD dev " +
                      fmt(rep.max_dod_err) + ", linearity dev " + fmt(lin_dev) + " (all <=1e-12)"};
}

// --------------------------------------------------------------------------
// Criterion 5: consistency rates over 6 geometric mesh levels.
// --------------------------------------------------------------------------
Outcome criterion_5() {
    const auto t0 = Clock::now();
    auto holder = consistency_study(FunctionClass::HolderAlpha, 0.5, geometric_levels(6));
    auto smooth = consistency_study(FunctionClass::C1, 0.0, geometric_levels(6));
    const double secs = elapsed_s(t0);
    const bool pass = holder.order_d1 >= 0.35 && holder.order_d1 <= 0.65 &&
                      smooth.order_d2 >= 0.9 && secs < 60.0;
    return {pass, "holder(0.5) order " + fmt(holder.order_d1) + " (0.5 +/- 0.15), C1 d2 order " +
                      fmt(smooth.order_d2) + " (>=0.9), " + fmt(secs) + "s"};
}

// --------------------------------------------------------------------------
// Criterion 6: desk-scale source-to-solution reproduction.
// --------------------------------------------------------------------------
Outcome criterion_6() {
    const auto t0 = Clock::now();
    if (run_cli("gen-data --problem dr-source --n-train 100 --n-test 100 --nx 10 --nt 5 "
                "--seed 1 --out " +
                work + "/dr.bin") != 0)
        return {false, "gen-data failed"};

    std::ofstream(work + "/cfg6.json") << R"({
      "problem": "dr-source",
      "d_V": 20, "d_U": 50, "P": 100,
      "decoder": {"kind": "learned", "hidden": [100, 100]},
      "train": {"epochs": 50000, "learning_rate": 0.001, "lambda": 0.0, "seed": 3, "log_every": 100}
    })";
    if (run_cli("train --data " + work + "/dr.bin --config " + work + "/cfg6.json --out " + work +
                "/ck6.bin --history " + work + "/hist6.csv") != 0)
        return {false, "train failed"};

    std::string out;
    if (run_cli("eval --checkpoint " + work + "/ck6.bin --data " + work + "/dr.bin --report " +
                    work + "/rep6.json",
                &out) != 0)
        return {false, "eval failed"};
    const double rel = json::parse(out).at("relative_error").get<double>();
    const double secs = elapsed_s(t0);
    return {rel <= 5e-2, "relative test error " + fmt(rel) + " (<=0.05) at 100x100, " +
                             fmt(secs / 60.0) + " min (target 30)"};
}

// --------------------------------------------------------------------------
// Criterion 7: extrapolation to [0,2] splits at T and matches the standard
// evaluation bitwise on the within-horizon slice.
// --------------------------------------------------------------------------
Outcome criterion_7() {
    std::string out;
    if (run_cli("extrapolate --checkpoint " + work + "/ck6.bin --data " + work +
                    "/dr.bin --t-max 2 --report " + work + "/rep7.json",
                &out) != 0)
        return {false, "extrapolate failed"};
    json rep7 = read_json(work + "/rep7.json");
    json rep6 = read_json(work + "/rep6.json");

    const double rel_full = rep7.at("relative_error").get<double>();
    const double rel6 = rep6.at("relative_error").get<double>();
    const double bound = std::max(10.0 * rel6, 2e-1);

    const bool bitwise = rep7.at("within").at("absolute_error").get<double>() ==
                             rep6.at("absolute_error").get<double>() &&
                         rep7.at("within").at("relative_error").get<double>() ==
                             rep6.at("relative_error").get<double>();

    const bool pass = rel_full <= bound && bitwise;
    return {pass, "rel err on [0,2] " + fmt(rel_full) + " (<= " + fmt(bound) + "), within slice " +
                      (bitwise ? "bitwise equal" : "NOT bitwise equal")};
}

// --------------------------------------------------------------------------
// Criterion 8: decoder transfer to the diffusion equation.
// --------------------------------------------------------------------------
Outcome criterion_8() {
    const auto t0 = Clock::now();
    if (run_cli("gen-data --problem dr-source --n-train 100 --n-test 100 --nx 10 --nt 5 "
                "--seed 21 --length-scale 0.3 --diffusion 0.2 --reaction 0 --out " +
                work + "/dr_transfer.bin") != 0)
        return {false, "gen-data failed"};

    std::ofstream(work + "/cfg8.json") << R"({
      "problem": "dr-source",
      "d_V": 20, "d_U": 50, "P": 100,
      "decoder": {"kind": "learned", "hidden": [100, 100]},
      "train": {"epochs": 50000, "learning_rate": 0.001, "seed": 5, "freeze_decoder": true,
                "log_every": 100}
    })";
    if (run_cli("train --data " + work + "/dr_transfer.bin --config " + work + "/cfg8.json "
                "--init-decoder-from " + work + "/ck6.bin --out " + work + "/ck8.bin") != 0)
        return {false, "train failed"};

    std::string out;
    if (run_cli("eval --checkpoint " + work + "/ck8.bin --data " + work +
                    "/dr_transfer.bin --report " + work + "/rep8.json",
                &out) != 0)
        return {false, "eval failed"};
    const double rel = json::parse(out).at("relative_error").get<double>();
    const double secs = elapsed_s(t0);
    return {rel <= 1e-1, "frozen-decoder transfer rel err " + fmt(rel) + " (<=0.1), " +
                             fmt(secs / 60.0) + " min"};
}

// --------------------------------------------------------------------------
// Criterion 9: criterion-6 setup with the Fourier decoder.
// --------------------------------------------------------------------------
Outcome criterion_9() {
    const auto t0 = Clock::now();
    std::ofstream(work + "/cfg9.json") << R"({
      "problem": "dr-source",
      "d_V": 20, "d_U": 50, "P": 100,
      "decoder": {"kind": "fourier"},
      "train": {"epochs": 50000, "learning_rate": 0.001, "lambda": 0.0, "seed": 3, "log_every": 100}
    })";
    if (run_cli("train --data " + work + "/dr.bin --config " + work + "/cfg9.json --out " + work +
                "/ck9.bin") != 0)
        return {false, "train failed"};
    std::string out;
    if (run_cli("eval --checkpoint " + work + "/ck9.bin --data " + work + "/dr.bin --report " +
                    work + "/rep9.json",
                &out) != 0)
        return {false, "eval failed"};
    const double rel = json::parse(out).at("relative_error").get<double>();
    const double secs = elapsed_s(t0);
    return {rel <= 5e-2,
            "Fourier-decoder rel err " + fmt(rel) + " (<=0.05), " + fmt(secs / 60.0) + " min"};
}

// --------------------------------------------------------------------------
// Criterion 10: reduced Navier-Stokes training, property-based.
// --------------------------------------------------------------------------
Outcome criterion_10() {
    const auto t0 = Clock::now();
    if (run_cli("gen-data --problem ns-initial --n-train 100 --n-test 20 --nx 32 --nt 10 "
                "--grid-n 64 --t-horizon 5 --seed 1 --out " +
                work + "/ns.bin") != 0)
        return {false, "gen-data failed"};

    std::ofstream(work + "/cfg10.json") << R"({
      "problem": "ns-initial",
      "d_V": 1024, "d_U": 64, "P": 128,
      "decoder": {"kind": "learned", "hidden": [64, 64]},
      "train": {"epochs": 20000, "learning_rate": 0.001, "lambda": 1e-5, "reg": "l1",
                "seed": 3, "log_every": 1}
    })";
    if (run_cli("train --data " + work + "/ns.bin --config " + work + "/cfg10.json --out " + work +
                "/ck10.bin --history " + work + "/hist10.csv") != 0)
        return {false, "train failed"};

    // Smoothed (100-epoch moving average) loss non-increasing over the final
    // 80%, allowing <=5% of windows to rise by under 1e-3 relative.
    std::ifstream hist(work + "/hist10.csv");
    std::string line;
    std::getline(hist, line);  // header
    std::vector<double> totals;
    while (std::getline(hist, line)) {
        const auto pos = line.rfind(',');
        totals.push_back(std::stod(line.substr(pos + 1)));
    }
    std::vector<double> ma;
    const std::size_t win = 100;
    if (totals.size() >= win) {
        double acc = 0.0;
        for (std::size_t i = 0; i < totals.size(); ++i) {
            acc += totals[i];
            if (i + 1 >= win) {
                ma.push_back(acc / static_cast<double>(win));
                acc -= totals[i + 1 - win];
            }
        }
    }
    std::size_t violations = 0, windows = 0;
    bool small_rises = true;
    const std::size_t start = totals.size() / 5;  // final 80% of epochs
    for (std::size_t i = std::max(start, std::size_t{1}); i < ma.size(); ++i) {
        ++windows;
        if (ma[i] > ma[i - 1]) {
            ++violations;
            if ((ma[i] - ma[i - 1]) / std::max(ma[i - 1], 1e-300) >= 1e-3) small_rises = false;
        }
    }
    const bool monotone_ok = windows > 0 && small_rises && violations <= windows / 20;

    std::string out;
    if (run_cli("eval --checkpoint " + work + "/ck10.bin --data " + work + "/ns.bin --report " +
                    work + "/rep10.json",
                &out) != 0)
        return {false, "eval failed"};
    const double rel = json::parse(out).at("relative_error").get<double>();
    const double secs = elapsed_s(t0);
    const bool pass = monotone_ok && rel <= 3e-1;
    return {pass, "rel test err " + fmt(rel) + " (<=0.3) on 20 samples, smoothed loss " +
                      (monotone_ok ? "non-increasing" : "INCREASING") + " (" +
                      std::to_string(violations) + "/" + std::to_string(windows) +
                      " window rises), " + fmt(secs / 60.0) + " min (target 120)"};
}

// --------------------------------------------------------------------------
// Criterion 11: byte-identical gen-data and train outputs across runs.
// --------------------------------------------------------------------------
Outcome criterion_11() {
    for (int r = 0; r < 2; ++r) {
        if (run_cli("gen-data --problem dr-multi --n-train 4 --n-test 2 --nx 8 --nt 4 --seed 17 "
                    "--test-nx 10 --test-nt 8 --out " +
                    work + "/det_ds_" + std::to_string(r) + ".bin") != 0)
            return {false, "gen-data failed"};
    }
    if (slurp(work + "/det_ds_0.bin") != slurp(work + "/det_ds_1.bin"))
        return {false, "gen-data outputs differ"};

    std::ofstream(work + "/cfg11.json") << R"({
      "problem": "dr-multi",
      "d_V": 8, "d_U": 12, "P": 16,
      "decoder": {"kind": "learned", "hidden": [16]},
      "train": {"epochs": 300, "learning_rate": 0.002, "seed": 9, "log_every": 50}
    })";
    for (int r = 0; r < 2; ++r) {
        if (run_cli("train --data " + work + "/det_ds_0.bin --config " + work +
                    "/cfg11.json --out " + work + "/det_ck_" + std::to_string(r) + ".bin "
                    "--history " +
                    work + "/det_hist_" + std::to_string(r) + ".csv") != 0)
            return {false, "train failed"};
    }
    const bool ck_same = slurp(work + "/det_ck_0.bin") == slurp(work + "/det_ck_1.bin");
    const bool hist_same = slurp(work + "/det_hist_0.csv") == slurp(work + "/det_hist_1.csv");
    return {ck_same && hist_same,
            std::string("dataset bytes identical; checkpoint ") +
                (ck_same ? "identical" : "DIFFER") + ", history " +
                (hist_same ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    std::filesystem::create_directories(work);

    std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
        {1, criterion_1}, {2, criterion_2},   {3, criterion_3}, {4, criterion_4},
        {5, criterion_5}, {6, criterion_6},   {7, criterion_7}, {8, criterion_8},
        {9, criterion_9}, {10, criterion_10}, {11, criterion_11},
    };

    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    bool all_pass = true;
    for (auto& [id, fn] : criteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all_pass = all_pass && o.pass;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
                  << std::endl;
    }
    return all_pass ? 0 : 1;
}
