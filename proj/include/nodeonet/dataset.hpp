#pragma once

#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "nodeonet/container.hpp"
#include "nodeonet/diffusion_reaction.hpp"
#include "nodeonet/navier_stokes.hpp"
#include "nodeonet/node_variant.hpp"
#include "nodeonet/random_fields.hpp"
#include "nodeonet/threading.hpp"

namespace nodeonet {

enum class ProblemFamily { DrSource, DrDiffusion, DrMulti, NsInitial, NsSource, NsMulti };

inline const char* family_name(ProblemFamily f) {
    switch (f) {
    case ProblemFamily::DrSource: return "dr-source";
    case ProblemFamily::DrDiffusion: return "dr-diffusion";
    case ProblemFamily::DrMulti: return "dr-multi";
    case ProblemFamily::NsInitial: return "ns-initial";
    case ProblemFamily::NsSource: return "ns-source";
    case ProblemFamily::NsMulti: return "ns-multi";
    }
    return "?";
}

inline ProblemFamily family_from_name(const std::string& s) {
    for (ProblemFamily f : {ProblemFamily::DrSource, ProblemFamily::DrDiffusion,
                            ProblemFamily::DrMulti, ProblemFamily::NsInitial,
                            ProblemFamily::NsSource, ProblemFamily::NsMulti})
        if (s == family_name(f)) return f;
    raise(Error::Validation, "unknown problem family '" + s + "'");
}

inline bool family_is_ns(ProblemFamily f) {
    return f == ProblemFamily::NsInitial || f == ProblemFamily::NsSource ||
           f == ProblemFamily::NsMulti;
}

/// Which roles vary sample to sample; fixed counterparts are stored once.
inline std::vector<InputRole> family_varying_roles(ProblemFamily f) {
    switch (f) {
    case ProblemFamily::DrSource: return {InputRole::Source};
    case ProblemFamily::DrDiffusion: return {InputRole::Diffusion};
    case ProblemFamily::DrMulti: return {InputRole::Diffusion, InputRole::Source};
    case ProblemFamily::NsInitial: return {InputRole::Initial};
    case ProblemFamily::NsSource: return {InputRole::Source};
    case ProblemFamily::NsMulti: return {InputRole::Initial, InputRole::Source};
    }
    return {};
}

inline NodeVariantKind family_default_variant(ProblemFamily f) {
    switch (f) {
    case ProblemFamily::DrSource: return NodeVariantKind::SourceOnly;
    case ProblemFamily::DrDiffusion: return NodeVariantKind::DiffusionInput;
    case ProblemFamily::DrMulti: return NodeVariantKind::MultiInput;
    default: return NodeVariantKind::NavierStokes;
    }
}

struct RawSample {
    std::map<InputRole, Field> fields;  // varying inputs at generation resolution
    DenseArray labels;                  // (N_t x N_x)
};

struct DatasetSplit {
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    std::vector<RawSample> samples;
};

struct Dataset {
    ProblemFamily family = ProblemFamily::DrSource;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    double length_scale = 0.5;
    double reaction = -0.01;
    double diffusion_const = 0.01;    // dr-source
    double nu = 1e-3;                 // ns families
    std::size_t grid_n = 64;          // ns generation grid
    std::size_t label_grid_n = 32;    // ns label/sensor grid side
    std::size_t fine_nx = 1001;       // dr fine grid
    std::size_t fine_nt = 10000;      // dr fine steps over [0, horizon]
    double ns_dt = 5e-3;
    std::map<InputRole, Field> shared;  // fixed counterpart inputs
    DatasetSplit train;
    DatasetSplit test;

    /// All input fields for one sample: varying fields plus fixed ones.
    std::map<InputRole, Field> sample_fields(const DatasetSplit& split, std::size_t i) const {
        std::map<InputRole, Field> out = split.samples[i].fields;
        for (const auto& [role, field] : shared) out.emplace(role, field);
        return out;
    }
};

struct BuildOptions {
    std::size_t n_train = 100;
    std::size_t n_test = 100;
    std::size_t nx = 10;        // training labels: points for dr, grid side for ns
    std::size_t nt = 5;
    std::size_t test_nx = 0;    // 0 = family default (100 for dr, nx for ns)
    std::size_t test_nt = 0;    // 0 = family default (100 for dr, nt for ns)
    std::uint64_t seed = 1;
    double length_scale = 0.0;  // 0 = family default
    std::size_t grid_n = 64;    // ns generation grid
    double horizon = 0.0;       // 0 = family default (1 for dr, 5 for ns)
    std::optional<double> diffusion_const;  // dr-source override (default 0.01)
    std::optional<double> reaction;         // dr override (default -0.01)
    std::size_t threads = 1;
};

namespace dataset_detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline Field ns_fixed_trig_field(std::size_t n) {
    return Field::from_function_2d(n, [](double x, double y) {
        return 0.1 * std::sin(kTwoPi * (x + y)) + 0.1 * std::cos(kTwoPi * (x + y));
    });
}

inline std::vector<double> label_times(double horizon, std::size_t nt) {
    std::vector<double> t(nt);
    for (std::size_t k = 0; k < nt; ++k)
        t[k] = static_cast<double>(k + 1) * horizon / static_cast<double>(nt);
    return t;
}

inline std::vector<std::vector<double>> points_1d(std::size_t nx) {
    std::vector<std::vector<double>> pts;
    for (double x : uniform_grid(nx)) pts.push_back({x});
    return pts;
}

inline std::vector<std::vector<double>> points_2d(std::size_t n) {
    std::vector<std::vector<double>> pts;
    pts.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            pts.push_back({static_cast<double>(i) / static_cast<double>(n),
                           static_cast<double>(j) / static_cast<double>(n)});
    return pts;
}

}  // namespace dataset_detail

/// Draw inputs per family, solve the reference PDE, and subsample labels to
/// the split grids. Sample i uses the derived RNG stream (seed + i), so the
/// result is identical no matter how many threads run.
inline Dataset build_dataset(ProblemFamily family, const BuildOptions& opt) {
    Dataset ds;
    ds.family = family;
    ds.seed = opt.seed;
    const bool is_ns = family_is_ns(family);
    ds.horizon = opt.horizon > 0.0 ? opt.horizon : (is_ns ? 5.0 : 1.0);

    using dataset_detail::label_times;
    using dataset_detail::points_1d;
    using dataset_detail::points_2d;

    if (is_ns) {
        ds.grid_n = opt.grid_n;
        require(opt.nx >= 4, Error::Validation, "ns label grid side must be >= 4");
        ds.label_grid_n = opt.nx;
        require(ds.grid_n % ds.label_grid_n == 0, Error::Validation,
                "ns generation grid must nest the label grid");
        const std::size_t test_nt = opt.test_nt > 0 ? opt.test_nt : opt.nt;
        ds.train.times = label_times(ds.horizon, opt.nt);
        ds.train.points = points_2d(ds.label_grid_n);
        ds.test.times = label_times(ds.horizon, test_nt);
        ds.test.points = ds.train.points;
        // dt must land on every snapshot of both splits: a multiple of
        // lcm(nt, test_nt) steps, refined to roughly 5e-3.
        const std::size_t lcm = opt.nt / std::gcd(opt.nt, test_nt) * test_nt;
        const std::size_t steps = lcm * static_cast<std::size_t>(std::max(
                                            1.0, std::ceil(ds.horizon / (static_cast<double>(lcm) * 5e-3))));
        ds.ns_dt = ds.horizon / static_cast<double>(steps);
    } else {
        ds.fine_nx = 1001;
        ds.fine_nt = static_cast<std::size_t>(std::llround(10000.0 * ds.horizon));
        ds.train.times = label_times(ds.horizon, opt.nt);
        ds.train.points = points_1d(opt.nx);
        ds.test.times = label_times(ds.horizon, opt.test_nt > 0 ? opt.test_nt : 100);
        ds.test.points = points_1d(opt.test_nx > 0 ? opt.test_nx : 100);
    }

    switch (family) {
    case ProblemFamily::DrSource:
        ds.length_scale = opt.length_scale > 0 ? opt.length_scale : 0.5;
        ds.reaction = opt.reaction.value_or(-0.01);
        ds.diffusion_const = opt.diffusion_const.value_or(0.01);
        break;
    case ProblemFamily::DrDiffusion:
        ds.length_scale = opt.length_scale > 0 ? opt.length_scale : 0.5;
        ds.reaction = opt.reaction.value_or(-0.01);
        ds.shared.emplace(InputRole::Source, Field::from_function_1d(uniform_grid(ds.fine_nx), [](double x) {
                              return std::sin(dataset_detail::kTwoPi * x);
                          }));
        break;
    case ProblemFamily::DrMulti:
        ds.length_scale = opt.length_scale > 0 ? opt.length_scale : 0.2;
        ds.reaction = opt.reaction.value_or(-0.01);
        break;
    case ProblemFamily::NsInitial:
        ds.shared.emplace(InputRole::Source, dataset_detail::ns_fixed_trig_field(ds.grid_n));
        break;
    case ProblemFamily::NsSource:
        ds.shared.emplace(InputRole::Initial, dataset_detail::ns_fixed_trig_field(ds.grid_n));
        break;
    case ProblemFamily::NsMulti:
        break;
    }

    // The 1-D GP factorization is shared across samples.
    std::unique_ptr<GpSampler1d> gp;
    if (!is_ns) gp = std::make_unique<GpSampler1d>(RbfKernelSpec{ds.length_scale, 1.0},
                                                   uniform_grid(ds.fine_nx));

    auto draw_inputs = [&](std::uint64_t sample_index) {
        RngState rng = RngState::for_sample(ds.seed, sample_index);
        std::map<InputRole, Field> fields;
        switch (family) {
        case ProblemFamily::DrSource:
            fields.emplace(InputRole::Source, gp->sample(rng));
            break;
        case ProblemFamily::DrDiffusion:
            fields.emplace(InputRole::Diffusion, derive_diffusion_input(gp->sample(rng)));
            break;
        case ProblemFamily::DrMulti: {
            Field g = gp->sample(rng);
            Field f = gp->sample(rng);
            fields.emplace(InputRole::Diffusion, derive_diffusion_input(g));
            fields.emplace(InputRole::Source, std::move(f));
            break;
        }
        case ProblemFamily::NsInitial:
            fields.emplace(InputRole::Initial,
                           sample_grf_2d({std::pow(7.0, 1.5), 49.0, 2.5, ds.grid_n, true}, rng));
            break;
        case ProblemFamily::NsSource:
            fields.emplace(InputRole::Source,
                           sample_grf_2d({std::pow(3.0, 1.5), 49.0, 5.0, ds.grid_n, true}, rng));
            break;
        case ProblemFamily::NsMulti: {
            Field u0 = sample_grf_2d({std::pow(7.0, 1.5), 49.0, 2.5, ds.grid_n, true}, rng);
            Field f = sample_grf_2d({std::pow(3.0, 1.5), 49.0, 5.0, ds.grid_n, true}, rng);
            fields.emplace(InputRole::Initial, std::move(u0));
            fields.emplace(InputRole::Source, std::move(f));
            break;
        }
        }
        return fields;
    };

    auto solve_to_labels = [&](const std::map<InputRole, Field>& fields, const DatasetSplit& split) {
        const std::size_t n_t = split.times.size();
        const std::size_t n_x = split.points.size();
        DenseArray labels(Shape{n_t, n_x});
        if (!is_ns) {
            DiffusionReactionProblem p;
            p.horizon = ds.horizon;
            p.reaction = ds.reaction;
            if (fields.count(InputRole::Diffusion)) {
                const Field& dfield = fields.at(InputRole::Diffusion);
                p.diffusion = [&dfield](double x) { return dfield.value_at(x); };
            } else {
                const double d0 = ds.diffusion_const;
                p.diffusion = [d0](double) { return d0; };
            }
            const Field& src = fields.count(InputRole::Source) ? fields.at(InputRole::Source)
                                                               : ds.shared.at(InputRole::Source);
            p.source = [&src](double, double x) { return src.value_at(x); };
            p.source_time_invariant = true;

            std::vector<double> xs;
            for (const auto& pt : split.points) xs.push_back(pt[0]);
            auto snap = solve_diffusion_reaction(p, ds.fine_nx, ds.fine_nt, split.times, xs);
            for (std::size_t k = 0; k < n_t; ++k)
                for (std::size_t j = 0; j < n_x; ++j) labels.at2(k, j) = snap.values[k][j];
        } else {
            NavierStokesProblem p;
            p.nu = ds.nu;
            p.horizon = ds.horizon;
            p.initial_vorticity = fields.count(InputRole::Initial)
                                      ? fields.at(InputRole::Initial)
                                      : ds.shared.at(InputRole::Initial);
            p.forcing = fields.count(InputRole::Source) ? fields.at(InputRole::Source)
                                                        : ds.shared.at(InputRole::Source);
            // One solver per call: plan creation is serialized internally.
            NavierStokesSolver solver(ds.grid_n);
            auto snap = solver.solve(p, ds.ns_dt, split.times);
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
    };

    auto build_split = [&](DatasetSplit& split, std::size_t count, std::uint64_t index_base) {
        split.samples.resize(count);
        parallel_for(count, opt.threads, [&](std::size_t i) {
            RawSample s;
            s.fields = draw_inputs(index_base + i);
            s.labels = solve_to_labels(s.fields, split);
            split.samples[i] = std::move(s);
        });
    };
    build_split(ds.train, opt.n_train, 0);
    build_split(ds.test, opt.n_test, opt.n_train);
    return ds;
}

// ---------------------------------------------------------------------------
// Container serialization.
// ---------------------------------------------------------------------------

namespace dataset_detail {

inline DenseArray field_to_array(const Field& f) {
    if (f.dim == 1) return DenseArray(Shape{f.values.size()}, f.values);
    return DenseArray(Shape{f.n2, f.n2}, f.values);
}

inline Field field_from_array(const DenseArray& a, const Dataset& ds) {
    Field f;
    if (a.rank() == 2) {
        f.dim = 2;
        f.n2 = a.shape()[0];
        f.values.assign(a.data(), a.data() + a.size());
    } else {
        f.dim = 1;
        f.xs = uniform_grid(a.size());
        f.values.assign(a.data(), a.data() + a.size());
    }
    (void)ds;
    return f;
}

inline void store_split(Container& c, const std::string& prefix, const Dataset& ds,
                        const DatasetSplit& split) {
    c.arrays.emplace(prefix + ".times", DenseArray(Shape{split.times.size()}, split.times));
    const std::size_t dim = family_is_ns(ds.family) ? 2 : 1;
    DenseArray pts(Shape{split.points.size(), dim});
    for (std::size_t p = 0; p < split.points.size(); ++p)
        for (std::size_t d = 0; d < dim; ++d) pts.at2(p, d) = split.points[p][d];
    c.arrays.emplace(prefix + ".points", pts);

    const std::size_t n = split.samples.size();
    if (n == 0) return;
    const std::size_t n_t = split.times.size(), n_x = split.points.size();
    DenseArray labels(Shape{n, n_t, n_x});
    for (std::size_t i = 0; i < n; ++i)
        std::memcpy(labels.data() + i * n_t * n_x, split.samples[i].labels.data(),
                    n_t * n_x * sizeof(double));
    c.arrays.emplace(prefix + ".labels", labels);

    for (InputRole role : family_varying_roles(ds.family)) {
        const DenseArray first = field_to_array(split.samples[0].fields.at(role));
        Shape shape{n};
        for (std::size_t d : first.shape()) shape.push_back(d);
        DenseArray stacked(shape);
        for (std::size_t i = 0; i < n; ++i) {
            const DenseArray a = field_to_array(split.samples[i].fields.at(role));
            require(a.size() == first.size(), Error::Shape, "inconsistent input field sizes");
            std::memcpy(stacked.data() + i * first.size(), a.data(), first.size() * sizeof(double));
        }
        c.arrays.emplace(prefix + ".input." + input_role_name(role), stacked);
    }
}

inline void load_split(const Container& c, const std::string& prefix, Dataset& ds,
                       DatasetSplit& split) {
    const DenseArray& times = c.arrays.at(prefix + ".times");
    split.times.assign(times.data(), times.data() + times.size());
    const DenseArray& pts = c.arrays.at(prefix + ".points");
    split.points.clear();
    for (std::size_t p = 0; p < pts.shape()[0]; ++p) {
        std::vector<double> x(pts.shape()[1]);
        for (std::size_t d = 0; d < x.size(); ++d) x[d] = pts.at2(p, d);
        split.points.push_back(std::move(x));
    }
    if (!c.arrays.count(prefix + ".labels")) return;
    const DenseArray& labels = c.arrays.at(prefix + ".labels");
    const std::size_t n = labels.shape()[0];
    const std::size_t n_t = labels.shape()[1], n_x = labels.shape()[2];
    split.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        DenseArray one(Shape{n_t, n_x});
        std::memcpy(one.data(), labels.data() + i * n_t * n_x, n_t * n_x * sizeof(double));
        split.samples[i].labels = std::move(one);
    }
    for (InputRole role : family_varying_roles(ds.family)) {
        const DenseArray& stacked = c.arrays.at(prefix + ".input." + input_role_name(role));
        const std::size_t stride = stacked.size() / n;
        for (std::size_t i = 0; i < n; ++i) {
            DenseArray one(Shape(stacked.shape().begin() + 1, stacked.shape().end()));
            std::memcpy(one.data(), stacked.data() + i * stride, stride * sizeof(double));
            split.samples[i].fields.emplace(role, field_from_array(one, ds));
        }
    }
}

}  // namespace dataset_detail

inline Container dataset_to_container(const Dataset& ds) {
    Container c;
    c.meta["kind"] = "dataset";
    c.meta["family"] = family_name(ds.family);
    c.meta["horizon"] = ds.horizon;
    c.meta["seed"] = ds.seed;
    c.meta["length_scale"] = ds.length_scale;
    c.meta["reaction"] = ds.reaction;
    c.meta["diffusion_const"] = ds.diffusion_const;
    c.meta["nu"] = ds.nu;
    c.meta["grid_n"] = ds.grid_n;
    c.meta["label_grid_n"] = ds.label_grid_n;
    c.meta["fine_nx"] = ds.fine_nx;
    c.meta["fine_nt"] = ds.fine_nt;
    c.meta["ns_dt"] = ds.ns_dt;
    c.meta["n_train"] = ds.train.samples.size();
    c.meta["n_test"] = ds.test.samples.size();
    dataset_detail::store_split(c, "train", ds, ds.train);
    dataset_detail::store_split(c, "test", ds, ds.test);
    for (const auto& [role, field] : ds.shared)
        c.arrays.emplace(std::string("shared.") + input_role_name(role),
                         dataset_detail::field_to_array(field));
    return c;
}

inline Dataset dataset_from_container(const Container& c) {
    require(c.meta.value("kind", "") == "dataset", Error::Validation, "container is not a dataset");
    Dataset ds;
    ds.family = family_from_name(c.meta.at("family").get<std::string>());
    ds.horizon = c.meta.at("horizon").get<double>();
    ds.seed = c.meta.at("seed").get<std::uint64_t>();
    ds.length_scale = c.meta.at("length_scale").get<double>();
    ds.reaction = c.meta.at("reaction").get<double>();
    ds.diffusion_const = c.meta.at("diffusion_const").get<double>();
    ds.nu = c.meta.at("nu").get<double>();
    ds.grid_n = c.meta.at("grid_n").get<std::size_t>();
    ds.label_grid_n = c.meta.at("label_grid_n").get<std::size_t>();
    ds.fine_nx = c.meta.at("fine_nx").get<std::size_t>();
    ds.fine_nt = c.meta.at("fine_nt").get<std::size_t>();
    ds.ns_dt = c.meta.at("ns_dt").get<double>();
    for (const auto& [name, arr] : c.arrays) {
        if (name.rfind("shared.", 0) != 0) continue;
        const std::string role_name = name.substr(7);
        for (InputRole role : {InputRole::Source, InputRole::Diffusion, InputRole::Reaction,
                               InputRole::Initial})
            if (role_name == input_role_name(role))
                ds.shared.emplace(role, dataset_detail::field_from_array(arr, ds));
    }
    dataset_detail::load_split(c, "train", ds, ds.train);
    dataset_detail::load_split(c, "test", ds, ds.test);
    return ds;
}

}  // namespace nodeonet
