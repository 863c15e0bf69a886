#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "ntt/archive.hpp"
#include "ntt/comm.hpp"
#include "ntt/datagen.hpp"
#include "ntt/dist_matrix.hpp"
#include "ntt/errors.hpp"
#include "ntt/store.hpp"
#include "ntt/tt_driver.hpp"

namespace fs = std::filesystem;

namespace ntt::cli {
namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::vector<double> kDefaultEpsList{0.5, 0.25, 0.125, 0.075, 0.01, 0.005, 0.001};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
    std::vector<T> out;
    std::string token;
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), 'x', ',');
    std::istringstream in(normalized);
    while (std::getline(in, token, ',')) {
        if (token.empty()) throw UsageError(std::string("empty entry in ") + what + " '" + text + "'");
        std::istringstream tin(token);
        T v{};
        tin >> v;
        if (!tin || !tin.eof()) throw UsageError(std::string("cannot parse ") + what + " entry '" + token + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what);
    return out;
}

std::string join(const std::vector<Index>& v, const char* sep) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? sep : "") + std::to_string(v[k]);
    return s;
}

std::string join(const std::vector<int>& v, const char* sep) {
    return join(std::vector<Index>(v.begin(), v.end()), sep);
}

std::string fmt_double(double v, int precision = 6) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const IndexError*>(&e) ||
        dynamic_cast<const RankError*>(&e))
        return kExitDimension;
    if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DegenerateInputError*>(&e) ||
        dynamic_cast<const NonnegativityError*>(&e))
        return kExitNumerical;
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return kExitUsage;
    return kExitFailure;
}

void require_store(const std::string& path, const char* what) {
    if (!fs::exists(fs::path(path) / "meta.json"))
        throw UsageError(std::string(what) + " store not found: " + path);
}

void require_archive(const std::string& path) {
    if (!fs::exists(fs::path(path) / "tt_meta.json")) throw UsageError("archive not found: " + path);
}

/// Clears an earlier output of the same kind; refuses to touch anything else.
void prepare_output(const fs::path& dir, const char* marker) {
    if (!fs::exists(dir)) return;
    if (!fs::is_directory(dir)) throw UsageError("output path exists and is not a directory: " + dir.string());
    if (fs::exists(dir / marker)) {
        fs::remove_all(dir);
        return;
    }
    if (!fs::is_empty(dir)) throw UsageError("refusing to overwrite non-empty directory: " + dir.string());
}

DistTensor load_block(const ChunkedTensorStore& store, const std::vector<int>& grid, int rank) {
    const ProcessGrid pg(grid);
    DistTensor t;
    t.global_shape = store.shape();
    t.grid = grid;
    t.coords = pg.coords(rank);
    t.local = store.read_box(t.offset(), t.block_shape());
    return t;
}

void write_distributed(const fs::path& dir, const DistTensor& t, Communicator& world) {
    if (world.rank() == 0) ChunkedTensorStore::create(dir, t.global_shape, t.block_shape());
    world.barrier();
    const auto store = ChunkedTensorStore::open(dir);
    const Shape cidx(t.coords.begin(), t.coords.end());
    store.write_chunk(cidx, t.local.data());
    world.barrier();
}

int grid_size(const std::vector<int>& grid) {
    int p = 1;
    for (int g : grid) p *= g;
    return p;
}

std::string timing_header() {
    std::string s;
    for (auto c : TimingReport::all()) s += std::string(TimingReport::name(c)) + ",";
    return s;
}

std::string timing_values(const TimingReport& t) {
    std::string s;
    for (auto c : TimingReport::all()) s += fmt_double(t.seconds(c)) + ",";
    return s;
}

void add_nmf_options(CLI::App* cmd, int& iters, std::uint64_t& seed, double& delta, bool& literal,
                     std::string& correction) {
    cmd->add_option("--iters", iters, "NMF iterations per stage")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "NMF seed");
    cmd->add_option("--delta", delta, "BCD extrapolation parameter in (0, 1)")->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("--literal-alg3-steps", literal, "divide the H step by sqrt(||W^T W||)");
    cmd->add_option("--correction", correction, "BCD correction: restore or reinit")
        ->check(CLI::IsMember({"restore", "reinit"}));
}

void apply_nmf_options(TtConfig& cfg, int iters, std::uint64_t seed, double delta, bool literal,
                       const std::string& correction) {
    cfg.nmf.max_iters = iters;
    cfg.nmf.seed = seed;
    cfg.nmf.delta = delta;
    cfg.nmf.literal_steps = literal;
    cfg.nmf.correction = correction == "reinit" ? CorrectionMode::Reinitialize : CorrectionMode::Restore;
}

}  // namespace

std::vector<int> default_grid(int p, const Shape& shape) {
    if (p < 1) throw DimensionError("rank count must be positive");
    std::vector<int> primes;
    for (int q = p, f = 2; q > 1;) {
        if (q % f == 0) {
            primes.push_back(f);
            q /= f;
        } else {
            ++f;
        }
    }
    std::vector<int> grid(shape.size(), 1);
    std::size_t next = 0;
    for (int f : primes) {
        bool placed = false;
        for (std::size_t tries = 0; tries < shape.size() && !placed; ++tries) {
            const std::size_t k = (next + tries) % shape.size();
            if (shape[k] % (grid[k] * f) == 0) {
                grid[k] *= f;
                next = k + 1;
                placed = true;
            }
        }
        if (!placed)
            throw DimensionError("cannot split " + std::to_string(p) + " ranks over shape " + join(shape, "x"));
    }
    return grid;
}

std::vector<int> parse_grid(const std::string& text, const Shape& shape) {
    const auto dims = parse_list<int>(text, "grid");
    for (int g : dims)
        if (g < 1) throw UsageError("grid entries must be positive");
    if (dims.size() == 1 && shape.size() != 1) return default_grid(dims[0], shape);
    if (dims.size() != shape.size())
        throw DimensionError("grid " + text + " has " + std::to_string(dims.size()) + " modes, tensor has " +
                             std::to_string(shape.size()));
    require_divisible(shape, dims);
    return dims;
}

std::vector<Index> expand_ranks(const std::vector<Index>& given, std::size_t d) {
    if (given.size() == d + 1) return given;
    std::vector<Index> full(d + 1, 1);
    if (given.size() == 1) {
        for (std::size_t k = 1; k < d; ++k) full[k] = given[0];
    } else if (given.size() + 1 == d) {
        std::copy(given.begin(), given.end(), full.begin() + 1);
    } else {
        throw RankError("expected 1, " + std::to_string(d - 1) + " or " + std::to_string(d + 1) + " ranks, got " +
                        std::to_string(given.size()));
    }
    return full;
}

namespace {

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string shape, ranks, grid = "1", out;
    std::uint64_t seed = 0;
    double noise_var = 0.0;
    bool clip = true;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    GenSpec spec;
    spec.shape = parse_list<Index>(a.shape, "shape");
    spec.ranks = expand_ranks(parse_list<Index>(a.ranks, "ranks"), spec.shape.size());
    spec.seed = a.seed;
    spec.noise_variance = a.noise_var;
    spec.clip = a.clip;
    const auto grid = parse_grid(a.grid, spec.shape);
    prepare_output(a.out, "meta.json");
    run_spmd(grid_size(grid), [&](Communicator& world) {
        const DistTensor t = generate(spec, ProcessGrid(grid), world.rank());
        write_distributed(a.out, t, world);
    });
    out << "wrote " << a.out << " shape " << join(spec.shape, "x") << " ranks " << join(spec.ranks, ",") << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
    std::string input, out, method = "ntt-bcd", grid = "1", ranks, stage_eps, correction = "restore";
    std::optional<double> eps;
    bool global_eps = false, literal = false;
    int iters = 100;
    std::uint64_t seed = 0;
    double delta = 0.9999;
    std::optional<Index> probes;
};

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
    require_store(a.input, "input");
    const int drivers = (a.eps ? 1 : 0) + (a.ranks.empty() ? 0 : 1) + (a.stage_eps.empty() ? 0 : 1);
    if (drivers != 1) throw UsageError("give exactly one of --eps, --ranks or --stage-eps");
    const auto store = ChunkedTensorStore::open(a.input);
    const Shape shape = store.shape();
    const std::size_t d = shape.size();

    TtConfig cfg;
    cfg.method = parse_method(a.method);
    if (a.eps) cfg.eps = *a.eps;
    if (!a.ranks.empty()) cfg.ranks = expand_ranks(parse_list<Index>(a.ranks, "ranks"), d);
    if (!a.stage_eps.empty()) cfg.stage_eps = parse_list<double>(a.stage_eps, "stage eps");
    cfg.global_eps = a.global_eps;
    cfg.stage_residuals = true;
    apply_nmf_options(cfg, a.iters, a.seed, a.delta, a.literal, a.correction);
    cfg.validate(static_cast<int>(d));
    const auto grid = parse_grid(a.grid, shape);

    ErrorOptions eo;
    eo.probe_seed = a.seed;
    if (a.probes) {
        if (*a.probes < 1) throw UsageError("--probe-error needs a positive probe count");
        eo.probes = *a.probes;
        eo.force_probes = true;
    }
    const bool probed = uses_probes(element_count(shape), eo);

    prepare_output(a.out, "tt_meta.json");
    run_spmd(grid_size(grid), [&](Communicator& world) {
        const DistTensor x = load_block(store, grid, world.rank());
        const TtResult res = dist_ntt(x, cfg, world);
        const double err = dist_relative_error(x, res.train, world, eo);
        if (world.rank() != 0) return;

        const auto ranks = res.train.ranks();
        const double comp = compression_ratio(shape, ranks);
        ArchiveInfo info;
        info.method = std::string(method_name(cfg.method));
        if (!cfg.ranks && cfg.stage_eps.empty()) info.eps = cfg.eps;
        info.stage_eps = cfg.stage_eps;
        info.seed = a.seed;
        info.probe_seed = eo.probe_seed;
        info.probes = probed ? eo.probes : 0;
        save_archive(a.out, res.train, info);

        std::ofstream csv(fs::path(a.out) / "metrics.csv");
        csv << "stage,eps,rank,compression,rel_error," << timing_header() << "total_s\n";
        for (const auto& s : res.stages) {
            const double stage_err = s.x_norm > 0.0 ? s.residual / s.x_norm : 0.0;
            csv << s.stage << ',' << (cfg.ranks ? std::string() : fmt_double(s.eps)) << ',' << s.rank << ','
                << fmt_double(comp) << ',' << fmt_double(stage_err) << ',' << timing_values(s.timings)
                << fmt_double(s.seconds) << '\n';
        }
        csv << "all," << (info.eps ? fmt_double(*info.eps) : std::string()) << ',' << join(ranks, "-") << ','
            << fmt_double(comp) << ',' << fmt_double(err) << ',' << timing_values(res.timings)
            << fmt_double(res.seconds) << '\n';

        out << "method: " << info.method << '\n';
        out << "ranks: " << join(ranks, ",") << '\n';
        out << "compression_ratio: " << fmt_double(comp, 8) << '\n';
        out << "relative_error: " << std::scientific << std::setprecision(6) << err << std::defaultfloat
            << (probed ? " (" + std::to_string(eo.probes) + " probes)" : std::string()) << '\n';
        out << '\n' << std::left << std::setw(7) << "stage" << std::setw(10) << "eps" << std::setw(6) << "rank";
        for (auto c : TimingReport::all()) out << std::setw(11) << TimingReport::name(c);
        out << "total_s\n";
        for (const auto& s : res.stages) {
            out << std::setw(7) << s.stage << std::setw(10) << (cfg.ranks ? "-" : fmt_double(s.eps, 4))
                << std::setw(6) << s.rank;
            for (auto c : TimingReport::all()) out << std::setw(11) << fmt_double(s.timings.seconds(c), 4);
            out << fmt_double(s.seconds, 4) << '\n';
        }
        out << std::right;
        out << "archive: " << a.out << '\n';
    });
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReconstructArgs {
    std::string archive, out, chunk;
};

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
    require_archive(a.archive);
    const TtArchive ar = load_archive(a.archive);
    const DenseTensor full = reconstruct(ar.train);
    const Shape chunk = a.chunk.empty() ? full.shape() : parse_list<Index>(a.chunk, "chunk shape");
    prepare_output(a.out, "meta.json");
    ChunkedTensorStore::write(a.out, full, chunk);
    out << "wrote " << a.out << " shape " << join(full.shape(), "x") << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct MetricsArgs {
    std::string a, b, slice;
    bool ssim = false;
};

DenseTensor load_tensor_or_archive(const std::string& path, std::optional<TensorTrain>& train) {
    if (fs::exists(fs::path(path) / "tt_meta.json")) {
        train = load_archive(path).train;
        return reconstruct(*train);
    }
    require_store(path, "metrics");
    return ChunkedTensorStore::open(path).read_all();
}

Matrix slice_2d(const DenseTensor& t, const std::vector<Index>& trailing) {
    if (t.ndims() < 2) throw DimensionError("SSIM needs a tensor with at least two modes");
    const Shape& s = t.shape();
    if (trailing.size() != s.size() - 2)
        throw DimensionError("--slice needs " + std::to_string(s.size() - 2) + " indices");
    Matrix m(s[0], s[1]);
    Shape idx(s.size(), 0);
    for (std::size_t k = 2; k < s.size(); ++k) idx[k] = trailing[k - 2];
    for (Index i = 0; i < s[0]; ++i)
        for (Index j = 0; j < s[1]; ++j) {
            idx[0] = i;
            idx[1] = j;
            m(i, j) = t.at(idx);
        }
    return m;
}

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
    std::optional<TensorTrain> ta, tb;
    const DenseTensor x = load_tensor_or_archive(a.a, ta);
    const DenseTensor y = load_tensor_or_archive(a.b, tb);
    if (x.shape() != y.shape()) throw DimensionError("tensors have different shapes");
    out << "relative_error: " << std::scientific << std::setprecision(6) << relative_error(x, y) << std::defaultfloat
        << '\n';
    if (tb) out << "compression_ratio: " << fmt_double(compression_ratio(tb->shape(), tb->ranks()), 8) << '\n';
    if (a.ssim) {
        std::vector<Index> trailing(x.shape().size() >= 2 ? x.shape().size() - 2 : 0, 0);
        if (!a.slice.empty()) trailing = parse_list<Index>(a.slice, "slice");
        out << "ssim: " << fmt_double(ssim(slice_2d(x, trailing), slice_2d(y, trailing)), 8) << '\n';
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string input, shape, ranks, grid_list = "1", method = "ntt-bcd", csv, correction = "restore";
    std::optional<double> eps;
    std::uint64_t gen_seed = 0, seed = 0;
    int repeat = 10, iters = 100;
    double delta = 0.9999;
    bool literal = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    DenseTensor full;
    std::vector<Index> true_ranks;
    if (!a.input.empty()) {
        require_store(a.input, "input");
        full = ChunkedTensorStore::open(a.input).read_all();
    } else {
        if (a.shape.empty() || a.ranks.empty()) throw UsageError("bench needs --input or both --shape and --ranks");
        GenSpec spec;
        spec.shape = parse_list<Index>(a.shape, "shape");
        spec.ranks = expand_ranks(parse_list<Index>(a.ranks, "ranks"), spec.shape.size());
        spec.seed = a.gen_seed;
        full = generate_dense(spec);
        true_ranks = spec.ranks;
    }
    const Shape shape = full.shape();

    TtConfig cfg;
    cfg.method = parse_method(a.method);
    if (a.eps) {
        cfg.eps = *a.eps;
    } else if (!a.ranks.empty()) {
        cfg.ranks = expand_ranks(parse_list<Index>(a.ranks, "ranks"), shape.size());
    } else {
        throw UsageError("bench on a stored input needs --eps or --ranks");
    }
    apply_nmf_options(cfg, a.iters, a.seed, a.delta, a.literal, a.correction);
    cfg.validate(static_cast<int>(shape.size()));

    std::vector<std::vector<int>> grids;
    {
        std::istringstream in(a.grid_list);
        std::string item;
        while (std::getline(in, item, ',')) grids.push_back(parse_grid(item, shape));
        if (grids.empty()) throw UsageError("empty --grid-list");
    }

    std::ostringstream table;
    table << "grid,p,ranks,compression,rel_error," << timing_header() << "nmf_s,total_s\n";
    for (const auto& grid : grids) {
        const int p = grid_size(grid);
        TimingReport sum;
        double nmf_s = 0.0, total_s = 0.0, err = 0.0;
        std::vector<Index> ranks;
        for (int rep = 0; rep < a.repeat; ++rep) {
            run_spmd(p, [&](Communicator& world) {
                const DistTensor x = scatter_tensor(full, ProcessGrid(grid), world.rank());
                world.barrier();
                const TtResult res = dist_ntt(x, cfg, world);
                const double e = dist_relative_error(x, res.train, world);
                if (world.rank() != 0) return;
                sum += res.timings;
                for (const auto& s : res.stages) nmf_s += s.factor_seconds;
                total_s += res.seconds;
                err = e;
                ranks = res.train.ranks();
            });
        }
        sum /= static_cast<double>(a.repeat);
        table << join(grid, "x") << ',' << p << ',' << join(ranks, "-") << ','
              << fmt_double(compression_ratio(shape, ranks)) << ',' << fmt_double(err) << ',' << timing_values(sum)
              << fmt_double(nmf_s / a.repeat) << ',' << fmt_double(total_s / a.repeat) << '\n';
    }
    out << table.str();
    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        f << table.str();
        if (!f) throw StoreError("cannot write " + a.csv);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string input, eps_list, method = "ntt-bcd", grid = "1", csv, correction = "restore";
    int iters = 100;
    std::uint64_t seed = 0;
    double delta = 0.9999;
    bool literal = false;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    require_store(a.input, "input");
    const auto store = ChunkedTensorStore::open(a.input);
    const Shape shape = store.shape();
    const auto eps_list = a.eps_list.empty() ? kDefaultEpsList : parse_list<double>(a.eps_list, "eps list");
    TtConfig cfg;
    cfg.method = parse_method(a.method);
    apply_nmf_options(cfg, a.iters, a.seed, a.delta, a.literal, a.correction);
    const auto grid = parse_grid(a.grid, shape);
    ErrorOptions eo;
    eo.probe_seed = a.seed;

    std::ostringstream table;
    table << "eps,ranks,compression,rel_error,wall_s,status\n";
    run_spmd(grid_size(grid), [&](Communicator& world) {
        const DistTensor x = load_block(store, grid, world.rank());
        const auto rows = sweep(x, eps_list, cfg, world, eo);
        if (world.rank() != 0) return;
        for (const auto& r : rows)
            table << fmt_double(r.eps) << ',' << join(r.ranks, "-") << ',' << fmt_double(r.compression) << ','
                  << fmt_double(r.rel_error) << ',' << fmt_double(r.seconds) << ','
                  << (r.ok ? std::string("ok") : "failed: " + r.error) << '\n';
    });
    out << table.str();
    if (!a.csv.empty()) {
        std::ofstream f(a.csv);
        f << table.str();
        if (!f) throw StoreError("cannot write " + a.csv);
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distributed nonnegative tensor-train decomposition", "ntt"};
    app.require_subcommand(1);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "write a seeded synthetic tensor with known TT ranks");
    gen->add_option("--shape", ga.shape, "extents, e.g. 8,8,8,8")->required();
    gen->add_option("--ranks", ga.ranks, "TT ranks (one, d-1 inner, or d+1 values)")->required();
    gen->add_option("--seed", ga.seed, "generator seed");
    gen->add_option("--noise-var", ga.noise_var, "variance of added Gaussian noise")->check(CLI::NonNegativeNumber);
    gen->add_flag("--clip,!--no-clip", ga.clip, "clip negative values after noise (default on)");
    gen->add_option("--grid", ga.grid, "rank grid p1xp2x... or a rank count");
    gen->add_option("--out", ga.out, "output store directory")->required();

    DecomposeArgs da;
    auto* dec = app.add_subcommand("decompose", "decompose a stored tensor into a tensor train");
    dec->add_option("--input,-i", da.input, "input store directory")->required();
    dec->add_option("--eps", da.eps, "per-stage relative threshold");
    dec->add_option("--ranks", da.ranks, "fixed TT ranks");
    dec->add_option("--stage-eps", da.stage_eps, "one threshold per stage");
    dec->add_flag("--global-eps", da.global_eps, "use eps/sqrt(d-1) at every stage");
    dec->add_option("--method", da.method, "ntt-bcd, ntt-mu or svd-tt")
        ->check(CLI::IsMember({"ntt-bcd", "ntt-mu", "svd-tt"}));
    dec->add_option("--grid", da.grid, "rank grid p1xp2x... or a rank count");
    add_nmf_options(dec, da.iters, da.seed, da.delta, da.literal, da.correction);
    dec->add_option("--out", da.out, "output archive directory")->required();
    dec->add_option("--probe-error", da.probes, "estimate the error from N sampled elements");

    ReconstructArgs ra;
    auto* rec = app.add_subcommand("reconstruct", "materialize an archived train as a store");
    rec->add_option("--archive", ra.archive, "archive directory")->required();
    rec->add_option("--out", ra.out, "output store directory")->required();
    rec->add_option("--chunk", ra.chunk, "chunk shape (default: one chunk)");

    MetricsArgs ma;
    auto* met = app.add_subcommand("metrics", "relative error and SSIM between two tensors");
    met->add_option("--a", ma.a, "reference store or archive")->required();
    met->add_option("--b", ma.b, "compared store or archive")->required();
    met->add_flag("--ssim", ma.ssim, "also report SSIM of a 2D slice over the first two modes");
    met->add_option("--slice", ma.slice, "indices of the remaining modes for --ssim (default zeros)");

    BenchArgs ba;
    auto* ben = app.add_subcommand("bench", "per-category timings over several grids");
    ben->add_option("--input,-i", ba.input, "input store (otherwise generated from --shape/--ranks)");
    ben->add_option("--shape", ba.shape, "generated tensor extents");
    ben->add_option("--ranks", ba.ranks, "generated TT ranks, also used as the fixed decomposition ranks");
    ben->add_option("--gen-seed", ba.gen_seed, "generator seed");
    ben->add_option("--eps", ba.eps, "choose ranks with this threshold instead");
    ben->add_option("--grid-list", ba.grid_list, "comma-separated rank counts or p1xp2x... grids");
    ben->add_option("--repeat", ba.repeat, "runs averaged per grid")->check(CLI::PositiveNumber);
    ben->add_option("--method", ba.method, "ntt-bcd, ntt-mu or svd-tt")
        ->check(CLI::IsMember({"ntt-bcd", "ntt-mu", "svd-tt"}));
    add_nmf_options(ben, ba.iters, ba.seed, ba.delta, ba.literal, ba.correction);
    ben->add_option("--csv", ba.csv, "also write the table here");

    SweepArgs sa;
    auto* swp = app.add_subcommand("sweep", "decompose once per threshold and tabulate the tradeoff");
    swp->add_option("--input,-i", sa.input, "input store directory")->required();
    swp->add_option("--eps-list", sa.eps_list, "thresholds (default 0.5,0.25,0.125,0.075,0.01,0.005,0.001)");
    swp->add_option("--method", sa.method, "ntt-bcd, ntt-mu or svd-tt")
        ->check(CLI::IsMember({"ntt-bcd", "ntt-mu", "svd-tt"}));
    swp->add_option("--grid", sa.grid, "rank grid p1xp2x... or a rank count");
    add_nmf_options(swp, sa.iters, sa.seed, sa.delta, sa.literal, sa.correction);
    swp->add_option("--csv", sa.csv, "also write the table here");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    std::mutex seen_mutex;
    std::set<std::string> seen;
    ScopedWarningHandler warnings([&](WarningKind, std::string_view message) {
        std::lock_guard lock(seen_mutex);
        if (seen.emplace(message).second) err << "warning: " << message << '\n';
    });

    try {
        if (*gen) return cmd_generate(ga, out);
        if (*dec) return cmd_decompose(da, out);
        if (*rec) return cmd_reconstruct(ra, out);
        if (*met) return cmd_metrics(ma, out);
        if (*ben) return cmd_bench(ba, out);
        if (*swp) return cmd_sweep(sa, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    }
    return kExitUsage;
}

}  // namespace ntt::cli
