#include "ntt/tt_driver.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ntt/errors.hpp"
#include "ntt/random.hpp"

namespace ntt {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

TimingReport difference(const TimingReport& after, const TimingReport& before) {
    TimingReport out;
    for (auto c : TimingReport::all()) out.add(c, after.seconds(c) - before.seconds(c));
    return out;
}

void require_nonnegative_input(const DistTensor& a, Communicator& world) {
    double bad = a.local.is_nonnegative() ? 0.0 : 1.0;
    if (world.all_reduce_sum(bad) > 0.0)
        throw NonnegativityError("nonnegative tensor train requires a nonnegative input tensor");
}

}  // namespace

std::string_view method_name(TtMethod m) noexcept {
    switch (m) {
    case TtMethod::NttBcd: return "ntt-bcd";
    case TtMethod::NttMu: return "ntt-mu";
    case TtMethod::SvdTt: return "svd-tt";
    }
    return "unknown";
}

TtMethod parse_method(std::string_view name) {
    if (name == "ntt-bcd") return TtMethod::NttBcd;
    if (name == "ntt-mu") return TtMethod::NttMu;
    if (name == "svd-tt") return TtMethod::SvdTt;
    throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected ntt-bcd, ntt-mu or svd-tt)");
}

double TtConfig::stage_epsilon(int stage, int d) const {
    if (!stage_eps.empty()) return stage_eps.at(static_cast<std::size_t>(stage - 1));
    if (global_eps && d > 2) return eps / std::sqrt(static_cast<double>(d - 1));
    return eps;
}

void TtConfig::validate(int d) const {
    if (d < 1) throw DimensionError("tensor must have at least one mode");
    if (ranks) {
        const auto& r = *ranks;
        if (static_cast<int>(r.size()) != d + 1)
            throw RankError("rank vector needs " + std::to_string(d + 1) + " entries, got " +
                            std::to_string(r.size()));
        if (r.front() != 1 || r.back() != 1) throw RankError("boundary ranks r_0 and r_d must be 1");
        for (Index v : r)
            if (v < 1) throw RankError("ranks must be positive");
    } else if (!stage_eps.empty()) {
        if (static_cast<int>(stage_eps.size()) != d - 1)
            throw std::invalid_argument("per-stage eps needs " + std::to_string(d - 1) + " values");
        for (double e : stage_eps)
            if (!(e > 0.0)) throw std::invalid_argument("eps must be positive");
    } else if (!(eps > 0.0)) {
        throw std::invalid_argument("eps must be positive");
    }
    if (method != TtMethod::SvdTt) nmf.validate();
}

int stage_grid_rows(int p1, Index rows) {
    for (int g = p1; g >= 1; --g)
        if (p1 % g == 0 && rows % g == 0) return g;
    return 1;
}

StageFactors svd_tt_factors(const DistMatrix& x, Index r, const GramEigen& ge, const MatrixGrid& grid) {
    const Index side = ge.eigen.values.size();
    if (r < 1 || r > side)
        throw RankError("SVD-TT rank " + std::to_string(r) + " outside [1, " + std::to_string(side) + "]");
    StageFactors f;
    if (ge.left_side) {
        // W = U_r S_r and H = S_r^-1 U_r^T X = V_r^T; rows with a zero singular value stay zero.
        Vector sigma(r);
        for (Index k = 0; k < r; ++k) sigma[k] = std::sqrt(std::max(ge.eigen.values[k], 0.0));
        f.w = distribute_w(ge.eigen.vectors.leftCols(r) * sigma.asDiagonal(), grid);
        const DistFactorW u = distribute_w(ge.eigen.vectors.leftCols(r), grid);
        f.h = dist_wtx(x, u, grid);
        for (Index k = 0; k < r; ++k) f.h.local.row(k) *= sigma[k] > 0.0 ? 1.0 / sigma[k] : 0.0;
    } else {
        f.h = distribute_h(ge.eigen.vectors.leftCols(r).transpose(), grid);
        f.w = dist_xht(x, f.h, grid);
    }
    return f;
}

StageFactors svd_tt_stage(const DistMatrix& x, Index r, const MatrixGrid& grid, Index gram_cap) {
    if (r < 1 || r > std::min(x.rows, x.cols))
        throw RankError("SVD-TT rank " + std::to_string(r) + " outside [1, min(m, n)]");
    return svd_tt_factors(x, r, dist_gram_eigen(x, grid, true, gram_cap), grid);
}

TtResult dist_ntt(const DistTensor& a, const TtConfig& cfg, Communicator& world) {
    const int d = static_cast<int>(a.global_shape.size());
    cfg.validate(d);
    const ProcessGrid tensor_grid(a.grid);
    if (tensor_grid.size() != world.size())
        throw DimensionError("tensor grid has " + std::to_string(tensor_grid.size()) + " ranks but the world has " +
                             std::to_string(world.size()));
    require_divisible(a.global_shape, a.grid);
    if (cfg.ranks)
        for (int l = 1; l < d; ++l)
            if ((*cfg.ranks)[l] > std::min((*cfg.ranks)[l - 1] * a.global_shape[l - 1],
                                           element_count(std::span(a.global_shape).subspan(l)))) {
                RankError e("rank r_" + std::to_string(l) + " = " + std::to_string((*cfg.ranks)[l]) +
                            " exceeds min(r_{l-1} n_l, n_{l+1} ... n_d)");
                e.set_stage(l);
                throw e;
            }
    if (cfg.method != TtMethod::SvdTt) require_nonnegative_input(a, world);

    const auto start = Clock::now();
    const TimingReport timers_start = world.timers();
    TtResult result;
    std::vector<DenseTensor> cores;
    const int p = world.size();
    const int p1 = a.grid.front();

    if (d == 1) {
        DenseTensor full = gather_tensor(a, world);
        cores.push_back(full.reshaped({1, a.global_shape[0], 1}));
        result.train = TensorTrain(std::move(cores));
        result.timings = difference(world.timers(), timers_start);
        result.seconds = seconds_since(start);
        return result;
    }

    Index r_prev = 1;
    DistFactorH h_prev;
    std::unique_ptr<MatrixGrid> grid;
    for (int l = 1; l < d; ++l) {
        const auto stage_start = Clock::now();
        const TimingReport stage_timers = world.timers();
        StageReport rep;
        rep.stage = l;
        try {
            const Index n_l = a.global_shape[l - 1];
            const Index rows = r_prev * n_l;
            const Index cols = element_count(std::span(a.global_shape).subspan(l));
            const int g = stage_grid_rows(p1, rows);
            grid = std::make_unique<MatrixGrid>(world, g, p / g);
            rep.rows = rows;
            rep.cols = cols;
            rep.grid_rows = g;
            rep.grid_cols = p / g;

            const DistMatrix x = l == 1 ? dist_reshape(a, rows, cols, *grid, cfg.reshape)
                                        : dist_reshape(h_prev, rows, cols, *grid, cfg.reshape);

            std::optional<GramEigen> ge;
            Index r = 0;
            if (cfg.ranks) {
                r = (*cfg.ranks)[l];
            } else {
                rep.eps = cfg.stage_epsilon(l, d);
                ge = dist_gram_eigen(x, *grid, cfg.method == TtMethod::SvdTt, cfg.gram_cap);
                SpectrumResult spectrum;
                for (Index k = 0; k < ge->eigen.values.size(); ++k)
                    spectrum.singular_values.push_back(std::sqrt(std::max(ge->eigen.values[k], 0.0)));
                r = choose_rank(spectrum, rep.eps);
                rep.singular_values = std::move(spectrum.singular_values);
            }
            rep.rank = r;

            StageFactors f;
            const auto factor_start = Clock::now();
            if (cfg.method == TtMethod::SvdTt) {
                if (!ge) ge = dist_gram_eigen(x, *grid, true, cfg.gram_cap);
                if (rep.singular_values.empty())
                    for (Index k = 0; k < ge->eigen.values.size(); ++k)
                        rep.singular_values.push_back(std::sqrt(std::max(ge->eigen.values[k], 0.0)));
                f = svd_tt_factors(x, r, *ge, *grid);
            } else {
                NmfConfig nc = cfg.nmf;
                nc.rank = r;
                nc.algorithm = cfg.method == TtMethod::NttMu ? NmfAlgorithm::MU : NmfAlgorithm::BCD;
                nc.seed = splitmix64(cfg.nmf.seed ^ static_cast<std::uint64_t>(l));
                auto nmf = run_nmf(x, *grid, nc);
                rep.nmf_corrections = nmf.corrections;
                f.w = std::move(nmf.w);
                f.h = std::move(nmf.h);
            }
            rep.factor_seconds = seconds_since(factor_start);
            if (cfg.stage_residuals) {
                rep.x_norm = std::sqrt(dist_frobenius_sq(x, *grid));
                rep.residual = dist_residual_norm(x, f.w, f.h, *grid);
            }

            const Matrix w = gather_w(f.w, *grid);
            cores.emplace_back(Shape{r_prev, n_l, r},
                               std::vector<double>(w.data(), w.data() + w.size()));
            if (l == d - 1) {
                const Matrix h = gather_h(f.h, *grid);
                cores.emplace_back(Shape{r, a.global_shape[d - 1], 1},
                                   std::vector<double>(h.data(), h.data() + h.size()));
            }
            h_prev = std::move(f.h);
            r_prev = r;
        } catch (Error& e) {
            if (!e.stage()) e.set_stage(l);
            throw;
        }
        rep.timings = difference(world.timers(), stage_timers);
        rep.seconds = seconds_since(stage_start);
        result.stages.push_back(std::move(rep));
    }
    result.train = TensorTrain(std::move(cores));
    result.timings = difference(world.timers(), timers_start);
    result.seconds = seconds_since(start);
    return result;
}

bool uses_probes(Index elements, const ErrorOptions& options) noexcept {
    return options.force_probes || elements > options.full_threshold;
}

double dist_relative_error(const DistTensor& a, const TensorTrain& tt, Communicator& world,
                           const ErrorOptions& options) {
    if (tt.shape() != a.global_shape) throw DimensionError("train shape does not match the tensor");
    const Index total = element_count(a.global_shape);
    double sums[2] = {0.0, 0.0};
    if (!uses_probes(total, options)) {
        const Shape offset = a.offset();
        const DenseTensor block = reconstruct_block(tt, offset, a.block_shape());
        const auto ref = a.local.data();
        const auto got = block.data();
        for (std::size_t k = 0; k < ref.size(); ++k) {
            const double diff = ref[k] - got[k];
            sums[0] += diff * diff;
            sums[1] += ref[k] * ref[k];
        }
    } else {
        if (options.probes < 1) throw std::invalid_argument("probe count must be positive");
        const CounterRng rng(options.probe_seed, streams::kProbe);
        const Shape offset = a.offset();
        const Shape extent = a.block_shape();
        const std::size_t d = a.global_shape.size();
        Shape idx(d), local(d);
        for (Index k = 0; k < options.probes; ++k) {
            bool mine = true;
            for (std::size_t m = 0; m < d; ++m) {
                const auto counter = static_cast<std::uint64_t>(k) * d + m;
                idx[m] = static_cast<Index>(rng.bits(counter) % static_cast<std::uint64_t>(a.global_shape[m]));
                local[m] = idx[m] - offset[m];
                if (local[m] < 0 || local[m] >= extent[m]) mine = false;
            }
            if (!mine) continue;
            const double ref = a.local.at(local);
            const double diff = ref - tt_element(tt, idx);
            sums[0] += diff * diff;
            sums[1] += ref * ref;
        }
    }
    const auto reduced = world.all_reduce_sum(std::span<const double>(sums, 2));
    if (reduced[1] == 0.0) throw DegenerateInputError("relative error undefined: reference tensor is zero");
    return std::sqrt(reduced[0] / reduced[1]);
}

std::vector<SweepRow> sweep(const DistTensor& a, const std::vector<double>& eps_list, const TtConfig& cfg,
                            Communicator& world, const ErrorOptions& error_options) {
    if (eps_list.empty()) throw std::invalid_argument("sweep needs at least one eps value");
    std::vector<SweepRow> rows;
    for (double eps : eps_list) {
        SweepRow row;
        row.eps = eps;
        try {
            TtConfig c = cfg;
            c.eps = eps;
            c.stage_eps.clear();
            const auto start = Clock::now();
            row.result = dist_ntt(a, c, world);
            row.seconds = seconds_since(start);
            row.ranks = row.result.train.ranks();
            row.compression = compression_ratio(a.global_shape, row.ranks);
            row.rel_error = dist_relative_error(a, row.result.train, world, error_options);
        } catch (const Error& e) {
            row.ok = false;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace ntt
