#include "ntt/nmf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ntt/errors.hpp"
#include "ntt/random.hpp"
#include "ntt/spectra.hpp"

namespace ntt {
namespace {

constexpr double kMuFloor = 1e-16;

std::uint64_t restart_stream(std::uint64_t base, int restart) {
    return base ^ (static_cast<std::uint64_t>(restart) << 32);
}

void fill_uniform_w(DistFactorW& w, const NmfConfig& cfg, int restart) {
    const CounterRng rng(cfg.seed, restart_stream(streams::kNmfW, restart));
    const Index r = w.rank;
    for (Index a = 0; a < w.local.rows(); ++a)
        for (Index c = 0; c < r; ++c)
            w.local(a, c) = rng.uniform(static_cast<std::uint64_t>((w.row_offset() + a) * r + c));
}

void fill_uniform_h(DistFactorH& h, const NmfConfig& cfg, int restart) {
    const CounterRng rng(cfg.seed, restart_stream(streams::kNmfH, restart));
    for (Index c = 0; c < h.rank; ++c)
        for (Index b = 0; b < h.local.cols(); ++b)
            h.local(c, b) = rng.uniform(static_cast<std::uint64_t>(c * h.cols + h.col_offset() + b));
}

double global_norm(const Matrix& local, const MatrixGrid& grid) {
    double sq = 0.0;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::Norm);
        sq = local.squaredNorm();
    }
    return std::sqrt(grid.world().all_reduce_sum(sq));
}

double gram_norm(const Matrix& g, const MatrixGrid& grid) {
    ScopedTimer timer(grid.world().timers(), TimingCategory::Norm);
    return spectral_norm(g);
}

// Random normalised factors into w_m/h_m, copied to w/h and w_prev/h_prev.
void randomize(NmfState& s, const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg) {
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::INIT);
        fill_uniform_w(s.w_m, cfg, s.restarts);
        fill_uniform_h(s.h_m, cfg, s.restarts);
    }
    const double wn = global_norm(s.w_m.local, grid);
    const double hn = global_norm(s.h_m.local, grid);
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::INIT);
        const double target = std::sqrt(std::sqrt(s.x_norm_sq));
        s.w_m.local *= target / wn;
        s.h_m.local *= target / hn;
    }
    s.w = s.w_m;
    s.h = s.h_m;
    s.hht = dist_gram(s.h, grid);
    s.xht = dist_xht(x, s.h, grid);
    s.wtw = dist_gram(s.w, grid);
    s.wtx = dist_wtx(x, s.w, grid);
    s.lw = gram_norm(s.hht, grid);
    s.lh = gram_norm(s.wtw, grid);
}

void snapshot(NmfState& s) {
    s.w_prev = s.w;
    s.h_prev = s.h;
    s.hht_prev = s.hht;
    s.wtw_prev = s.wtw;
    s.xht_prev = s.xht;
    s.wtx_prev = s.wtx;
}

}  // namespace

void NmfConfig::validate() const {
    if (rank < 1) throw RankError("NMF rank must be at least 1");
    if (max_iters < 1) throw std::invalid_argument("NMF max_iters must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("NMF delta must lie in (0, 1)");
    if (tolerance < 0.0) throw std::invalid_argument("NMF tolerance must be nonnegative");
}

NmfState nmf_init(const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg) {
    cfg.validate();
    if (cfg.rank > std::min(x.rows, x.cols))
        throw RankError("NMF rank " + std::to_string(cfg.rank) + " exceeds min(m, n) = " +
                        std::to_string(std::min(x.rows, x.cols)));
    double negative = 0.0;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::Norm);
        negative = x.local.size() > 0 && x.local.minCoeff() < 0.0 ? 1.0 : 0.0;
    }
    if (grid.world().all_reduce_sum(negative) > 0.0)
        throw NonnegativityError("NMF input has negative entries");

    NmfState s;
    s.x_norm_sq = dist_frobenius_sq(x, grid);
    if (s.x_norm_sq == 0.0) throw DegenerateInputError("NMF input is identically zero");
    s.w_m = make_factor_w(x.rows, cfg.rank, grid);
    s.h_m = make_factor_h(cfg.rank, x.cols, grid);
    randomize(s, x, grid, cfg);
    snapshot(s);
    s.lw_prev = s.lw;
    s.lh_prev = s.lh;
    s.t = 1.0;
    s.obj = 0.5 * s.x_norm_sq;
    return s;
}

void bcd_step(NmfState& s, const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg) {
    TimingReport& timers = grid.world().timers();

    // W given H.
    s.lw = gram_norm(s.hht, grid);
    if (s.lw > 0.0) {
        Matrix grad;
        {
            ScopedTimer timer(timers, TimingCategory::MM);
            grad.noalias() = s.w_m.local * s.hht;
        }
        ScopedTimer timer(timers, TimingCategory::MAD);
        grad -= s.xht.local;
        s.w.local = (s.w_m.local - grad / s.lw).cwiseMax(0.0);
    } else {
        warn(WarningKind::ZeroGram, "H H^T is zero; W update skipped");
        ScopedTimer timer(timers, TimingCategory::MAD);
        s.w.local = s.w_m.local.cwiseMax(0.0);
    }

    // Column L1 normalisation of W; the scale moves into H_m so W H_m is unchanged.
    Vector sums;
    {
        ScopedTimer timer(timers, TimingCategory::Norm);
        sums = s.w.local.colwise().sum().transpose();
    }
    const std::vector<double> totals =
        grid.world().all_reduce_sum(std::span<const double>(sums.data(), static_cast<std::size_t>(sums.size())));
    {
        ScopedTimer timer(timers, TimingCategory::MAD);
        for (Index c = 0; c < sums.size(); ++c) {
            const double total = totals[static_cast<std::size_t>(c)];
            if (total <= 0.0) continue;
            s.w.local.col(c) /= total;
            s.h_m.local.row(c) *= total;
        }
    }
    s.wtw = dist_gram(s.w, grid);

    // H given W.
    s.wtx = dist_wtx(x, s.w, grid);
    s.lh = gram_norm(s.wtw, grid);
    const double step = cfg.literal_steps ? std::sqrt(s.lh) : s.lh;
    if (step > 0.0) {
        Matrix grad;
        {
            ScopedTimer timer(timers, TimingCategory::MM);
            grad.noalias() = s.wtw * s.h_m.local;
        }
        ScopedTimer timer(timers, TimingCategory::MAD);
        grad -= s.wtx.local;
        s.h.local = (s.h_m.local - grad / step).cwiseMax(0.0);
    } else {
        warn(WarningKind::ZeroGram, "W^T W is zero; H update skipped");
        ScopedTimer timer(timers, TimingCategory::MAD);
        s.h.local = s.h_m.local.cwiseMax(0.0);
    }
    s.hht = dist_gram(s.h, grid);
    s.xht = dist_xht(x, s.h, grid);
    ++s.iteration;
}

BcdBranch bcd_correct_or_extrapolate(NmfState& s, const DistMatrix& x, const MatrixGrid& grid,
                                     const NmfConfig& cfg) {
    const double current = nmf_objective(s, grid);
    const double lw_now = gram_norm(s.hht, grid);
    const double lh_now = s.lh;
    BcdBranch branch;
    if (current >= s.obj) {
        if (cfg.correction == CorrectionMode::Restore) {
            s.w = s.w_prev;
            s.h = s.h_prev;
            s.hht = s.hht_prev;
            s.wtw = s.wtw_prev;
            s.xht = s.xht_prev;
            s.wtx = s.wtx_prev;
            s.w_m = s.w;
            s.h_m = s.h;
        } else {
            ++s.restarts;
            randomize(s, x, grid, cfg);
            snapshot(s);
        }
        branch = BcdBranch::Corrected;
    } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * s.t * s.t));
        const double w = (s.t - 1.0) / t_next;
        const double ww = lw_now > 0.0 ? std::min(w, cfg.delta * std::sqrt(s.lw_prev / lw_now)) : w;
        const double wh = lh_now > 0.0 ? std::min(w, cfg.delta * std::sqrt(s.lh_prev / lh_now)) : w;
        {
            ScopedTimer timer(grid.world().timers(), TimingCategory::MAD);
            s.w_m.local = s.w.local + ww * (s.w.local - s.w_prev.local);
            s.h_m.local = s.h.local + wh * (s.h.local - s.h_prev.local);
        }
        snapshot(s);
        s.t = t_next;
        s.obj = current;
        branch = BcdBranch::Extrapolated;
    }
    s.lw_prev = lw_now;
    s.lh_prev = lh_now;
    return branch;
}

void mu_step(NmfState& s, const DistMatrix& x, const MatrixGrid& grid) {
    TimingReport& timers = grid.world().timers();
    Matrix denom;
    {
        ScopedTimer timer(timers, TimingCategory::MM);
        denom.noalias() = s.w.local * s.hht;
    }
    {
        ScopedTimer timer(timers, TimingCategory::MAD);
        s.w.local = s.w.local.cwiseProduct(s.xht.local).cwiseQuotient((denom.array() + kMuFloor).matrix());
    }
    s.wtw = dist_gram(s.w, grid);
    s.wtx = dist_wtx(x, s.w, grid);
    {
        ScopedTimer timer(timers, TimingCategory::MM);
        denom.noalias() = s.wtw * s.h.local;
    }
    {
        ScopedTimer timer(timers, TimingCategory::MAD);
        s.h.local = s.h.local.cwiseProduct(s.wtx.local).cwiseQuotient((denom.array() + kMuFloor).matrix());
    }
    s.hht = dist_gram(s.h, grid);
    s.xht = dist_xht(x, s.h, grid);
    ++s.iteration;
}

double nmf_objective(const NmfState& s, const MatrixGrid& grid) {
    double cross = 0.0;
    double quad = 0.0;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::Norm);
        cross = s.wtx.local.cwiseProduct(s.h.local).sum();
        quad = s.wtw.cwiseProduct(s.hht).sum();
    }
    cross = grid.world().all_reduce_sum(cross);
    return std::max(0.0, 0.5 * (s.x_norm_sq - 2.0 * cross + quad));
}

NmfResult run_nmf(const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg, const NmfObserver& observer) {
    NmfState s = nmf_init(x, grid, cfg);
    NmfResult result;
    result.history.reserve(static_cast<std::size_t>(cfg.max_iters));
    double previous = s.obj;
    int stalled = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        NmfIteration rec;
        rec.iteration = it + 1;
        if (cfg.algorithm == NmfAlgorithm::BCD) {
            bcd_step(s, x, grid, cfg);
            rec.objective = nmf_objective(s, grid);
            rec.corrected = bcd_correct_or_extrapolate(s, x, grid, cfg) == BcdBranch::Corrected;
            rec.accepted = s.obj;
            if (rec.corrected) ++result.corrections;
        } else {
            mu_step(s, x, grid);
            rec.objective = nmf_objective(s, grid);
            rec.accepted = rec.objective;
        }
        result.history.push_back(rec);
        if (observer) observer(s, rec);
        // Two corrections in a row: even the plain step from the accepted point fails to descend.
        stalled = rec.corrected ? stalled + 1 : 0;
        if (cfg.tolerance > 0.0 && stalled >= 2) break;
        if (cfg.tolerance > 0.0 && !rec.corrected && previous > 0.0 &&
            std::abs(previous - rec.accepted) <= cfg.tolerance * previous)
            break;
        previous = rec.accepted;
    }
    result.objective = cfg.algorithm == NmfAlgorithm::BCD ? s.obj : nmf_objective(s, grid);
    result.w = std::move(s.w);
    result.h = std::move(s.h);
    return result;
}

}  // namespace ntt
