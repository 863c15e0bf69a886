#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ntt/dist_matrix.hpp"

namespace ntt {

enum class NmfAlgorithm { BCD, MU };

/// What the BCD correction branch does when an iteration fails to decrease
/// the objective. Restore returns to the last accepted iterate (a plain
/// proximal step follows, which is guaranteed to descend); Reinitialize draws
/// fresh random factors with an advanced restart seed.
enum class CorrectionMode { Restore, Reinitialize };

struct NmfConfig {
    Index rank = 1;
    int max_iters = 100;
    double delta = 0.9999;
    std::uint64_t seed = 0;
    NmfAlgorithm algorithm = NmfAlgorithm::BCD;
    double tolerance = 0.0;  ///< relative objective change for early exit; 0 disables
    bool literal_steps = false;  ///< H step divides by sqrt(||W^T W||) instead of ||W^T W||
    CorrectionMode correction = CorrectionMode::Restore;

    void validate() const;
};

struct NmfState {
    DistFactorW w, w_m, w_prev;
    DistFactorH h, h_m, h_prev;

    Matrix hht;       ///< H H^T of the current H
    Matrix wtw;       ///< W^T W of the current W
    DistFactorW xht;  ///< X H^T of the current H
    DistFactorH wtx;  ///< W^T X of the current W

    // Caches belonging to (w_prev, h_prev), restored by the correction branch.
    Matrix hht_prev, wtw_prev;
    DistFactorW xht_prev;
    DistFactorH wtx_prev;

    double t = 1.0;
    double obj = 0.0;          ///< last accepted objective
    double x_norm_sq = 0.0;
    double lw_prev = 0.0;      ///< ||H H^T|| of the previous iteration
    double lh_prev = 0.0;      ///< ||W^T W|| of the previous iteration
    double lw = 0.0;
    double lh = 0.0;
    int iteration = 0;
    int restarts = 0;
};

/// Random nonnegative factors keyed by global element index (the same global
/// factors for any grid), scaled so ||W_m||_F^2 = ||H_m||_F^2 = ||X||_F.
NmfState nmf_init(const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg);

/// One projected-gradient sweep: W from (W_m, H), column L1 normalisation of W
/// with the scale moved into H_m, then H from (W, H_m). Refreshes all caches.
void bcd_step(NmfState& s, const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg);

enum class BcdBranch { Extrapolated, Corrected };

/// Accept the step and extrapolate, or correct if the objective did not drop.
BcdBranch bcd_correct_or_extrapolate(NmfState& s, const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg);

/// Multiplicative update of W then H.
void mu_step(NmfState& s, const DistMatrix& x, const MatrixGrid& grid);

/// 0.5 ||X - W H||_F^2 from the cached Grams and products.
double nmf_objective(const NmfState& s, const MatrixGrid& grid);

struct NmfIteration {
    int iteration = 0;
    double objective = 0.0;  ///< objective of this iteration's step
    double accepted = 0.0;   ///< stored objective after the iteration (BCD), equal to objective for MU
    bool corrected = false;
};

using NmfObserver = std::function<void(const NmfState&, const NmfIteration&)>;

struct NmfResult {
    DistFactorW w;
    DistFactorH h;
    std::vector<NmfIteration> history;
    double objective = 0.0;
    int corrections = 0;
};

NmfResult run_nmf(const DistMatrix& x, const MatrixGrid& grid, const NmfConfig& cfg, const NmfObserver& observer = {});

}  // namespace ntt
