#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ntt/dist_matrix.hpp"
#include "ntt/nmf.hpp"
#include "ntt/spectra.hpp"
#include "ntt/tensor.hpp"

namespace ntt {

enum class TtMethod { NttBcd, NttMu, SvdTt };

std::string_view method_name(TtMethod m) noexcept;
/// Accepts "ntt-bcd", "ntt-mu", "svd-tt"; throws std::invalid_argument otherwise.
TtMethod parse_method(std::string_view name);

struct TtConfig {
    double eps = 0.1;
    std::vector<double> stage_eps;  ///< optional per-stage thresholds (d - 1 values)
    bool global_eps = false;        ///< use eps / sqrt(d - 1) at every stage
    std::optional<std::vector<Index>> ranks;  ///< fixed (r_0, ..., r_d); bypasses the heuristic
    TtMethod method = TtMethod::NttBcd;
    NmfConfig nmf;  ///< rank and algorithm are set per stage
    Index gram_cap = kDefaultGramCap;
    ReshapeOptions reshape;
    bool stage_residuals = false;  ///< record ||X - W H|| per stage (one extra pass)

    /// Threshold for stage l (1-based) of a d-way decomposition.
    double stage_epsilon(int stage, int d) const;
    void validate(int d) const;
};

struct StageReport {
    int stage = 0;
    double eps = 0.0;  ///< 0 when the rank was fixed
    Index rank = 0;
    Index rows = 0;
    Index cols = 0;
    int grid_rows = 1;
    int grid_cols = 1;
    std::vector<double> singular_values;  ///< empty when the rank was fixed and the method is NMF
    double x_norm = 0.0;
    double residual = -1.0;  ///< ||X - W H||_F when stage_residuals is on
    int nmf_corrections = 0;
    double factor_seconds = 0.0;  ///< wall time of the NMF or SVD factorization
    TimingReport timings;
    double seconds = 0.0;
};

struct TtResult {
    TensorTrain train;
    std::vector<StageReport> stages;
    TimingReport timings;
    double seconds = 0.0;
};

/// Largest divisor of p1 that divides `rows` (the stage grid row count).
int stage_grid_rows(int p1, Index rows);

/// Collective over `world`. `a` must be laid out on a grid whose size equals
/// world.size(). Every rank returns the same train.
TtResult dist_ntt(const DistTensor& a, const TtConfig& cfg, Communicator& world);

struct StageFactors {
    DistFactorW w;
    DistFactorH h;
};

/// Truncated SVD factors from the Gram eigenvectors: W H is the orthogonal
/// projection of X onto its leading r singular directions.
StageFactors svd_tt_stage(const DistMatrix& x, Index r, const MatrixGrid& grid, Index gram_cap = kDefaultGramCap);
StageFactors svd_tt_factors(const DistMatrix& x, Index r, const GramEigen& ge, const MatrixGrid& grid);

struct ErrorOptions {
    Index full_threshold = 100'000'000;  ///< above this element count, sample probes
    Index probes = 10'000;
    std::uint64_t probe_seed = 0;
    bool force_probes = false;
};

/// ||A - TT||_F / ||A||_F, exact (blockwise reconstruction) or estimated from
/// sampled tt_element probes. Collective.
double dist_relative_error(const DistTensor& a, const TensorTrain& tt, Communicator& world,
                           const ErrorOptions& options = {});
bool uses_probes(Index elements, const ErrorOptions& options) noexcept;

struct SweepRow {
    double eps = 0.0;
    std::vector<Index> ranks;
    double compression = 0.0;
    double rel_error = 0.0;
    double seconds = 0.0;
    bool ok = true;
    std::string error;
    TtResult result;
};

/// One decomposition per threshold. Failed rows are marked and the sweep continues.
std::vector<SweepRow> sweep(const DistTensor& a, const std::vector<double>& eps_list, const TtConfig& cfg,
                            Communicator& world, const ErrorOptions& error_options = {});

}  // namespace ntt
