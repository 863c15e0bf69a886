#pragma once

#include <filesystem>
#include <vector>

#include "ntt/comm.hpp"
#include "ntt/tensor.hpp"

namespace ntt {

/// Block of a d-dimensional tensor owned by one rank of a p_1 x ... x p_d grid.
struct DistTensor {
    Shape global_shape;
    std::vector<int> grid;
    std::vector<int> coords;
    DenseTensor local;

    Shape block_shape() const;
    Shape offset() const;
};

/// Throws DimensionError unless grid[k] divides shape[k] for every mode.
void require_divisible(std::span<const Index> shape, std::span<const int> grid);

/// This rank's block of `full` (no communication).
DistTensor scatter_tensor(const DenseTensor& full, const ProcessGrid& grid, int rank);
/// Collective: every rank receives the assembled global tensor.
DenseTensor gather_tensor(const DistTensor& t, Communicator& comm);

/// 2D block distribution: rank (i, j) owns rows [i m/p_r, (i+1) m/p_r) and
/// columns [j n/p_c, (j+1) n/p_c).
struct DistMatrix {
    Index rows = 0;
    Index cols = 0;
    int grid_rows = 1;
    int grid_cols = 1;
    int i = 0;
    int j = 0;
    Matrix local;

    Index row_offset() const noexcept { return i * (rows / grid_rows); }
    Index col_offset() const noexcept { return j * (cols / grid_cols); }
};

/// Left factor (m x r) split over all p ranks: row block i of the matrix grid
/// is divided as evenly as possible among the p_c ranks of processor row i.
/// Rank (i, j) holds global slot i * p_c + j; slots appear in rank order and
/// may be empty when a block has fewer rows than p_c.
struct DistFactorW {
    Index rows = 0;
    Index rank = 0;
    int slot = 0;
    int slots = 1;
    Index offset = 0;  ///< first global row
    Matrix local;

    Index row_offset() const noexcept { return offset; }
};

/// Right factor (r x n) split over all p ranks: column block j is divided
/// among the p_r ranks of processor column j. Rank (i, j) holds global slot
/// j * p_r + i.
struct DistFactorH {
    Index rank = 0;
    Index cols = 0;
    int slot = 0;
    int slots = 1;
    Index offset = 0;  ///< first global column
    Matrix local;

    Index col_offset() const noexcept { return offset; }
};

/// Start of part k when `extent` items are split into `parts` near-equal runs.
inline Index part_begin(Index extent, int parts, int k) noexcept { return extent * k / parts; }
inline Index part_size(Index extent, int parts, int k) noexcept {
    return part_begin(extent, parts, k + 1) - part_begin(extent, parts, k);
}

DistMatrix distribute_matrix(const Matrix& full, const MatrixGrid& grid);
DistFactorW distribute_w(const Matrix& w, const MatrixGrid& grid);
DistFactorH distribute_h(const Matrix& h, const MatrixGrid& grid);

/// Zero-initialised layouts; throw DimensionError unless p_r | rows (W) or p_c | cols (H).
DistFactorW make_factor_w(Index rows, Index rank, const MatrixGrid& grid);
DistFactorH make_factor_h(Index rank, Index cols, const MatrixGrid& grid);

Matrix gather_matrix(const DistMatrix& x, const MatrixGrid& grid);
Matrix gather_w(const DistFactorW& w, const MatrixGrid& grid);
Matrix gather_h(const DistFactorH& h, const MatrixGrid& grid);

// ---------------------------------------------------------------------------
// Reshape through a chunked store

/// Scratch root for reshape stores: $NTT_WORKDIR if set, else the system temp dir.
std::filesystem::path scratch_root();

struct ReshapeOptions {
    std::filesystem::path scratch;  ///< empty: scratch_root()
    bool keep_store = false;
};

/// Collective over target.world(). Every rank writes its block as one chunk,
/// then assembles its block of the row-major (rows x cols) reshape on the
/// target grid from the chunks it overlaps.
DistMatrix dist_reshape(const DistTensor& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options = {});
DistMatrix dist_reshape(const DistMatrix& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options = {});
/// H blocks are written as equal-width column chunks in slot order.
DistMatrix dist_reshape(const DistFactorH& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options = {});

// ---------------------------------------------------------------------------
// Kernels

/// H H^T, replicated on every rank.
Matrix dist_gram(const DistFactorH& h, const MatrixGrid& grid);
/// W^T W, replicated on every rank.
Matrix dist_gram(const DistFactorW& w, const MatrixGrid& grid);

/// X H^T in the W layout: gather H over the column group, multiply locally,
/// reduce-scatter over the row group.
DistFactorW dist_xht(const DistMatrix& x, const DistFactorH& h, const MatrixGrid& grid);
/// W^T X in the H layout: gather W over the row group, multiply locally,
/// reduce-scatter over the column group.
DistFactorH dist_wtx(const DistMatrix& x, const DistFactorW& w, const MatrixGrid& grid);

/// ||X - W H||_F evaluated blockwise without cancellation.
double dist_residual_norm(const DistMatrix& x, const DistFactorW& w, const DistFactorH& h, const MatrixGrid& grid);
/// ||X||_F^2.
double dist_frobenius_sq(const DistMatrix& x, const MatrixGrid& grid);

}  // namespace ntt
