#include "ntt/dist_matrix.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>

#include "ntt/errors.hpp"
#include "ntt/store.hpp"

namespace fs = std::filesystem;

namespace ntt {
namespace {

void require_divides(Index extent, Index parts, const std::string& what) {
    if (parts < 1 || extent % parts != 0)
        throw DimensionError(what + ": " + std::to_string(parts) + " does not divide " + std::to_string(extent));
}

struct ChunkSource {
    Shape store_shape;
    Shape chunk_shape;
    std::function<void(const ChunkedTensorStore&)> write;  ///< this rank's chunks
};

DistMatrix reshape_via_store(const ChunkSource& src, Index rows, Index cols, const MatrixGrid& target,
                             const ReshapeOptions& options) {
    Communicator& world = target.world();
    if (rows <= 0 || cols <= 0 || rows * cols != element_count(src.store_shape))
        throw DimensionError("dist_reshape: " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not match " + std::to_string(element_count(src.store_shape)) + " elements");
    require_divides(rows, target.rows(), "dist_reshape rows");
    require_divides(cols, target.cols(), "dist_reshape cols");

    const fs::path root = options.scratch.empty() ? scratch_root() : options.scratch;
    const fs::path dir =
        root / ("ntt-reshape-" + world.session_id() + "-" + std::to_string(world.next_sequence()));

    if (world.rank() == 0) ChunkedTensorStore::create(dir, src.store_shape, src.chunk_shape);
    world.barrier();
    const auto store = ChunkedTensorStore::open(dir);
    src.write(store);
    world.barrier();

    DistMatrix out;
    out.rows = rows;
    out.cols = cols;
    out.grid_rows = target.rows();
    out.grid_cols = target.cols();
    out.i = target.i();
    out.j = target.j();
    const Index local_rows = rows / target.rows();
    const Index local_cols = cols / target.cols();
    out.local.resize(local_rows, local_cols);
    {
        StoreReader reader(store);
        for (Index r = 0; r < local_rows; ++r) {
            const Index flat = (out.row_offset() + r) * cols + out.col_offset();
            reader.read_flat_range(flat, std::span<double>(out.local.row(r).data(), static_cast<std::size_t>(local_cols)));
        }
    }
    world.barrier();
    if (world.rank() == 0 && !options.keep_store) {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    return out;
}

}  // namespace

Shape DistTensor::block_shape() const {
    Shape b(global_shape.size());
    for (std::size_t k = 0; k < b.size(); ++k) b[k] = global_shape[k] / grid[k];
    return b;
}

Shape DistTensor::offset() const {
    const Shape b = block_shape();
    Shape o(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) o[k] = coords[k] * b[k];
    return o;
}

void require_divisible(std::span<const Index> shape, std::span<const int> grid) {
    if (shape.size() != grid.size())
        throw DimensionError("grid has " + std::to_string(grid.size()) + " dimensions, tensor has " +
                             std::to_string(shape.size()));
    for (std::size_t k = 0; k < shape.size(); ++k)
        if (grid[k] < 1 || shape[k] % grid[k] != 0)
            throw DimensionError("grid extent " + std::to_string(grid[k]) + " does not divide mode " +
                                 std::to_string(k) + " of extent " + std::to_string(shape[k]));
}

DistTensor scatter_tensor(const DenseTensor& full, const ProcessGrid& grid, int rank) {
    require_divisible(full.shape(), grid.dims());
    DistTensor t;
    t.global_shape = full.shape();
    t.grid = grid.dims();
    t.coords = grid.coords(rank);
    const Shape block = t.block_shape();
    const Shape off = t.offset();
    t.local = DenseTensor(block);
    const Index last = block.back();
    const Index rows = t.local.size() / last;
    const std::size_t d = block.size();
    Shape idx(d);
    for (Index r = 0; r < rows; ++r) {
        Index rr = r;
        for (std::size_t k = d - 1; k-- > 0;) {
            idx[k] = off[k] + rr % block[k];
            rr /= block[k];
        }
        idx[d - 1] = off[d - 1];
        std::copy_n(full.data().data() + full.flat_index(idx), last, t.local.data().data() + r * last);
    }
    return t;
}

DenseTensor gather_tensor(const DistTensor& t, Communicator& comm) {
    const ProcessGrid grid(t.grid);
    if (grid.size() != comm.size()) throw DimensionError("gather_tensor: grid does not match communicator");
    const Matrix flat = Eigen::Map<const Matrix>(t.local.data().data(), 1, t.local.size());
    const auto blocks = comm.all_gather(flat);
    DenseTensor full(t.global_shape);
    const Shape block = t.block_shape();
    const std::size_t d = block.size();
    const Index last = block.back();
    const Index rows = element_count(block) / last;
    Shape idx(d);
    for (int r = 0; r < grid.size(); ++r) {
        const auto c = grid.coords(r);
        for (Index row = 0; row < rows; ++row) {
            Index rr = row;
            for (std::size_t k = d - 1; k-- > 0;) {
                idx[k] = c[k] * block[k] + rr % block[k];
                rr /= block[k];
            }
            idx[d - 1] = c[d - 1] * block[d - 1];
            std::copy_n(blocks[r].data() + row * last, last, full.data().data() + full.flat_index(idx));
        }
    }
    return full;
}

// ---------------------------------------------------------------------------

DistMatrix distribute_matrix(const Matrix& full, const MatrixGrid& grid) {
    require_divides(full.rows(), grid.rows(), "distribute_matrix rows");
    require_divides(full.cols(), grid.cols(), "distribute_matrix cols");
    DistMatrix x;
    x.rows = full.rows();
    x.cols = full.cols();
    x.grid_rows = grid.rows();
    x.grid_cols = grid.cols();
    x.i = grid.i();
    x.j = grid.j();
    x.local = full.block(x.row_offset(), x.col_offset(), x.rows / x.grid_rows, x.cols / x.grid_cols);
    return x;
}

DistFactorW make_factor_w(Index rows, Index rank, const MatrixGrid& grid) {
    require_divides(rows, grid.rows(), "W layout (rows over processor rows)");
    const Index block = rows / grid.rows();
    DistFactorW w;
    w.rows = rows;
    w.rank = rank;
    w.slot = grid.i() * grid.cols() + grid.j();
    w.slots = grid.size();
    w.offset = grid.i() * block + part_begin(block, grid.cols(), grid.j());
    w.local = Matrix::Zero(part_size(block, grid.cols(), grid.j()), rank);
    return w;
}

DistFactorH make_factor_h(Index rank, Index cols, const MatrixGrid& grid) {
    require_divides(cols, grid.cols(), "H layout (columns over processor columns)");
    const Index block = cols / grid.cols();
    DistFactorH h;
    h.rank = rank;
    h.cols = cols;
    h.slot = grid.j() * grid.rows() + grid.i();
    h.slots = grid.size();
    h.offset = grid.j() * block + part_begin(block, grid.rows(), grid.i());
    h.local = Matrix::Zero(rank, part_size(block, grid.rows(), grid.i()));
    return h;
}

DistFactorW distribute_w(const Matrix& w, const MatrixGrid& grid) {
    auto out = make_factor_w(w.rows(), w.cols(), grid);
    out.local = w.middleRows(out.row_offset(), out.local.rows());
    return out;
}

DistFactorH distribute_h(const Matrix& h, const MatrixGrid& grid) {
    auto out = make_factor_h(h.rows(), h.cols(), grid);
    out.local = h.middleCols(out.col_offset(), out.local.cols());
    return out;
}

Matrix gather_matrix(const DistMatrix& x, const MatrixGrid& grid) {
    const auto blocks = grid.world().all_gather(x.local);
    Matrix full(x.rows, x.cols);
    const Index br = x.rows / x.grid_rows, bc = x.cols / x.grid_cols;
    for (int r = 0; r < static_cast<int>(blocks.size()); ++r)
        full.block((r / x.grid_cols) * br, (r % x.grid_cols) * bc, br, bc) = blocks[r];
    return full;
}

Matrix gather_w(const DistFactorW& w, const MatrixGrid& grid) {
    // World rank order is slot order for W.
    return grid.world().all_gather_concat(w.local, Axis::Rows);
}

Matrix gather_h(const DistFactorH& h, const MatrixGrid& grid) {
    // Column block j is the col group's slices in i order; blocks follow j.
    const Matrix block = grid.col_group().all_gather_concat(h.local, Axis::Cols);
    return grid.row_group().all_gather_concat(block, Axis::Cols);
}

// ---------------------------------------------------------------------------

fs::path scratch_root() {
    if (const char* env = std::getenv("NTT_WORKDIR"); env && *env) return fs::path(env);
    return fs::temp_directory_path();
}

DistMatrix dist_reshape(const DistTensor& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options) {
    require_divisible(src.global_shape, src.grid);
    if (ProcessGrid(src.grid).size() != target.size())
        throw DimensionError("dist_reshape: source grid and target grid have different rank counts");
    const Shape index(src.coords.begin(), src.coords.end());
    ChunkSource cs{src.global_shape, src.block_shape(),
                   [&](const ChunkedTensorStore& store) { store.write_chunk(index, src.local.data()); }};
    return reshape_via_store(cs, rows, cols, target, options);
}

DistMatrix dist_reshape(const DistMatrix& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options) {
    ChunkSource cs{{src.rows, src.cols},
                   {src.rows / src.grid_rows, src.cols / src.grid_cols},
                   [&](const ChunkedTensorStore& store) {
                       store.write_chunk(Shape{src.i, src.j},
                                         std::span<const double>(src.local.data(), static_cast<std::size_t>(src.local.size())));
                   }};
    return reshape_via_store(cs, rows, cols, target, options);
}

DistMatrix dist_reshape(const DistFactorH& src, Index rows, Index cols, const MatrixGrid& target,
                        const ReshapeOptions& options) {
    // The source H may be on a different grid than `target`; its slot sizes
    // are recovered from the layout rule of that grid.
    const Matrix sizes_local = Matrix::Constant(1, 1, static_cast<double>(src.local.cols()));
    const Matrix sizes = target.world().all_gather_concat(sizes_local, Axis::Cols);
    Index width = 0;
    for (Index k = 0; k < sizes.cols(); ++k) width = std::gcd(width, static_cast<Index>(sizes(0, k)));
    if (width == 0) throw DimensionError("dist_reshape: H has no columns");
    ChunkSource cs{{src.rank, src.cols}, {src.rank, width}, [&](const ChunkedTensorStore& store) {
                       for (Index q = 0; q * width < src.local.cols(); ++q) {
                           const Matrix piece = src.local.middleCols(q * width, width);
                           store.write_chunk(Shape{0, src.offset / width + q},
                                             std::span<const double>(piece.data(), static_cast<std::size_t>(piece.size())));
                       }
                   }};
    return reshape_via_store(cs, rows, cols, target, options);
}

// ---------------------------------------------------------------------------

namespace {

Matrix symmetrized(const Matrix& g) {
    Matrix s = g;
    for (Index a = 0; a < g.rows(); ++a)
        for (Index b = a + 1; b < g.cols(); ++b) s(a, b) = s(b, a) = 0.5 * (g(a, b) + g(b, a));
    return s;
}

}  // namespace

Matrix dist_gram(const DistFactorH& h, const MatrixGrid& grid) {
    Matrix local;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::GR);
        local.noalias() = h.local * h.local.transpose();
    }
    return symmetrized(grid.world().all_reduce_sum(local));
}

Matrix dist_gram(const DistFactorW& w, const MatrixGrid& grid) {
    Matrix local;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::GR);
        local.noalias() = w.local.transpose() * w.local;
    }
    return symmetrized(grid.world().all_reduce_sum(local));
}

DistFactorW dist_xht(const DistMatrix& x, const DistFactorH& h, const MatrixGrid& grid) {
    if (x.cols != h.cols || x.grid_rows != grid.rows() || x.grid_cols != grid.cols())
        throw DimensionError("dist_xht: X is " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                             ", H is " + std::to_string(h.rank) + "x" + std::to_string(h.cols));
    auto out = make_factor_w(x.rows, h.rank, grid);
    const Matrix hj = grid.col_group().all_gather_concat(h.local, Axis::Cols);
    Matrix v;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::MM);
        v.noalias() = x.local * hj.transpose();
    }
    std::vector<Index> counts(static_cast<std::size_t>(grid.cols()));
    for (int k = 0; k < grid.cols(); ++k) counts[k] = part_size(x.rows / grid.rows(), grid.cols(), k);
    out.local = grid.row_group().reduce_scatter_sum(v, Axis::Rows, counts);
    return out;
}

DistFactorH dist_wtx(const DistMatrix& x, const DistFactorW& w, const MatrixGrid& grid) {
    if (x.rows != w.rows || x.grid_rows != grid.rows() || x.grid_cols != grid.cols())
        throw DimensionError("dist_wtx: X is " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
                             ", W is " + std::to_string(w.rows) + "x" + std::to_string(w.rank));
    auto out = make_factor_h(w.rank, x.cols, grid);
    const Matrix wi = grid.row_group().all_gather_concat(w.local, Axis::Rows);
    Matrix y;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::MM);
        y.noalias() = wi.transpose() * x.local;
    }
    std::vector<Index> counts(static_cast<std::size_t>(grid.rows()));
    for (int k = 0; k < grid.rows(); ++k) counts[k] = part_size(x.cols / grid.cols(), grid.rows(), k);
    out.local = grid.col_group().reduce_scatter_sum(y, Axis::Cols, counts);
    return out;
}

double dist_residual_norm(const DistMatrix& x, const DistFactorW& w, const DistFactorH& h, const MatrixGrid& grid) {
    if (x.rows != w.rows || x.cols != h.cols || w.rank != h.rank)
        throw DimensionError("dist_residual_norm: factor shapes do not conform to X");
    const Matrix wi = grid.row_group().all_gather_concat(w.local, Axis::Rows);
    const Matrix hj = grid.col_group().all_gather_concat(h.local, Axis::Cols);
    double local = 0.0;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::MM);
        local = (x.local - wi * hj).squaredNorm();
    }
    return std::sqrt(grid.world().all_reduce_sum(local));
}

double dist_frobenius_sq(const DistMatrix& x, const MatrixGrid& grid) {
    double local = 0.0;
    {
        ScopedTimer timer(grid.world().timers(), TimingCategory::Norm);
        local = x.local.squaredNorm();
    }
    return grid.world().all_reduce_sum(local);
}

}  // namespace ntt
