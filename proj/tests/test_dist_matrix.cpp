#include <gtest/gtest.h>

#include <mutex>
#include <random>
#include <set>

#include "ntt/dist_matrix.hpp"
#include "ntt/errors.hpp"
#include "ntt/store.hpp"
#include "support.hpp"

using namespace ntt;
using ntt::testing::on_grid;
using ntt::testing::rel_diff;
using ntt::testing::seeded_matrix;
using ntt::testing::seeded_tensor;

namespace {

DenseTensor iota_tensor(Shape shape) {
    DenseTensor t(std::move(shape));
    for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<double>(k);
    return t;
}

/// Reshapes `full` distributed over `tensor_grid` to rows x cols on a pr x pc
/// grid and returns the gathered result.
Matrix reshape_and_gather(const DenseTensor& full, const std::vector<int>& tensor_grid, Index rows, Index cols, int pr,
                          int pc, const ReshapeOptions& opts = {}) {
    const ProcessGrid pg(tensor_grid);
    Matrix out;
    std::mutex m;
    run_spmd(pg.size(), [&](Communicator& world) {
        MatrixGrid grid(world, pr, pc);
        const DistTensor src = scatter_tensor(full, pg, world.rank());
        const DistMatrix x = dist_reshape(src, rows, cols, grid, opts);
        EXPECT_EQ(x.local.rows(), rows / pr);
        EXPECT_EQ(x.local.cols(), cols / pc);
        const Matrix g = gather_matrix(x, grid);
        if (world.rank() == 0) {
            std::lock_guard lock(m);
            out = g;
        }
    });
    return out;
}

}  // namespace

TEST(Distribute, BlocksFollowLayout) {
    const Matrix x = seeded_matrix(8, 12, 1);
    on_grid(2, 3, [&](const MatrixGrid& g) {
        const DistMatrix d = distribute_matrix(x, g);
        EXPECT_EQ(d.local, x.block(4 * g.i(), 4 * g.j(), 4, 4));
        EXPECT_EQ(gather_matrix(d, g), x);
    });
}

TEST(Distribute, FactorSlotsConcatenateToFactor) {
    const Matrix w = seeded_matrix(12, 3, 2), h = seeded_matrix(3, 18, 3);
    on_grid(2, 3, [&](const MatrixGrid& g) {
        const DistFactorW dw = distribute_w(w, g);
        const DistFactorH dh = distribute_h(h, g);
        EXPECT_EQ(dw.slot, g.i() * 3 + g.j());
        EXPECT_EQ(dh.slot, g.j() * 2 + g.i());
        EXPECT_EQ(dw.local, w.middleRows(2 * dw.slot, 2));
        EXPECT_EQ(dh.local, h.middleCols(3 * dh.slot, 3));
        EXPECT_EQ(gather_w(dw, g), w);
        EXPECT_EQ(gather_h(dh, g), h);
    });
}

TEST(Distribute, IndivisibleShapesThrow) {
    EXPECT_THROW(on_grid(2, 2, [](const MatrixGrid& g) { distribute_matrix(Matrix::Zero(3, 4), g); }), DimensionError);
    EXPECT_THROW(on_grid(2, 2, [](const MatrixGrid& g) { make_factor_w(5, 2, g); }), DimensionError);
    EXPECT_THROW(on_grid(2, 2, [](const MatrixGrid& g) { make_factor_h(2, 5, g); }), DimensionError);
    EXPECT_THROW(require_divisible(Shape{4, 5}, std::vector<int>{2, 2}), DimensionError);
}

TEST(Distribute, UnevenFactorSlices) {
    const Matrix w = seeded_matrix(6, 2, 30), h = seeded_matrix(2, 20, 31);
    on_grid(2, 4, [&](const MatrixGrid& g) {
        const DistFactorW dw = distribute_w(w, g);
        const DistFactorH dh = distribute_h(h, g);
        // Row block of 3 over 4 ranks: 0, 1, 1, 1 rows. Column block of 5 over 2 ranks: 2, 3.
        EXPECT_EQ(dw.local.rows(), part_size(3, 4, g.j()));
        EXPECT_EQ(dw.row_offset(), 3 * g.i() + part_begin(3, 4, g.j()));
        EXPECT_EQ(dh.local.cols(), g.i() == 0 ? 2 : 3);
        EXPECT_EQ(gather_w(dw, g), w);
        EXPECT_EQ(gather_h(dh, g), h);
    });
}

TEST(DistTensor, ScatterGatherRoundTrip) {
    const auto t = seeded_tensor({4, 6, 2}, 4);
    const ProcessGrid pg({2, 3, 1});
    run_spmd(6, [&](Communicator& c) {
        const DistTensor d = scatter_tensor(t, pg, c.rank());
        EXPECT_EQ(d.block_shape(), (Shape{2, 2, 2}));
        EXPECT_EQ(gather_tensor(d, c), t);
    });
}

TEST(Reshape, SingleRankMatchesUnfold) {
    const auto t = seeded_tensor({3, 4, 5}, 5);
    for (Index rows : {1, 3, 12, 60})
        EXPECT_EQ(reshape_and_gather(t, {1, 1, 1}, rows, 60 / rows, 1, 1), unfold(t, rows));
}

TEST(Reshape, SmallMatrixFourRanks) {
    const auto t = iota_tensor({4, 4});
    EXPECT_EQ(reshape_and_gather(t, {2, 2}, 2, 8, 2, 2), unfold(t, 2));
    EXPECT_EQ(reshape_and_gather(t, {2, 2}, 2, 8, 1, 4), unfold(t, 2));
}

TEST(Reshape, SmallMatrixTwoRanksRowBlocks) {
    const auto t = iota_tensor({4, 4});
    const Matrix expected = unfold(t, 2);
    const ProcessGrid pg({2, 1});
    run_spmd(2, [&](Communicator& world) {
        MatrixGrid grid(world, 2, 1);
        const DistMatrix x = dist_reshape(scatter_tensor(t, pg, world.rank()), 2, 8, grid);
        EXPECT_EQ(x.local, expected.row(world.rank()));
    });
}

TEST(Reshape, FourWayTensorProbes) {
    const auto t = seeded_tensor({8, 8, 8, 8}, 6);
    const Matrix got = reshape_and_gather(t, {2, 2, 2, 2}, 8, 512, 2, 8);
    const Matrix expected = unfold(t, 8);
    std::mt19937_64 gen(7);
    for (int k = 0; k < 50; ++k) {
        const Index r = static_cast<Index>(gen() % 8), c = static_cast<Index>(gen() % 512);
        EXPECT_EQ(got(r, c), expected(r, c));
    }
    EXPECT_EQ(got, expected);
}

TEST(Reshape, IsPermutationOfPositions) {
    const auto t = iota_tensor({4, 6, 4});
    const Matrix got = reshape_and_gather(t, {2, 3, 2}, 24, 4, 3, 4);
    std::set<double> seen(got.data(), got.data() + got.size());
    EXPECT_EQ(seen.size(), 96u);
    EXPECT_EQ(*seen.begin(), 0.0);
    EXPECT_EQ(*seen.rbegin(), 95.0);
    EXPECT_EQ(got, unfold(t, 24));
}

TEST(Reshape, FromMatrixAndFromFactorH) {
    const Matrix x = seeded_matrix(8, 12, 8);
    const Matrix h = seeded_matrix(2, 24, 9);
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const DistMatrix dx = distribute_matrix(x, g);
        const DistMatrix a = dist_reshape(dx, 4, 24, g);
        const Matrix expected_a = unfold(fold(x, Shape{96}), 4);
        EXPECT_EQ(gather_matrix(a, g), expected_a);

        const DistFactorH dh = distribute_h(h, g);
        const DistMatrix b = dist_reshape(dh, 8, 6, g);
        EXPECT_EQ(gather_matrix(b, g), unfold(fold(h, Shape{48}), 8));
    });
}

TEST(Reshape, BadShapesThrow) {
    const auto t = iota_tensor({4, 4});
    EXPECT_THROW(reshape_and_gather(t, {2, 2}, 3, 5, 1, 4), DimensionError);
    EXPECT_THROW(reshape_and_gather(t, {2, 2}, 2, 8, 4, 1), DimensionError);
}

TEST(Reshape, RemovesScratchUnlessKept) {
    ntt::testing::TempDir dir("reshape");
    const auto t = iota_tensor({4, 4});
    ReshapeOptions opts;
    opts.scratch = dir.path();
    reshape_and_gather(t, {2, 2}, 2, 8, 2, 2, opts);
    EXPECT_TRUE(std::filesystem::is_empty(dir.path()));
    opts.keep_store = true;
    reshape_and_gather(t, {2, 2}, 2, 8, 2, 2, opts);
    int stores = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
        ++stores;
        EXPECT_EQ(ChunkedTensorStore::open(e.path()).read_all(), t);
    }
    EXPECT_EQ(stores, 1);
}

TEST(Gram, HandExample) {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    Matrix expected(2, 2);
    expected << 5, 11, 11, 25;
    on_grid(1, 1, [&](const MatrixGrid& g) { EXPECT_EQ(dist_gram(distribute_h(m, g), g), expected); });
}

TEST(Gram, IdentityRowsOverTwoRanks) {
    const Matrix eye = Matrix::Identity(4, 4);
    on_grid(2, 1, [&](const MatrixGrid& g) {
        EXPECT_EQ(dist_gram(distribute_h(eye, g), g), eye);
        EXPECT_EQ(dist_gram(distribute_w(eye, g), g), eye);
    });
}

TEST(Gram, MatchesSerialAndIsPsd) {
    const Matrix w = seeded_matrix(64, 4, 10);
    const Matrix serial = w.transpose() * w;
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const Matrix got = dist_gram(distribute_w(w, g), g);
        EXPECT_LE(rel_diff(got, serial), 1e-12);
        EXPECT_EQ(got, got.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(got);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * got.trace());
        const Matrix ht = w.transpose();
        EXPECT_LE(rel_diff(dist_gram(distribute_h(ht, g), g), serial), 1e-12);
    });
}

TEST(Xht, SingleRankIsPlainProduct) {
    const Matrix x = seeded_matrix(6, 5, 11), h = seeded_matrix(2, 5, 12);
    on_grid(1, 1, [&](const MatrixGrid& g) {
        const auto r = dist_xht(distribute_matrix(x, g), distribute_h(h, g), g);
        EXPECT_LE(rel_diff(r.local, x * h.transpose()), 1e-15);
    });
}

TEST(Xht, IdentityReturnsHTransposeSlices) {
    const Matrix h = seeded_matrix(2, 4, 13);
    const Matrix ht = h.transpose();
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const auto r = dist_xht(distribute_matrix(Matrix::Identity(4, 4), g), distribute_h(h, g), g);
        EXPECT_EQ(r.local, ht.middleRows(r.row_offset(), 1));
    });
}

TEST(Xht, MatchesSerialProduct) {
    const Matrix x = seeded_matrix(64, 64, 14), h = seeded_matrix(3, 64, 15);
    const Matrix serial = x * h.transpose();
    for (auto [pr, pc] : {std::pair{2, 2}, std::pair{4, 1}, std::pair{1, 4}, std::pair{2, 4}})
        on_grid(pr, pc, [&](const MatrixGrid& g) {
            const auto r = dist_xht(distribute_matrix(x, g), distribute_h(h, g), g);
            EXPECT_LE(rel_diff(gather_w(r, g), serial), 1e-12);
        });
}

TEST(Xht, MismatchedShapesThrow) {
    EXPECT_THROW(on_grid(1, 1,
                         [](const MatrixGrid& g) {
                             dist_xht(distribute_matrix(Matrix::Ones(4, 4), g), distribute_h(Matrix::Ones(2, 6), g), g);
                         }),
                 DimensionError);
}

TEST(Wtx, SingleRankIsPlainProduct) {
    const Matrix x = seeded_matrix(6, 5, 16), w = seeded_matrix(6, 2, 17);
    on_grid(1, 1, [&](const MatrixGrid& g) {
        const auto r = dist_wtx(distribute_matrix(x, g), distribute_w(w, g), g);
        EXPECT_LE(rel_diff(r.local, w.transpose() * x), 1e-15);
    });
}

TEST(Wtx, OneHotColumnsSelectRows) {
    const Matrix x = seeded_matrix(8, 8, 18);
    Matrix w = Matrix::Zero(8, 2);
    w(5, 0) = 1.0;
    w(2, 1) = 1.0;
    Matrix expected(2, 8);
    expected.row(0) = x.row(5);
    expected.row(1) = x.row(2);
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const auto r = dist_wtx(distribute_matrix(x, g), distribute_w(w, g), g);
        EXPECT_EQ(gather_h(r, g), expected);
    });
}

TEST(Wtx, MatchesSerialProduct) {
    const Matrix x = seeded_matrix(64, 64, 19), w = seeded_matrix(64, 3, 20);
    const Matrix serial = w.transpose() * x;
    for (auto [pr, pc] : {std::pair{2, 2}, std::pair{4, 1}, std::pair{1, 4}, std::pair{4, 2}})
        on_grid(pr, pc, [&](const MatrixGrid& g) {
            const auto r = dist_wtx(distribute_matrix(x, g), distribute_w(w, g), g);
            EXPECT_LE(rel_diff(gather_h(r, g), serial), 1e-12);
        });
}

TEST(Kernels, UnevenLayoutsMatchSerial) {
    const Matrix x = seeded_matrix(6, 10, 32), w = seeded_matrix(6, 3, 33), h = seeded_matrix(3, 10, 34);
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const auto dx = distribute_matrix(x, g);
        const auto dw = distribute_w(w, g);
        const auto dh = distribute_h(h, g);
        EXPECT_LE(rel_diff(gather_w(dist_xht(dx, dh, g), g), x * h.transpose()), 1e-12);
        EXPECT_LE(rel_diff(gather_h(dist_wtx(dx, dw, g), g), w.transpose() * x), 1e-12);
        EXPECT_LE(rel_diff(dist_gram(dw, g), w.transpose() * w), 1e-12);
        EXPECT_LE(rel_diff(dist_gram(dh, g), h * h.transpose()), 1e-12);
        EXPECT_NEAR(dist_residual_norm(dx, dw, dh, g), (x - w * h).norm(), 1e-12);
        const Matrix h2 = seeded_matrix(2, 10, 35);
        EXPECT_EQ(gather_matrix(dist_reshape(distribute_h(h2, g), 10, 2, g), g), unfold(fold(h2, Shape{20}), 10));
    });
}

TEST(Kernels, AgreeAcrossProcessCounts) {
    const Matrix x = seeded_matrix(32, 48, 21), w = seeded_matrix(32, 4, 22), h = seeded_matrix(4, 48, 23);
    Matrix base;
    on_grid(1, 1, [&](const MatrixGrid& g) { base = gather_w(dist_xht(distribute_matrix(x, g), distribute_h(h, g), g), g); });
    on_grid(2, 4, [&](const MatrixGrid& g) {
        EXPECT_LE(rel_diff(gather_w(dist_xht(distribute_matrix(x, g), distribute_h(h, g), g), g), base), 1e-8);
    });
}

TEST(Residual, MatchesSerialNorms) {
    const Matrix x = seeded_matrix(16, 24, 24), w = seeded_matrix(16, 2, 25), h = seeded_matrix(2, 24, 26);
    on_grid(2, 2, [&](const MatrixGrid& g) {
        const DistMatrix dx = distribute_matrix(x, g);
        EXPECT_NEAR(dist_residual_norm(dx, distribute_w(w, g), distribute_h(h, g), g), (x - w * h).norm(), 1e-12);
        EXPECT_NEAR(dist_frobenius_sq(dx, g), x.squaredNorm(), 1e-10);
    });
}
