#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Eigenvalues>

#include "ntt/comm.hpp"
#include "ntt/dist_matrix.hpp"
#include "ntt/tensor.hpp"

namespace ntt::testing {

inline Matrix seeded_matrix(Index rows, Index cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = u(gen);
    return m;
}

inline DenseTensor seeded_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    DenseTensor t(std::move(shape));
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.data()) v = u(gen);
    return t;
}

inline TensorTrain seeded_train(const Shape& shape, const std::vector<Index>& ranks, std::uint64_t seed) {
    std::vector<DenseTensor> cores;
    for (std::size_t k = 0; k < shape.size(); ++k)
        cores.push_back(seeded_tensor({ranks[k], shape[k], ranks[k + 1]}, seed * 131 + k));
    return TensorTrain(std::move(cores));
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
    const double n = b.norm();
    return n == 0.0 ? (a - b).norm() : (a - b).norm() / n;
}

/// Runs `body` on every rank of a pr x pc matrix grid.
inline void on_grid(int pr, int pc, const std::function<void(const MatrixGrid&)>& body) {
    run_spmd(pr * pc, [&](Communicator& world) {
        MatrixGrid grid(world, pr, pc);
        body(grid);
    });
}

/// Sum over every rank-index tuple of the product of core entries.
inline double brute_force_element(const TensorTrain& tt, const Shape& index) {
    const auto ranks = tt.ranks();
    const std::size_t d = index.size();
    std::vector<Index> k(d + 1, 0);
    double total = 0.0;
    while (true) {
        double prod = 1.0;
        for (std::size_t m = 0; m < d; ++m) {
            const Shape at{k[m], index[m], k[m + 1]};
            prod *= tt.cores()[m].at(at);
        }
        total += prod;
        std::size_t m = d - 1;
        while (m >= 1) {
            if (++k[m] < ranks[m]) break;
            k[m] = 0;
            --m;
        }
        if (m == 0) break;
    }
    return total;
}

/// Windowed SSIM written from the textbook formula, element by element.
inline double reference_ssim(const Matrix& x, const Matrix& y) {
    const double lmax = x.maxCoeff(), lmin = x.minCoeff();
    const double L = lmax - lmin;
    const double C1 = std::pow(0.01 * L, 2), C2 = std::pow(0.03 * L, 2);
    double acc = 0.0;
    int count = 0;
    for (Index bi = 0; bi + 8 <= x.rows(); bi += 8)
        for (Index bj = 0; bj + 8 <= x.cols(); bj += 8) {
            double sx = 0, sy = 0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    sx += x(bi + u, bj + v);
                    sy += y(bi + u, bj + v);
                }
            const double mx = sx / 64, my = sy / 64;
            double vx = 0, vy = 0, cxy = 0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    const double dx = x(bi + u, bj + v) - mx, dy = y(bi + u, bj + v) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cxy += dx * dy;
                }
            vx /= 63;
            vy /= 63;
            cxy /= 63;
            acc += (2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            ++count;
        }
    return acc / count;
}

/// Serial dense BCD with the same update order, normalisation, correction
/// (restore) and extrapolation rules as the distributed solver.
struct SerialBcd {
    Matrix W, H;
    std::vector<double> accepted;
};

inline double dense_spectral_norm(const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline SerialBcd serial_bcd(const Matrix& X, Matrix W0, Matrix H0, int iters, double delta = 0.9999) {
    const double xn = X.norm();
    Matrix Wm = W0 / W0.norm() * std::sqrt(xn);
    Matrix Hm = H0 / H0.norm() * std::sqrt(xn);
    Matrix W = Wm, H = Hm, Wp = Wm, Hp = Hm;
    double t = 1.0, obj = 0.5 * xn * xn;
    double lw_prev = dense_spectral_norm(Hm * Hm.transpose());
    double lh_prev = dense_spectral_norm(Wm.transpose() * Wm);
    SerialBcd out;
    for (int it = 0; it < iters; ++it) {
        const Matrix hht = H * H.transpose();
        const double lw = dense_spectral_norm(hht);
        W = (Wm - (Wm * hht - X * H.transpose()) / lw).cwiseMax(0.0);
        for (Index c = 0; c < W.cols(); ++c) {
            const double s = W.col(c).sum();
            if (s <= 0) continue;
            W.col(c) /= s;
            Hm.row(c) *= s;
        }
        const Matrix wtw = W.transpose() * W;
        const double lh = dense_spectral_norm(wtw);
        H = (Hm - (wtw * Hm - W.transpose() * X) / lh).cwiseMax(0.0);
        const double cur = 0.5 * (X - W * H).squaredNorm();
        const double lw_now = dense_spectral_norm(H * H.transpose());
        if (cur >= obj) {
            W = Wp;
            H = Hp;
            Wm = W;
            Hm = H;
        } else {
            const double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
            const double w = (t - 1) / tn;
            const double ww = std::min(w, delta * std::sqrt(lw_prev / lw_now));
            const double wh = std::min(w, delta * std::sqrt(lh_prev / lh));
            Wm = W + ww * (W - Wp);
            Hm = H + wh * (H - Hp);
            Wp = W;
            Hp = H;
            t = tn;
            obj = cur;
        }
        lw_prev = lw_now;
        lh_prev = lh;
        out.accepted.push_back(obj);
    }
    out.W = W;
    out.H = H;
    return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("ntt-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace ntt::testing
