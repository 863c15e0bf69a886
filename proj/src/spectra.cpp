#include "ntt/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ntt/errors.hpp"

namespace ntt {

SymmetricEigen jacobi_eigen(const Matrix& input, bool want_vectors, int max_sweeps) {
    const Index n = input.rows();
    if (input.cols() != n) throw DimensionError("jacobi_eigen: matrix is not square");
    SymmetricEigen out;
    if (n == 0) return out;

    Matrix a = input;
    Matrix v;
    if (want_vectors) v = Matrix::Identity(n, n);

    const double scale = a.norm();
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(n) * scale;
    bool converged = false;
    int sweep = 0;
    for (; sweep <= max_sweeps; ++sweep) {
        double off = 0.0;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(2.0 * off) <= tol) {
            converged = true;
            break;
        }
        if (sweep == max_sweeps) break;
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                if (want_vectors) {
                    for (Index k = 0; k < n; ++k) {
                        const double vkp = v(k, p), vkq = v(k, q);
                        v(k, p) = c * vkp - s * vkq;
                        v(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    if (!converged)
        throw NumericalError("Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) + " sweeps");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return a(x, x) > a(y, y); });
    out.values.resize(n);
    if (want_vectors) out.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        if (want_vectors) out.vectors.col(k) = v.col(order[k]);
    }
    out.sweeps = sweep;
    return out;
}

double spectral_norm(const Matrix& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    if (symmetric.rows() == 1) return std::abs(symmetric(0, 0));
    const auto eig = jacobi_eigen(symmetric, false);
    return std::max(std::abs(eig.values[0]), std::abs(eig.values[eig.values.size() - 1]));
}

namespace {

// Eigenvalues of the Gram are only accurate to eps * ||G||, so singular values
// below sqrt(eps) * sigma_1 are noise. ||X^T u_k|| (or ||X v_k||) is accurate to
// eps * sigma_1 instead. Pairs are re-sorted by the refined values.
void refine_values(GramEigen& ge, const DistMatrix& x, const MatrixGrid& grid) {
    const Index side = ge.eigen.values.size();
    Vector sq(side);
    if (ge.left_side) {
        const DistFactorH p = dist_wtx(x, distribute_w(ge.eigen.vectors, grid), grid);
        sq = p.local.rowwise().squaredNorm();
    } else {
        const DistFactorW p = dist_xht(x, distribute_h(ge.eigen.vectors.transpose(), grid), grid);
        sq = p.local.colwise().squaredNorm().transpose();
    }
    const Matrix total = grid.world().all_reduce_sum(Matrix(sq));
    std::vector<Index> order(static_cast<std::size_t>(side));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return total(a, 0) > total(b, 0); });
    SymmetricEigen sorted;
    sorted.values.resize(side);
    sorted.vectors.resize(ge.eigen.vectors.rows(), side);
    sorted.sweeps = ge.eigen.sweeps;
    for (Index k = 0; k < side; ++k) {
        sorted.values[k] = total(order[k], 0);
        sorted.vectors.col(k) = ge.eigen.vectors.col(order[k]);
    }
    ge.eigen = std::move(sorted);
}

}  // namespace

GramEigen dist_gram_eigen(const DistMatrix& x, const MatrixGrid& grid, bool want_vectors, Index gram_cap) {
    const Index side = std::min(x.rows, x.cols);
    if (side > gram_cap)
        throw NumericalError("Gram side " + std::to_string(side) + " exceeds the cap of " + std::to_string(gram_cap) +
                             "; use a smaller stage");
    GramEigen out;
    out.left_side = x.rows <= x.cols;
    Matrix contribution = Matrix::Zero(side, side);
    if (out.left_side) {
        const Matrix panel = grid.col_group().all_gather_concat(x.local, Axis::Rows);
        ScopedTimer timer(grid.world().timers(), TimingCategory::GR);
        contribution.middleRows(x.row_offset(), x.local.rows()).noalias() = x.local * panel.transpose();
    } else {
        const Matrix panel = grid.row_group().all_gather_concat(x.local, Axis::Cols);
        ScopedTimer timer(grid.world().timers(), TimingCategory::GR);
        contribution.middleCols(x.col_offset(), x.local.cols()).noalias() = panel.transpose() * x.local;
    }
    Matrix gram = grid.world().all_reduce_sum(contribution);
    gram = 0.5 * (gram + gram.transpose()).eval();
    out.eigen = jacobi_eigen(gram, want_vectors);
    if (want_vectors) refine_values(out, x, grid);
    return out;
}

SpectrumResult dist_singular_values(const DistMatrix& x, const MatrixGrid& grid, Index gram_cap) {
    const auto ge = dist_gram_eigen(x, grid, false, gram_cap);
    SpectrumResult s;
    s.singular_values.reserve(static_cast<std::size_t>(ge.eigen.values.size()));
    for (Index k = 0; k < ge.eigen.values.size(); ++k)
        s.singular_values.push_back(std::sqrt(std::max(ge.eigen.values[k], 0.0)));
    return s;
}

double spectrum_tail(const SpectrumResult& s, Index k) {
    const auto& sv = s.singular_values;
    double tail = 0.0;
    for (Index i = static_cast<Index>(sv.size()) - 1; i >= k && i >= 0; --i) tail += sv[i] * sv[i];
    return std::sqrt(tail);
}

Index choose_rank(const SpectrumResult& s, double eps) {
    const auto& sv = s.singular_values;
    if (sv.empty()) throw DegenerateInputError("choose_rank: empty spectrum");
    if (!(eps > 0.0)) throw std::invalid_argument("choose_rank: eps must be positive");
    const Index n = static_cast<Index>(sv.size());
    // tail[k] = sigma_{k+1}^2 + ... + sigma_N^2 (1-based sigma), accumulated upward.
    std::vector<double> tail(static_cast<std::size_t>(n + 1), 0.0);
    for (Index i = n - 1; i >= 0; --i) tail[i] = tail[i + 1] + sv[i] * sv[i];
    if (tail[0] == 0.0) {
        warn(WarningKind::DegenerateInput, "choose_rank: all singular values are zero; using rank 1");
        return 1;
    }
    const double total = std::sqrt(tail[0]);
    for (Index k = 1; k <= n; ++k)
        if (std::sqrt(tail[k]) / total <= eps) return k;
    return n;
}

}  // namespace ntt
