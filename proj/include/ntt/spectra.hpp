#pragma once

#include <vector>

#include "ntt/dist_matrix.hpp"

namespace ntt {

inline constexpr Index kDefaultGramCap = 4096;
inline constexpr int kMaxJacobiSweeps = 100;

struct SymmetricEigen {
    Vector values;   ///< descending
    Matrix vectors;  ///< column k pairs with values[k]; empty when not requested
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a symmetric matrix. Throws NumericalError if
/// the off-diagonal mass has not vanished after `max_sweeps` sweeps.
SymmetricEigen jacobi_eigen(const Matrix& a, bool want_vectors = true, int max_sweeps = kMaxJacobiSweeps);

/// Largest eigenvalue magnitude of a small symmetric matrix (the spectral
/// norm of a Gram matrix).
double spectral_norm(const Matrix& symmetric);

struct SpectrumResult {
    std::vector<double> singular_values;  ///< descending, length min(m, n)
};

/// Eigen-decomposition of the smaller Gram matrix of X (X X^T when m <= n,
/// else X^T X), replicated on every rank. With vectors, each value is
/// recomputed as ||X^T u_k||^2 (or ||X v_k||^2), which resolves small
/// singular values the Gram eigenvalues cannot.
struct GramEigen {
    bool left_side = true;  ///< true: eigenvectors are left singular vectors
    SymmetricEigen eigen;
};
GramEigen dist_gram_eigen(const DistMatrix& x, const MatrixGrid& grid, bool want_vectors,
                          Index gram_cap = kDefaultGramCap);

SpectrumResult dist_singular_values(const DistMatrix& x, const MatrixGrid& grid, Index gram_cap = kDefaultGramCap);

/// sqrt(sigma_{k+1}^2 + ... + sigma_N^2), summed from the smallest value up.
double spectrum_tail(const SpectrumResult& s, Index k);

/// Smallest k in [1, N] whose relative spectral tail is at most eps. An
/// all-zero spectrum yields 1 and a DegenerateInput warning.
Index choose_rank(const SpectrumResult& s, double eps);

}  // namespace ntt
