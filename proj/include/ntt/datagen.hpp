#pragma once

#include <cstdint>
#include <vector>

#include "ntt/comm.hpp"
#include "ntt/dist_matrix.hpp"
#include "ntt/tensor.hpp"

namespace ntt {

struct GenSpec {
    Shape shape;
    std::vector<Index> ranks;  ///< (1, r_1, ..., r_{d-1}, 1)
    std::uint64_t seed = 0;
    double noise_variance = 0.0;
    bool clip = true;  ///< clip negative values after adding noise
};

/// Cores with entries uniform on [0, 1), keyed by (seed, core index).
TensorTrain generate_train(const Shape& shape, const std::vector<Index>& ranks, std::uint64_t seed);

/// This rank's block of the seeded tensor (plus noise when requested). Each
/// element depends only on its global index, so any grid yields the same
/// global tensor.
DistTensor generate(const GenSpec& spec, const ProcessGrid& grid, int rank);

/// Whole tensor on one rank; equals the gather of generate() on any grid.
DenseTensor generate_dense(const GenSpec& spec);

/// t + N(0, variance) per element, keyed by global flat index.
DenseTensor add_noise(const DenseTensor& t, double variance, std::uint64_t seed);
void add_noise(DistTensor& t, double variance, std::uint64_t seed);

void clip_negative(DenseTensor& t) noexcept;

}  // namespace ntt
