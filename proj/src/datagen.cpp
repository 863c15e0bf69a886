#include "ntt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ntt/errors.hpp"
#include "ntt/random.hpp"

namespace ntt {
namespace {

void validate(const GenSpec& spec) {
    if (spec.shape.empty()) throw DimensionError("generate: empty shape");
    for (Index n : spec.shape)
        if (n < 1) throw DimensionError("generate: extents must be positive");
    if (spec.ranks.size() != spec.shape.size() + 1)
        throw RankError("generate: rank vector needs " + std::to_string(spec.shape.size() + 1) + " entries");
    if (!(spec.noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be nonnegative");
}

// Noise for `count` consecutive row-major elements starting at global flat index `first`.
void add_noise_run(std::span<double> values, Index first, const CounterRng& rng, double sd) {
    for (std::size_t k = 0; k < values.size(); ++k)
        values[k] += sd * rng.gaussian(static_cast<std::uint64_t>(first) + k);
}

}  // namespace

TensorTrain generate_train(const Shape& shape, const std::vector<Index>& ranks, std::uint64_t seed) {
    if (ranks.size() != shape.size() + 1)
        throw RankError("rank vector needs " + std::to_string(shape.size() + 1) + " entries");
    std::vector<DenseTensor> cores;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        DenseTensor core(Shape{ranks[k], shape[k], ranks[k + 1]});
        const CounterRng rng(seed, streams::kCore + k);
        auto data = core.data();
        for (std::size_t e = 0; e < data.size(); ++e) data[e] = rng.uniform(e);
        cores.push_back(std::move(core));
    }
    return TensorTrain(std::move(cores));
}

DistTensor generate(const GenSpec& spec, const ProcessGrid& grid, int rank) {
    validate(spec);
    if (grid.ndims() != static_cast<int>(spec.shape.size()))
        throw DimensionError("generate: grid has " + std::to_string(grid.ndims()) + " modes, tensor has " +
                             std::to_string(spec.shape.size()));
    require_divisible(spec.shape, grid.dims());
    const TensorTrain tt = generate_train(spec.shape, spec.ranks, spec.seed);

    DistTensor out;
    out.global_shape = spec.shape;
    out.grid = grid.dims();
    out.coords = grid.coords(rank);
    const Shape offset = out.offset();
    out.local = reconstruct_block(tt, offset, out.block_shape());
    if (spec.noise_variance > 0.0) {
        add_noise(out, spec.noise_variance, spec.seed);
        if (spec.clip) clip_negative(out.local);
    }
    return out;
}

DenseTensor generate_dense(const GenSpec& spec) {
    return generate(spec, ProcessGrid(std::vector<int>(spec.shape.size(), 1)), 0).local;
}

DenseTensor add_noise(const DenseTensor& t, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0)) throw std::invalid_argument("noise variance must be nonnegative");
    DenseTensor out = t;
    if (variance == 0.0) return out;
    add_noise_run(out.data(), 0, CounterRng(seed, streams::kNoise), std::sqrt(variance));
    return out;
}

void add_noise(DistTensor& t, double variance, std::uint64_t seed) {
    if (!(variance >= 0.0)) throw std::invalid_argument("noise variance must be nonnegative");
    if (variance == 0.0 || t.local.size() == 0) return;
    const CounterRng rng(seed, streams::kNoise);
    const double sd = std::sqrt(variance);
    const Shape offset = t.offset();
    const Shape extent = t.block_shape();
    const Shape strides = row_major_strides(t.global_shape);
    const std::size_t d = extent.size();
    const Index last = extent.back();
    const Index runs = t.local.size() / last;
    for (Index r = 0; r < runs; ++r) {
        Index rem = r;
        Index flat = offset[d - 1];
        for (std::size_t k = d - 1; k-- > 0;) {
            flat += (offset[k] + rem % extent[k]) * strides[k];
            rem /= extent[k];
        }
        add_noise_run(t.local.data().subspan(static_cast<std::size_t>(r * last), static_cast<std::size_t>(last)),
                      flat, rng, sd);
    }
}

void clip_negative(DenseTensor& t) noexcept {
    for (double& v : t.data()) v = std::max(v, 0.0);
}

}  // namespace ntt
