#pragma once

#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "ntt/tensor.hpp"

namespace ntt {

/// On-disk tensor: a directory with `meta.json` and one file per chunk named
/// `c.<i1>.<i2>...` holding little-endian f64 values in C order.
///
/// Writers of distinct chunks may run concurrently; readers must start after
/// all writers finished.
class ChunkedTensorStore {
public:
    static constexpr int kFormatVersion = 1;

    /// Creates the directory (if needed) and writes meta.json.
    static ChunkedTensorStore create(const std::filesystem::path& dir, Shape shape, Shape chunk_shape);
    static ChunkedTensorStore open(const std::filesystem::path& dir);

    /// create() followed by writing every chunk of `t`.
    static ChunkedTensorStore write(const std::filesystem::path& dir, const DenseTensor& t, Shape chunk_shape);

    const std::filesystem::path& path() const noexcept { return dir_; }
    const Shape& shape() const noexcept { return shape_; }
    const Shape& chunk_shape() const noexcept { return chunk_shape_; }
    /// Number of chunks along each mode.
    Shape chunk_grid() const;

    std::filesystem::path chunk_path(std::span<const Index> chunk_index) const;
    void write_chunk(std::span<const Index> chunk_index, std::span<const double> values) const;
    std::vector<double> read_chunk(std::span<const Index> chunk_index) const;

    DenseTensor read_all() const;
    /// The sub-box [offset, offset + extent) assembled from overlapping chunks.
    DenseTensor read_box(std::span<const Index> offset, std::span<const Index> extent) const;

private:
    ChunkedTensorStore(std::filesystem::path dir, Shape shape, Shape chunk_shape);
    void check_chunk_index(std::span<const Index> chunk_index) const;

    std::filesystem::path dir_;
    Shape shape_;
    Shape chunk_shape_;
};

/// Random-access reader that caches every chunk it touches.
class StoreReader {
public:
    explicit StoreReader(const ChunkedTensorStore& store);

    /// Row-major flat elements [begin, begin + out.size()) of the stored tensor.
    void read_flat_range(Index begin, std::span<double> out);
    double read_element(std::span<const Index> index);

private:
    const std::vector<double>& chunk(Index linear_chunk);

    const ChunkedTensorStore& store_;
    Shape chunk_grid_;
    Shape strides_;
    std::unordered_map<Index, std::vector<double>> cache_;
};

}  // namespace ntt
