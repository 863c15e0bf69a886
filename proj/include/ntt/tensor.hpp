#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ntt {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Dense row-major matrix; the row-major layout is what makes an unfolding a
/// pure reinterpretation of tensor storage.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

Index element_count(std::span<const Index> shape);

/// Row-major strides for `shape`.
Shape row_major_strides(std::span<const Index> shape);

/// d-dimensional dense array of doubles in row-major (C) order.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape);
    DenseTensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    int ndims() const noexcept { return static_cast<int>(shape_.size()); }
    Index size() const noexcept { return static_cast<Index>(data_.size()); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    Index flat_index(std::span<const Index> index) const;
    double at(std::span<const Index> index) const { return data_[flat_index(index)]; }
    double& at(std::span<const Index> index) { return data_[flat_index(index)]; }

    /// Same elements, new shape with equal element count.
    DenseTensor reshaped(Shape shape) const;

    bool is_nonnegative() const;
    /// Throws NonnegativityError naming the first negative element.
    void require_nonnegative() const;

    double frobenius_norm() const;

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Row-major unfolding into `rows` x (size/rows).
Matrix unfold(const DenseTensor& t, Index rows);

/// Inverse of unfold: reinterpret a matrix as a tensor of the given shape.
DenseTensor fold(const Matrix& m, Shape shape);

/// Chain of 3-way cores G(i) of shape (r_{i-1}, n_i, r_i) with r_0 = r_d = 1.
class TensorTrain {
public:
    TensorTrain() = default;
    explicit TensorTrain(std::vector<DenseTensor> cores);

    const std::vector<DenseTensor>& cores() const noexcept { return cores_; }
    int ndims() const noexcept { return static_cast<int>(cores_.size()); }
    Shape shape() const;
    /// (r_0, ..., r_d).
    std::vector<Index> ranks() const;
    Index parameter_count() const;
    bool is_nonnegative() const;

    friend bool operator==(const TensorTrain&, const TensorTrain&) = default;

private:
    std::vector<DenseTensor> cores_;
};

/// One entry of the represented tensor via sequential vector-matrix products.
double tt_element(const TensorTrain& tt, std::span<const Index> index);

/// Full tensor by left-to-right matricized accumulation.
DenseTensor reconstruct(const TensorTrain& tt);

/// The sub-box [offset, offset + extent) of the represented tensor. Every
/// element is produced with the same arithmetic as reconstruct() and
/// tt_element(), so blocks tile the full reconstruction bit-exactly.
DenseTensor reconstruct_block(const TensorTrain& tt, std::span<const Index> offset,
                              std::span<const Index> extent);

/// ||a - b||_F / ||a||_F.
double relative_error(const DenseTensor& a, const DenseTensor& b);

/// prod(n_i) / sum(n_i * r_{i-1} * r_i).
double compression_ratio(std::span<const Index> shape, std::span<const Index> ranks);

/// Mean SSIM over non-overlapping 8x8 windows with K1 = 0.01, K2 = 0.03.
/// The dynamic range defaults to max(a) - min(a).
double ssim(const Matrix& a, const Matrix& b, std::optional<double> dynamic_range = std::nullopt);

}  // namespace ntt
