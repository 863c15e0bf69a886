#include "ntt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ntt/errors.hpp"

namespace ntt {
namespace {

std::string shape_string(std::span<const Index> shape) {
    std::string s = "(";
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k) s += ",";
        s += std::to_string(shape[k]);
    }
    return s + ")";
}

void check_shape(std::span<const Index> shape) {
    for (Index n : shape)
        if (n <= 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace

Index element_count(std::span<const Index> shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

Shape row_major_strides(std::span<const Index> shape) {
    Shape strides(shape.size(), 1);
    for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];
    return strides;
}

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(element_count(shape_)), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (static_cast<Index>(data_.size()) != element_count(shape_))
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
}

Index DenseTensor::flat_index(std::span<const Index> index) const {
    if (index.size() != shape_.size())
        throw IndexError("index has " + std::to_string(index.size()) + " entries, tensor has " +
                         std::to_string(shape_.size()) + " modes");
    Index flat = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
        if (index[k] < 0 || index[k] >= shape_[k])
            throw IndexError("index " + shape_string(index) + " out of range for shape " +
                             shape_string(shape_));
        flat = flat * shape_[k] + index[k];
    }
    return flat;
}

DenseTensor DenseTensor::reshaped(Shape shape) const {
    check_shape(shape);
    if (element_count(shape) != size())
        throw DimensionError("cannot reshape " + shape_string(shape_) + " into " + shape_string(shape));
    return DenseTensor(std::move(shape), data_);
}

bool DenseTensor::is_nonnegative() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0; });
}

void DenseTensor::require_nonnegative() const {
    auto it = std::find_if(data_.begin(), data_.end(), [](double v) { return !(v >= 0.0); });
    if (it != data_.end())
        throw NonnegativityError("element " + std::to_string(it - data_.begin()) + " is " +
                                 std::to_string(*it) + " in a nonnegative pipeline");
}

double DenseTensor::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Matrix unfold(const DenseTensor& t, Index rows) {
    if (rows <= 0 || t.size() % rows != 0)
        throw DimensionError("unfold: " + std::to_string(rows) + " rows do not divide " +
                             std::to_string(t.size()) + " elements");
    const Index cols = t.size() / rows;
    return Eigen::Map<const Matrix>(t.data().data(), rows, cols);
}

DenseTensor fold(const Matrix& m, Shape shape) {
    if (element_count(shape) != m.size())
        throw DimensionError("fold: shape " + shape_string(shape) + " does not hold " +
                             std::to_string(m.size()) + " elements");
    return DenseTensor(std::move(shape), std::vector<double>(m.data(), m.data() + m.size()));
}

// ---------------------------------------------------------------------------

TensorTrain::TensorTrain(std::vector<DenseTensor> cores) : cores_(std::move(cores)) {
    if (cores_.empty()) throw RankError("a tensor train needs at least one core");
    for (std::size_t k = 0; k < cores_.size(); ++k) {
        if (cores_[k].ndims() != 3)
            throw RankError("core " + std::to_string(k) + " is not 3-dimensional");
        if (k > 0 && cores_[k - 1].shape()[2] != cores_[k].shape()[0])
            throw RankError("cores " + std::to_string(k - 1) + " and " + std::to_string(k) +
                            " disagree on rank: " + std::to_string(cores_[k - 1].shape()[2]) +
                            " vs " + std::to_string(cores_[k].shape()[0]));
    }
    if (cores_.front().shape()[0] != 1 || cores_.back().shape()[2] != 1)
        throw RankError("boundary ranks must be 1");
}

Shape TensorTrain::shape() const {
    Shape s;
    for (const auto& c : cores_) s.push_back(c.shape()[1]);
    return s;
}

std::vector<Index> TensorTrain::ranks() const {
    std::vector<Index> r;
    if (cores_.empty()) return r;
    r.push_back(cores_.front().shape()[0]);
    for (const auto& c : cores_) r.push_back(c.shape()[2]);
    return r;
}

Index TensorTrain::parameter_count() const {
    Index n = 0;
    for (const auto& c : cores_) n += c.size();
    return n;
}

bool TensorTrain::is_nonnegative() const {
    return std::all_of(cores_.begin(), cores_.end(), [](const DenseTensor& c) { return c.is_nonnegative(); });
}

double tt_element(const TensorTrain& tt, std::span<const Index> index) {
    const Shape shape = tt.shape();
    if (index.size() != shape.size())
        throw IndexError("index has " + std::to_string(index.size()) + " entries, train has " +
                         std::to_string(shape.size()) + " modes");
    for (std::size_t k = 0; k < shape.size(); ++k)
        if (index[k] < 0 || index[k] >= shape[k])
            throw IndexError("index " + shape_string(index) + " out of range for shape " +
                             shape_string(shape));

    std::vector<double> v{1.0};
    std::vector<double> next;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        const auto& g = tt.cores()[k];
        const Index r_in = g.shape()[0], n = g.shape()[1], r_out = g.shape()[2];
        const double* slice = g.data().data() + index[k] * r_out;
        next.assign(static_cast<std::size_t>(r_out), 0.0);
        for (Index b = 0; b < r_out; ++b) {
            double s = 0.0;
            for (Index a = 0; a < r_in; ++a) s += v[a] * slice[a * n * r_out + b];
            next[b] = s;
        }
        v.swap(next);
    }
    return v[0];
}

DenseTensor reconstruct_block(const TensorTrain& tt, std::span<const Index> offset,
                              std::span<const Index> extent) {
    const Shape shape = tt.shape();
    const std::size_t d = shape.size();
    if (offset.size() != d || extent.size() != d)
        throw DimensionError("block description does not match train order " + std::to_string(d));
    for (std::size_t k = 0; k < d; ++k)
        if (offset[k] < 0 || extent[k] <= 0 || offset[k] + extent[k] > shape[k])
            throw IndexError("block offset " + shape_string(offset) + " extent " + shape_string(extent) +
                             " exceeds shape " + shape_string(shape));

    // acc holds (prod of processed extents) x r_l, row-major.
    std::vector<double> acc{1.0};
    Index acc_rows = 1;
    Index r_in = 1;
    std::vector<double> next;
    for (std::size_t k = 0; k < d; ++k) {
        const auto& g = tt.cores()[k];
        const Index n = g.shape()[1], r_out = g.shape()[2];
        const double* gd = g.data().data();
        next.assign(static_cast<std::size_t>(acc_rows * extent[k] * r_out), 0.0);
        for (Index row = 0; row < acc_rows; ++row) {
            const double* a_row = acc.data() + row * r_in;
            for (Index i = 0; i < extent[k]; ++i) {
                const Index gi = offset[k] + i;
                double* out = next.data() + (row * extent[k] + i) * r_out;
                for (Index b = 0; b < r_out; ++b) {
                    double s = 0.0;
                    for (Index a = 0; a < r_in; ++a) s += a_row[a] * gd[(a * n + gi) * r_out + b];
                    out[b] = s;
                }
            }
        }
        acc.swap(next);
        acc_rows *= extent[k];
        r_in = r_out;
    }
    return DenseTensor(Shape(extent.begin(), extent.end()), std::move(acc));
}

DenseTensor reconstruct(const TensorTrain& tt) {
    const Shape shape = tt.shape();
    const Shape zero(shape.size(), 0);
    return reconstruct_block(tt, zero, shape);
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("relative_error: shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()) + " differ");
    double diff = 0.0, ref = 0.0;
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t k = 0; k < ad.size(); ++k) {
        const double e = ad[k] - bd[k];
        diff += e * e;
        ref += ad[k] * ad[k];
    }
    if (ref == 0.0) throw DegenerateInputError("relative_error: reference tensor has zero norm");
    return std::sqrt(diff) / std::sqrt(ref);
}

double compression_ratio(std::span<const Index> shape, std::span<const Index> ranks) {
    if (ranks.size() != shape.size() + 1)
        throw RankError("rank vector of length " + std::to_string(ranks.size()) + " for " +
                        std::to_string(shape.size()) + " modes");
    if (ranks.front() != 1 || ranks.back() != 1) throw RankError("boundary ranks must be 1");
    double total = 1.0, params = 0.0;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        total *= static_cast<double>(shape[k]);
        params += static_cast<double>(shape[k]) * static_cast<double>(ranks[k]) *
                  static_cast<double>(ranks[k + 1]);
    }
    return total / params;
}

double ssim(const Matrix& a, const Matrix& b, std::optional<double> dynamic_range) {
    constexpr Index kWindow = 8;
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("ssim: image shapes differ");
    if (a.rows() < kWindow || a.cols() < kWindow)
        throw DimensionError("ssim: images must be at least 8x8");
    const double range = dynamic_range.value_or(a.maxCoeff() - a.minCoeff());
    if (!(range > 0.0)) throw DegenerateInputError("ssim: dynamic range must be positive");

    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const double n = kWindow * kWindow;

    double total = 0.0;
    Index windows = 0;
    for (Index r0 = 0; r0 + kWindow <= a.rows(); r0 += kWindow) {
        for (Index q0 = 0; q0 + kWindow <= a.cols(); q0 += kWindow) {
            const auto wa = a.block(r0, q0, kWindow, kWindow);
            const auto wb = b.block(r0, q0, kWindow, kWindow);
            const double mu_a = wa.mean();
            const double mu_b = wb.mean();
            const auto da = (wa.array() - mu_a);
            const auto db = (wb.array() - mu_b);
            // Sample (n - 1) normalization.
            const double var_a = (da * da).sum() / (n - 1);
            const double var_b = (db * db).sum() / (n - 1);
            const double cov = (da * db).sum() / (n - 1);
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

}  // namespace ntt
