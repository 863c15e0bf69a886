#include "ntt/store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ntt/errors.hpp"

namespace fs = std::filesystem;

namespace ntt {
namespace {

std::uint64_t byteswap64(std::uint64_t v) {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) {
        r = (r << 8) | (v & 0xFF);
        v >>= 8;
    }
    return r;
}

void to_little_endian(std::span<double> values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (double& v : values) v = std::bit_cast<double>(byteswap64(std::bit_cast<std::uint64_t>(v)));
    }
}

Shape read_extent_list(const nlohmann::json& meta, const char* key, const fs::path& file) {
    if (!meta.contains(key) || !meta[key].is_array())
        throw StoreError(file.string() + ": missing array '" + key + "'");
    Shape out;
    for (const auto& v : meta[key]) {
        if (!v.is_number_integer() || v.get<Index>() <= 0)
            throw StoreError(file.string() + ": '" + key + "' must hold positive integers");
        out.push_back(v.get<Index>());
    }
    return out;
}

}  // namespace

ChunkedTensorStore::ChunkedTensorStore(fs::path dir, Shape shape, Shape chunk_shape)
    : dir_(std::move(dir)), shape_(std::move(shape)), chunk_shape_(std::move(chunk_shape)) {
    if (shape_.empty() || shape_.size() != chunk_shape_.size())
        throw DimensionError("store chunk shape must have one extent per mode");
    for (std::size_t k = 0; k < shape_.size(); ++k) {
        if (shape_[k] <= 0 || chunk_shape_[k] <= 0)
            throw DimensionError("store extents must be positive");
        if (shape_[k] % chunk_shape_[k] != 0)
            throw DimensionError("chunk extent " + std::to_string(chunk_shape_[k]) + " does not divide extent " +
                                 std::to_string(shape_[k]) + " of mode " + std::to_string(k));
    }
}

ChunkedTensorStore ChunkedTensorStore::create(const fs::path& dir, Shape shape, Shape chunk_shape) {
    ChunkedTensorStore store(dir, std::move(shape), std::move(chunk_shape));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());

    nlohmann::json meta;
    meta["format_version"] = kFormatVersion;
    meta["shape"] = store.shape_;
    meta["chunk_shape"] = store.chunk_shape_;
    meta["dtype"] = "f64le";
    meta["order"] = "C";
    std::ofstream out(dir / "meta.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << '\n';
    if (!out) throw StoreError("cannot write " + (dir / "meta.json").string());
    return store;
}

ChunkedTensorStore ChunkedTensorStore::open(const fs::path& dir) {
    const fs::path file = dir / "meta.json";
    std::ifstream in(file, std::ios::binary);
    if (!in) throw StoreError("cannot open " + file.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw StoreError(file.string() + ": " + e.what());
    }
    if (meta.value("format_version", -1) != kFormatVersion)
        throw StoreError(file.string() + ": unsupported format_version");
    if (meta.value("dtype", std::string{}) != "f64le") throw StoreError(file.string() + ": dtype must be f64le");
    if (meta.value("order", std::string{}) != "C") throw StoreError(file.string() + ": order must be C");
    try {
        return ChunkedTensorStore(dir, read_extent_list(meta, "shape", file),
                                  read_extent_list(meta, "chunk_shape", file));
    } catch (const DimensionError& e) {
        throw StoreError(file.string() + ": " + e.message());
    }
}

ChunkedTensorStore ChunkedTensorStore::write(const fs::path& dir, const DenseTensor& t, Shape chunk_shape) {
    auto store = create(dir, t.shape(), std::move(chunk_shape));
    const Shape grid = store.chunk_grid();
    const Index chunks = element_count(grid);
    Shape cidx(grid.size(), 0);
    Shape offset(grid.size());
    for (Index c = 0; c < chunks; ++c) {
        Index rem = c;
        for (std::size_t k = grid.size(); k-- > 0;) {
            cidx[k] = rem % grid[k];
            rem /= grid[k];
            offset[k] = cidx[k] * store.chunk_shape_[k];
        }
        // Gather the chunk from the in-memory tensor row by row.
        const Index last = store.chunk_shape_.back();
        std::vector<double> buf(static_cast<std::size_t>(element_count(store.chunk_shape_)));
        const Index rows = static_cast<Index>(buf.size()) / last;
        Shape local(grid.size(), 0);
        for (Index r = 0; r < rows; ++r) {
            Index rr = r;
            for (std::size_t k = grid.size() - 1; k-- > 0;) {
                local[k] = rr % store.chunk_shape_[k];
                rr /= store.chunk_shape_[k];
            }
            Shape global(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k) global[k] = offset[k] + local[k];
            global.back() = offset.back();
            const Index flat = t.flat_index(global);
            std::copy_n(t.data().data() + flat, last, buf.data() + r * last);
        }
        store.write_chunk(cidx, buf);
    }
    return store;
}

Shape ChunkedTensorStore::chunk_grid() const {
    Shape g(shape_.size());
    for (std::size_t k = 0; k < shape_.size(); ++k) g[k] = shape_[k] / chunk_shape_[k];
    return g;
}

void ChunkedTensorStore::check_chunk_index(std::span<const Index> chunk_index) const {
    const Shape grid = chunk_grid();
    if (chunk_index.size() != grid.size()) throw StoreError("chunk index arity does not match store");
    for (std::size_t k = 0; k < grid.size(); ++k)
        if (chunk_index[k] < 0 || chunk_index[k] >= grid[k]) throw StoreError("chunk index out of range");
}

fs::path ChunkedTensorStore::chunk_path(std::span<const Index> chunk_index) const {
    std::string name = "c";
    for (Index i : chunk_index) name += "." + std::to_string(i);
    return dir_ / name;
}

void ChunkedTensorStore::write_chunk(std::span<const Index> chunk_index, std::span<const double> values) const {
    check_chunk_index(chunk_index);
    if (static_cast<Index>(values.size()) != element_count(chunk_shape_))
        throw StoreError("chunk payload has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(element_count(chunk_shape_)));
    const fs::path file = chunk_path(chunk_index);
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot open " + file.string() + " for writing");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    } else {
        std::vector<double> le(values.begin(), values.end());
        to_little_endian(le);
        out.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size() * sizeof(double)));
    }
    if (!out) throw StoreError("short write to " + file.string());
}

std::vector<double> ChunkedTensorStore::read_chunk(std::span<const Index> chunk_index) const {
    check_chunk_index(chunk_index);
    const fs::path file = chunk_path(chunk_index);
    const auto expected = static_cast<std::uintmax_t>(element_count(chunk_shape_)) * sizeof(double);
    std::error_code ec;
    const auto actual = fs::file_size(file, ec);
    if (ec) throw StoreError("cannot stat " + file.string() + ": " + ec.message());
    if (actual != expected)
        throw StoreError(file.string() + " holds " + std::to_string(actual) + " bytes, expected " +
                         std::to_string(expected));
    std::vector<double> values(static_cast<std::size_t>(element_count(chunk_shape_)));
    std::ifstream in(file, std::ios::binary);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
    if (!in) throw StoreError("short read from " + file.string());
    to_little_endian(values);
    return values;
}

DenseTensor ChunkedTensorStore::read_all() const {
    const Shape zero(shape_.size(), 0);
    return read_box(zero, shape_);
}

DenseTensor ChunkedTensorStore::read_box(std::span<const Index> offset, std::span<const Index> extent) const {
    const std::size_t d = shape_.size();
    if (offset.size() != d || extent.size() != d) throw DimensionError("box arity does not match store");
    for (std::size_t k = 0; k < d; ++k)
        if (offset[k] < 0 || extent[k] <= 0 || offset[k] + extent[k] > shape_[k])
            throw DimensionError("box exceeds stored shape");

    DenseTensor out(Shape(extent.begin(), extent.end()));
    StoreReader reader(*this);
    const Index last = extent.back();
    const Index rows = out.size() / last;
    const Shape strides = row_major_strides(shape_);
    for (Index r = 0; r < rows; ++r) {
        Index rr = r;
        Index flat = offset[d - 1];
        for (std::size_t k = d - 1; k-- > 0;) {
            flat += (offset[k] + rr % extent[k]) * strides[k];
            rr /= extent[k];
        }
        reader.read_flat_range(flat, out.data().subspan(static_cast<std::size_t>(r * last), static_cast<std::size_t>(last)));
    }
    return out;
}

// ---------------------------------------------------------------------------

StoreReader::StoreReader(const ChunkedTensorStore& store)
    : store_(store), chunk_grid_(store.chunk_grid()), strides_(row_major_strides(store.shape())) {}

const std::vector<double>& StoreReader::chunk(Index linear_chunk) {
    auto it = cache_.find(linear_chunk);
    if (it != cache_.end()) return it->second;
    Shape cidx(chunk_grid_.size());
    Index rem = linear_chunk;
    for (std::size_t k = chunk_grid_.size(); k-- > 0;) {
        cidx[k] = rem % chunk_grid_[k];
        rem /= chunk_grid_[k];
    }
    return cache_.emplace(linear_chunk, store_.read_chunk(cidx)).first->second;
}

void StoreReader::read_flat_range(Index begin, std::span<double> out) {
    const Shape& shape = store_.shape();
    const Shape& cshape = store_.chunk_shape();
    const std::size_t d = shape.size();
    const Index total = element_count(shape);
    if (begin < 0 || begin + static_cast<Index>(out.size()) > total)
        throw DimensionError("flat range exceeds stored tensor");

    Index pos = begin;
    std::size_t written = 0;
    while (written < out.size()) {
        Index linear_chunk = 0;
        Index in_chunk = 0;
        Index last_within = 0;
        for (std::size_t k = 0; k < d; ++k) {
            const Index idx = (pos / strides_[k]) % shape[k];
            linear_chunk = linear_chunk * chunk_grid_[k] + idx / cshape[k];
            in_chunk = in_chunk * cshape[k] + idx % cshape[k];
            if (k + 1 == d) last_within = idx % cshape[k];
        }
        const Index run = std::min<Index>(static_cast<Index>(out.size() - written), cshape[d - 1] - last_within);
        const auto& values = chunk(linear_chunk);
        std::copy_n(values.data() + in_chunk, run, out.data() + written);
        written += static_cast<std::size_t>(run);
        pos += run;
    }
}

double StoreReader::read_element(std::span<const Index> index) {
    const Shape& shape = store_.shape();
    if (index.size() != shape.size()) throw IndexError("index arity does not match store");
    Index flat = 0;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (index[k] < 0 || index[k] >= shape[k]) throw IndexError("index out of range for store");
        flat += index[k] * strides_[k];
    }
    double v = 0.0;
    read_flat_range(flat, std::span<double>(&v, 1));
    return v;
}

}  // namespace ntt
