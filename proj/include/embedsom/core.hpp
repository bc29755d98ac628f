#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace embedsom {

enum class ErrorKind {
    Parameter,  // invalid configuration value (k, sigma, grid, ...)
    Input,      // malformed or unsupported input data
    Contract,   // caller broke a precondition
    State,      // operation not valid in the current session state
    Io,
    Protocol,
};

const char *to_string(ErrorKind kind) noexcept;

/// Exception type used across the library. `code()` is a short
/// machine-readable identifier ("empty_dataset", "unsupported_datatype", ...),
/// `what()` the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string &detail)
        : std::runtime_error(detail), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string &code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

/// Non-owning row-major 2D view. `T` may be const-qualified.
template <typename T>
class MatrixView {
public:
    MatrixView() = default;
    MatrixView(std::span<T> data, std::size_t rows, std::size_t cols)
        : data_(data), rows_(rows), cols_(cols) {
        assert(data.size() == rows * cols);
    }

    // MatrixView<float> -> MatrixView<const float>
    template <typename U>
        requires std::is_same_v<const U, T> && (!std::is_same_v<U, T>)
    MatrixView(MatrixView<U> other)  // NOLINT(google-explicit-constructor)
        : data_(other.data()), rows_(other.rows()), cols_(other.cols()) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }
    std::span<T> data() const noexcept { return data_; }

    std::span<T> row(std::size_t i) const noexcept {
        assert(i < rows_);
        return data_.subspan(i * cols_, cols_);
    }
    T &operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    /// Rows [begin, end).
    MatrixView slice(std::size_t begin, std::size_t end) const noexcept {
        assert(begin <= end && end <= rows_);
        return MatrixView(data_.subspan(begin * cols_, (end - begin) * cols_), end - begin, cols_);
    }

private:
    std::span<T> data_{};
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

/// Owning row-major dense matrix.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw Error(ErrorKind::Contract, "shape_mismatch",
                        "matrix data has " + std::to_string(data_.size()) + " values, expected " +
                            std::to_string(rows_ * cols_));
    }

    static Matrix from_view(MatrixView<const T> v) {
        return Matrix(v.rows(), v.cols(), std::vector<T>(v.data().begin(), v.data().end()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    T &operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    const T &operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    MatrixView<T> view() noexcept { return {data_, rows_, cols_}; }
    MatrixView<const T> view() const noexcept { return {data_, rows_, cols_}; }
    operator MatrixView<const T>() const noexcept { return view(); }  // NOLINT

    void append_row(std::span<const T> values) {
        if (rows_ == 0 && cols_ == 0)
            cols_ = values.size();
        if (values.size() != cols_)
            throw Error(ErrorKind::Contract, "shape_mismatch", "row length mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    void erase_row(std::size_t i) {
        assert(i < rows_);
        auto first = data_.begin() + static_cast<std::ptrdiff_t>(i * cols_);
        data_.erase(first, first + static_cast<std::ptrdiff_t>(cols_));
        --rows_;
    }

    bool operator==(const Matrix &) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Vec2 = std::array<double, 2>;

struct DimStats {
    std::vector<double> min;
    std::vector<double> max;
    std::vector<double> mean;
    std::vector<double> sd;  // population sd (divisor n)
};

DimStats compute_dim_stats(MatrixView<const float> points);

/// n x d measurement matrix with dimension names and cached per-dimension stats.
class Dataset {
public:
    Dataset() = default;
    /// Throws `empty_dataset` for n == 0 or d == 0 and `non_finite` for NaN/Inf cells.
    /// Empty `names` are replaced by "dim0", "dim1", ...
    Dataset(Matrix<float> points, std::vector<std::string> names = {});

    std::size_t size() const noexcept { return points_.rows(); }
    std::size_t dim() const noexcept { return points_.cols(); }
    const Matrix<float> &points() const noexcept { return points_; }
    const std::vector<std::string> &dim_names() const noexcept { return names_; }
    const DimStats &stats() const noexcept { return stats_; }

private:
    Matrix<float> points_;
    std::vector<std::string> names_;
    DimStats stats_;
};

enum class LandmarkId : std::uint64_t {};

/// Paired high-dimensional (g x d) and 2D (g x 2) landmarks with stable ids.
/// Ids are never reused within one model lineage.
class LandmarkModel {
public:
    LandmarkModel() = default;
    LandmarkModel(Matrix<float> hi, Matrix<float> lo);

    std::size_t size() const noexcept { return hi_.rows(); }
    std::size_t dim() const noexcept { return hi_.cols(); }

    const Matrix<float> &hi() const noexcept { return hi_; }
    const Matrix<float> &lo() const noexcept { return lo_; }
    // Shape-preserving mutable access for trainers and the layouter.
    MatrixView<float> hi_mut() noexcept { return hi_.view(); }
    MatrixView<float> lo_mut() noexcept { return lo_.view(); }

    const std::vector<LandmarkId> &ids() const noexcept { return ids_; }
    std::optional<std::size_t> index_of(LandmarkId id) const noexcept;
    /// Throws `unknown_landmark`.
    std::size_t require_index(LandmarkId id) const;

    LandmarkId append(std::span<const float> hi_row, Vec2 lo_pos);
    void erase(std::size_t index);

    bool is_pinned(std::size_t index) const noexcept { return pinned_[index] != 0; }
    void set_pinned(std::size_t index, bool pinned) noexcept { pinned_[index] = pinned ? 1 : 0; }
    std::vector<LandmarkId> pinned_ids() const;
    std::span<const std::uint8_t> pinned_mask() const noexcept { return pinned_; }

    bool operator==(const LandmarkModel &) const = default;

private:
    Matrix<float> hi_;
    Matrix<float> lo_;
    std::vector<LandmarkId> ids_;
    std::vector<std::uint8_t> pinned_;
    std::uint64_t next_id_ = 0;
};

enum class KnnBackend { Base, Bitonic };

const char *to_string(KnnBackend backend) noexcept;
KnnBackend parse_backend(std::string_view name);

struct EmbedParams {
    std::size_t k = 16;
};

/// Throws `invalid_k` when k is outside [3, g] (or, for the bitonic backend,
/// not one of 4, 8, ..., 64 within g).
void validate_embed_params(const EmbedParams &params, std::size_t g, KnnBackend backend);

bool is_power_of_two(std::size_t x) noexcept;

struct Frame {
    std::uint32_t frame_id = 0;
    Matrix<float> positions;  // n x 2
};

}  // namespace embedsom
