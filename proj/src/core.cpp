#include "embedsom/core.hpp"

#include <algorithm>
#include <cmath>

namespace embedsom {

const char *to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Input: return "input";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::State: return "state";
    case ErrorKind::Io: return "io";
    case ErrorKind::Protocol: return "protocol";
    }
    return "unknown";
}

DimStats compute_dim_stats(MatrixView<const float> points) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (n == 0 || d == 0)
        throw Error(ErrorKind::Input, "empty_dataset", "empty dataset");

    DimStats st;
    st.min.assign(d, 0.0);
    st.max.assign(d, 0.0);
    st.mean.assign(d, 0.0);
    st.sd.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        st.min[j] = st.max[j] = points(0, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto r = points.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double v = r[j];
            st.min[j] = std::min(st.min[j], v);
            st.max[j] = std::max(st.max[j], v);
            st.mean[j] += v;
        }
    }
    for (auto &m : st.mean)
        m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = points.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = r[j] - st.mean[j];
            st.sd[j] += dev * dev;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        // exact zero for constant columns
        st.sd[j] = st.min[j] == st.max[j] ? 0.0 : std::sqrt(st.sd[j] / static_cast<double>(n));
    }
    return st;
}

Dataset::Dataset(Matrix<float> points, std::vector<std::string> names)
    : points_(std::move(points)), names_(std::move(names)) {
    if (points_.rows() == 0 || points_.cols() == 0)
        throw Error(ErrorKind::Input, "empty_dataset", "empty dataset");
    for (std::size_t i = 0; i < points_.rows(); ++i) {
        auto r = points_.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (!std::isfinite(r[j]))
                throw Error(ErrorKind::Input, "non_finite",
                            "non-finite value at row " + std::to_string(i) + ", column " +
                                std::to_string(j));
        }
    }
    if (names_.empty()) {
        for (std::size_t j = 0; j < points_.cols(); ++j)
            names_.push_back("dim" + std::to_string(j));
    } else if (names_.size() != points_.cols()) {
        throw Error(ErrorKind::Contract, "shape_mismatch",
                    "got " + std::to_string(names_.size()) + " dimension names for " +
                        std::to_string(points_.cols()) + " columns");
    }
    stats_ = compute_dim_stats(points_.view());
}

LandmarkModel::LandmarkModel(Matrix<float> hi, Matrix<float> lo) : hi_(std::move(hi)), lo_(std::move(lo)) {
    if (hi_.rows() != lo_.rows())
        throw Error(ErrorKind::Contract, "shape_mismatch",
                    "high-dimensional and 2D landmark counts differ");
    if (lo_.rows() > 0 && lo_.cols() != 2)
        throw Error(ErrorKind::Contract, "shape_mismatch", "2D landmarks must have 2 columns");
    if (lo_.rows() == 0)
        lo_ = Matrix<float>(0, 2);
    for (std::size_t i = 0; i < hi_.rows(); ++i)
        ids_.push_back(LandmarkId{next_id_++});
    pinned_.assign(hi_.rows(), 0);
}

std::optional<std::size_t> LandmarkModel::index_of(LandmarkId id) const noexcept {
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
}

std::size_t LandmarkModel::require_index(LandmarkId id) const {
    if (auto idx = index_of(id))
        return *idx;
    throw Error(ErrorKind::Contract, "unknown_landmark",
                "unknown landmark id " + std::to_string(static_cast<std::uint64_t>(id)));
}

LandmarkId LandmarkModel::append(std::span<const float> hi_row, Vec2 lo_pos) {
    if (hi_.rows() > 0 && hi_row.size() != hi_.cols())
        throw Error(ErrorKind::Contract, "shape_mismatch", "landmark dimension mismatch");
    hi_.append_row(hi_row);
    const float p[2] = {static_cast<float>(lo_pos[0]), static_cast<float>(lo_pos[1])};
    lo_.append_row(p);
    const LandmarkId id{next_id_++};
    ids_.push_back(id);
    pinned_.push_back(0);
    return id;
}

void LandmarkModel::erase(std::size_t index) {
    hi_.erase_row(index);
    lo_.erase_row(index);
    ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(index));
    pinned_.erase(pinned_.begin() + static_cast<std::ptrdiff_t>(index));
}

std::vector<LandmarkId> LandmarkModel::pinned_ids() const {
    std::vector<LandmarkId> out;
    for (std::size_t i = 0; i < ids_.size(); ++i)
        if (pinned_[i])
            out.push_back(ids_[i]);
    return out;
}

const char *to_string(KnnBackend backend) noexcept {
    return backend == KnnBackend::Base ? "base" : "bitonic";
}

KnnBackend parse_backend(std::string_view name) {
    if (name == "base")
        return KnnBackend::Base;
    if (name == "bitonic")
        return KnnBackend::Bitonic;
    throw Error(ErrorKind::Parameter, "invalid_backend", "unknown k-NN backend '" + std::string(name) + "'");
}

bool is_power_of_two(std::size_t x) noexcept { return x != 0 && (x & (x - 1)) == 0; }

void validate_embed_params(const EmbedParams &params, std::size_t g, KnnBackend backend) {
    const std::size_t k = params.k;
    if (k < 3 || k > g)
        throw Error(ErrorKind::Parameter, "invalid_k",
                    "k = " + std::to_string(k) + " must satisfy 3 <= k <= g = " + std::to_string(g));
    if (backend == KnnBackend::Bitonic && (!is_power_of_two(k) || k < 4 || k > 64))
        throw Error(ErrorKind::Parameter, "invalid_k",
                    "bitonic backend needs k in {4, 8, 16, 32, 64}, got " + std::to_string(k));
}

}  // namespace embedsom
