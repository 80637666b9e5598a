#include <algorithm>
#include <cmath>

#include "tutoreval/classifiers.hpp"
#include "tutoreval/errors.hpp"

namespace tutoreval::classifiers {

FeatureVector FeatureVector::dense(std::vector<double> values) {
    FeatureVector v;
    v.dim_ = values.size();
    v.values_ = std::move(values);
    v.dense_ = true;
    return v;
}

FeatureVector FeatureVector::sparse(std::vector<std::size_t> indices, std::vector<double> values,
                                    std::size_t dim) {
    if (indices.size() != values.size()) {
        throw ValidationError("sparse row: indices and values differ in length");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= dim || (k > 0 && indices[k] <= indices[k - 1])) {
            throw ValidationError("sparse row: indices must be strictly increasing and < dim");
        }
    }
    FeatureVector v;
    v.indices_ = std::move(indices);
    v.values_ = std::move(values);
    v.dim_ = dim;
    v.dense_ = false;
    return v;
}

FeatureVector FeatureVector::from(const features::SparseVector& v) {
    return sparse(v.indices, v.values, v.dim);
}

double FeatureVector::at(std::size_t column) const {
    if (dense_) return column < values_.size() ? values_[column] : 0.0;
    auto it = std::lower_bound(indices_.begin(), indices_.end(), column);
    if (it == indices_.end() || *it != column) return 0.0;
    return values_[static_cast<std::size_t>(it - indices_.begin())];
}

double FeatureVector::dot(const FeatureVector& other) const {
    if (dense_ && other.dense_) {
        double s = 0.0;
        const auto n = std::min(values_.size(), other.values_.size());
        for (std::size_t j = 0; j < n; ++j) s += values_[j] * other.values_[j];
        return s;
    }
    if (dense_) return other.dot(std::span<const double>(values_));
    if (other.dense_) return dot(std::span<const double>(other.values_));
    double s = 0.0;
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < indices_.size() && b < other.indices_.size()) {
        if (indices_[a] < other.indices_[b]) {
            ++a;
        } else if (indices_[a] > other.indices_[b]) {
            ++b;
        } else {
            s += values_[a++] * other.values_[b++];
        }
    }
    return s;
}

double FeatureVector::dot(std::span<const double> dense_weights) const {
    double s = 0.0;
    if (dense_) {
        const auto n = std::min(values_.size(), dense_weights.size());
        for (std::size_t j = 0; j < n; ++j) s += values_[j] * dense_weights[j];
    } else {
        for (std::size_t k = 0; k < indices_.size(); ++k) {
            if (indices_[k] < dense_weights.size()) s += values_[k] * dense_weights[indices_[k]];
        }
    }
    return s;
}

double FeatureVector::squared_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
}

std::vector<double> FeatureVector::to_dense() const {
    if (dense_) return values_;
    std::vector<double> out(dim_, 0.0);
    for (std::size_t k = 0; k < indices_.size(); ++k) out[indices_[k]] = values_[k];
    return out;
}

nlohmann::json FeatureVector::to_json() const {
    if (dense_) return {{"dense", values_}};
    return {{"dim", dim_}, {"indices", indices_}, {"values", values_}};
}

FeatureVector FeatureVector::from_json(const nlohmann::json& j) {
    if (j.contains("dense")) return dense(j.at("dense").get<std::vector<double>>());
    return sparse(j.at("indices").get<std::vector<std::size_t>>(),
                  j.at("values").get<std::vector<double>>(), j.at("dim").get<std::size_t>());
}

void LabeledMatrix::validate() const {
    if (rows.size() != labels.size()) {
        throw ValidationError("labeled matrix: " + std::to_string(rows.size()) + " rows but " +
                              std::to_string(labels.size()) + " labels");
    }
    const auto d = dim();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].dim() != d) {
            throw ValidationError("dimension mismatch: row " + std::to_string(i) + " has dim " +
                                  std::to_string(rows[i].dim()) + ", expected " + std::to_string(d));
        }
        if (labels[i] >= class_names.size()) {
            throw ValidationError("label " + std::to_string(labels[i]) + " of row " +
                                  std::to_string(i) + " is not a known class id");
        }
    }
}

std::vector<std::size_t> LabeledMatrix::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (auto l : labels) {
        if (l < counts.size()) ++counts[l];
    }
    return counts;
}

double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
    const double na = std::sqrt(a.squared_norm());
    const double nb = std::sqrt(b.squared_norm());
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - a.dot(b) / (na * nb);
}

}  // namespace tutoreval::classifiers
