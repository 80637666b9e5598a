#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tutoreval/features.hpp"

namespace tutoreval::classifiers {

/// A feature row stored either densely (one value per column) or sparsely
/// (strictly increasing column indices, implicit zeros elsewhere).
class FeatureVector {
public:
    FeatureVector() = default;

    static FeatureVector dense(std::vector<double> values);
    /// Throws ValidationError unless indices are strictly increasing and < dim.
    static FeatureVector sparse(std::vector<std::size_t> indices, std::vector<double> values,
                                std::size_t dim);
    static FeatureVector from(const features::SparseVector& v);

    std::size_t dim() const { return dim_; }
    bool is_dense() const { return dense_; }
    /// Stored entries; for dense rows this is every column.
    std::size_t stored() const { return values_.size(); }
    std::size_t index(std::size_t k) const { return dense_ ? k : indices_[k]; }
    double value(std::size_t k) const { return values_[k]; }

    double at(std::size_t column) const;
    double dot(const FeatureVector& other) const;
    double dot(std::span<const double> dense_weights) const;
    double squared_norm() const;
    std::vector<double> to_dense() const;

    nlohmann::json to_json() const;
    static FeatureVector from_json(const nlohmann::json& j);

private:
    std::vector<std::size_t> indices_;
    std::vector<double> values_;
    std::size_t dim_ = 0;
    bool dense_ = true;
};

struct LabeledMatrix {
    std::vector<FeatureVector> rows;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;

    std::size_t dim() const { return rows.empty() ? 0 : rows.front().dim(); }
    /// Throws ValidationError on ragged dims, length mismatch, or out-of-range labels.
    void validate() const;
    std::vector<std::size_t> class_counts() const;
};

enum class Backend { Knn, KnnBalanced, RandomForest, LinearSvm, SoftmaxRegression, GradientBoostedTrees };

std::string_view to_string(Backend b);
/// Accepts knn, knn_balanced, forest, svm, softmax, gbt.
Backend parse_backend(std::string_view s);

struct KnnParams {
    int k = 5;
};

struct ForestParams {
    int n_trees = 100;
    std::optional<int> max_depth;  // unlimited when empty
    int min_samples_split = 2;
};

/// One-vs-rest hinge loss, Pegasos sub-gradient steps, bias as a regularized constant feature.
struct SvmParams {
    double lambda = 1e-4;
    int epochs = 50;
};

/// Full-batch gradient descent on mean cross-entropy with step halving on any loss increase.
struct SoftmaxParams {
    double learning_rate = 1.0;
    double l2 = 0.0;
    double tol = 1e-4;
    int n_iter_no_change = 10;
    int max_iter = 500;
};

struct BoostParams {
    int rounds = 100;
    int max_depth = 3;
    double learning_rate = 0.1;  // 0 is allowed and leaves the prior in place
    double subsample = 1.0;
    double l2 = 1.0;
    double min_child_weight = 1.0;
};

using Hyperparams = std::variant<KnnParams, ForestParams, SvmParams, SoftmaxParams, BoostParams>;

Hyperparams default_params(Backend backend);

struct Model;

/// Immutable fitted model. Copies share state.
class TrainedClassifier {
public:
    Backend backend() const;
    const std::vector<std::string>& class_names() const;
    std::size_t dim() const;

    /// Ties go to the lower class id. k-NN: majority vote, then smaller summed
    /// distance, then lower class id.
    std::size_t predict(const FeatureVector& x) const;
    std::vector<std::size_t> predict_batch(std::span<const FeatureVector> xs) const;

    /// Vote fractions (k-NN, forest) or softmax output (softmax, boosting).
    /// Throws ValidationError for LinearSvm, which only exposes margins.
    std::vector<double> predict_proba(const FeatureVector& x) const;

    /// Per-class scores whose argmax is the prediction (votes, margins, logits).
    std::vector<double> decision_scores(const FeatureVector& x) const;

    /// Loss after each accepted step (softmax regression only; empty otherwise, and after reload).
    const std::vector<double>& training_losses() const;

    nlohmann::json to_json() const;
    static TrainedClassifier from_json(const nlohmann::json& j);

    explicit TrainedClassifier(std::shared_ptr<const Model> model);

private:
    void check_dim(const FeatureVector& x) const;
    std::shared_ptr<const Model> model_;
};

inline constexpr int kModelFormatVersion = 1;

/// Deterministic for fixed (data, params, seed). Throws ValidationError on bad
/// parameters, params that do not match the backend, or single-class data for
/// LinearSvm / SoftmaxRegression.
TrainedClassifier fit(Backend backend, const LabeledMatrix& data, const Hyperparams& params,
                      std::uint64_t seed);

/// k-NN on a class-balanced subset of `data` (see balanced_subset).
TrainedClassifier fit_knn_balanced(const LabeledMatrix& data, int k, std::uint64_t seed);

/// Row indices keeping exactly min-class-count examples of every class, chosen
/// uniformly per class with Rng(seed). Returned in ascending order. Throws if
/// some class has no example.
std::vector<std::size_t> balanced_subset(std::span<const std::size_t> labels,
                                         std::size_t n_classes, std::uint64_t seed);

/// Cosine distance 1 - a.b / (|a||b|); 1 when either side is the zero vector.
double cosine_distance(const FeatureVector& a, const FeatureVector& b);

/// Parts of one example for embedding-based features.
struct FeatureParts {
    std::vector<double> response;
    std::optional<std::vector<double>> history;
    std::optional<std::array<double, 3>> probs;  // (yes, no, tse)
};

/// Concatenate (response, history, probs) in that order.
std::vector<double> concat_features(std::span<const double> response,
                                    std::optional<std::span<const double>> history,
                                    std::optional<std::array<double, 3>> probs);

/// Row-wise concat_features; throws ValidationError if the parts present or
/// their dims differ between rows.
std::vector<FeatureVector> concat_feature_rows(std::span<const FeatureParts> rows);

}  // namespace tutoreval::classifiers
