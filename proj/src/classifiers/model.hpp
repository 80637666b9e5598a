#pragma once

// Fitted model state shared by the classifier translation units.

#include <cstdint>
#include <variant>
#include <vector>

#include "tutoreval/classifiers.hpp"

namespace tutoreval::classifiers {

struct KnnModel {
    int k = 1;
    std::vector<FeatureVector> rows;
    std::vector<double> norms;
    std::vector<std::size_t> labels;
};

/// Internal node when feature >= 0 (x[feature] <= threshold goes left); leaf otherwise.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // class id (forest) or leaf weight (boosting)
};

struct Tree {
    std::vector<TreeNode> nodes;

    double evaluate(const FeatureVector& x) const;
    nlohmann::json to_json() const;
    static Tree from_json(const nlohmann::json& j);
};

struct ForestModel {
    std::vector<Tree> trees;
};

/// One weight row and bias per class.
struct LinearModel {
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
};

struct BoostModel {
    std::vector<double> base;  // log class priors
    double learning_rate = 0.1;
    std::vector<std::vector<Tree>> rounds;  // rounds[r][class]
};

struct Model {
    Backend backend = Backend::Knn;
    std::vector<std::string> class_names;
    std::size_t dim = 0;
    std::variant<KnnModel, ForestModel, LinearModel, BoostModel> body;
    std::vector<double> losses;
};

KnnModel train_knn(const LabeledMatrix& data, const KnnParams& params);
/// Votes per class and summed distance per class over the k nearest rows.
void knn_votes(const KnnModel& model, const FeatureVector& x, std::size_t n_classes,
               std::vector<double>& votes, std::vector<double>& distance_sums);

ForestModel train_forest(const LabeledMatrix& data, const ForestParams& params, std::uint64_t seed);

LinearModel train_svm(const LabeledMatrix& data, const SvmParams& params, std::uint64_t seed);
LinearModel train_softmax(const LabeledMatrix& data, const SoftmaxParams& params,
                          std::vector<double>& losses);
std::vector<double> linear_scores(const LinearModel& model, const FeatureVector& x);

BoostModel train_boost(const LabeledMatrix& data, const BoostParams& params, std::uint64_t seed);
std::vector<double> boost_scores(const BoostModel& model, const FeatureVector& x);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);
/// First index of the maximum.
std::size_t argmax(std::span<const double> xs);

}  // namespace tutoreval::classifiers
