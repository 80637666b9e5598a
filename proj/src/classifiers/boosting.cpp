#include <algorithm>
#include <cmath>
#include <numeric>

#include "model.hpp"
#include "tree_split.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::classifiers {

namespace {

struct GradSum {
    double g = 0.0;
    double h = 0.0;

    GradSum& operator+=(const GradSum& o) {
        g += o.g;
        h += o.h;
        return *this;
    }
    GradSum& operator-=(const GradSum& o) {
        g -= o.g;
        h -= o.h;
        return *this;
    }
};

// Second-order regression tree on (gradient, hessian) pairs, depth-limited.
class RegressionTreeGrower {
public:
    RegressionTreeGrower(const LabeledMatrix& data, const BoostParams& params,
                         std::span<const double> grad, std::span<const double> hess)
        : data_(data), params_(params), grad_(grad), hess_(hess), gather_(data.dim()) {}

    Tree grow(std::vector<std::uint32_t> rows) {
        tree_.nodes.clear();
        build(rows, 0);
        return std::move(tree_);
    }

private:
    double score(const GradSum& s) const { return s.g * s.g / (s.h + params_.l2); }

    int build(std::vector<std::uint32_t>& rows, int depth) {
        GradSum total;
        for (auto r : rows) total += GradSum{grad_[r], hess_[r]};

        std::optional<detail::SplitChoice> best;
        std::size_t best_feature = 0;
        if (depth < params_.max_depth && rows.size() >= 2) {
            const double parent = score(total);
            auto add = [&](GradSum& s, std::uint32_t r) { s += GradSum{grad_[r], hess_[r]}; };
            auto gain = [&](const GradSum& left, const GradSum& all) -> std::optional<double> {
                GradSum right = all;
                right -= left;
                if (left.h < params_.min_child_weight || right.h < params_.min_child_weight) {
                    return std::nullopt;
                }
                return 0.5 * (score(left) + score(right) - parent);
            };
            const auto features = detail::active_features(data_.rows, rows, data_.dim(), mark_);
            constexpr std::size_t kChunk = 256;
            for (std::size_t pos = 0; pos < features.size(); pos += kChunk) {
                const auto end = std::min(features.size(), pos + kChunk);
                const std::span<const std::size_t> batch(features.data() + pos, end - pos);
                gather_.gather(data_.rows, rows, batch);
                for (std::size_t s = 0; s < batch.size(); ++s) {
                    auto choice = detail::best_threshold(gather_.bucket(s), rows.size(), GradSum{},
                                                         total, add, gain);
                    if (choice && choice->gain > 1e-12 && (!best || choice->gain > best->gain)) {
                        best = choice;
                        best_feature = batch[s];
                    }
                }
            }
        }
        if (!best) {
            TreeNode leaf;
            leaf.value = -total.g / (total.h + params_.l2);
            tree_.nodes.push_back(leaf);
            return static_cast<int>(tree_.nodes.size() - 1);
        }

        std::vector<std::uint32_t> left_rows;
        std::vector<std::uint32_t> right_rows;
        for (auto r : rows) {
            (data_.rows[r].at(best_feature) <= best->threshold ? left_rows : right_rows).push_back(r);
        }
        const auto self = tree_.nodes.size();
        tree_.nodes.push_back(TreeNode{static_cast<int>(best_feature), best->threshold, -1, -1, 0.0});
        const int l = build(left_rows, depth + 1);
        const int r = build(right_rows, depth + 1);
        tree_.nodes[self].left = l;
        tree_.nodes[self].right = r;
        return static_cast<int>(self);
    }

    const LabeledMatrix& data_;
    const BoostParams& params_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    detail::ColumnGather gather_;
    std::vector<char> mark_;
    Tree tree_;
};

}  // namespace

BoostModel train_boost(const LabeledMatrix& data, const BoostParams& params, std::uint64_t seed) {
    if (params.rounds < 1) throw ValidationError("boosting: rounds must be >= 1");
    if (params.max_depth < 1) throw ValidationError("boosting: max_depth must be >= 1");
    if (!(params.learning_rate >= 0.0)) throw ValidationError("boosting: learning rate must be >= 0");
    if (!(params.subsample > 0.0 && params.subsample <= 1.0)) {
        throw ValidationError("boosting: subsample must lie in (0, 1]");
    }
    if (params.l2 < 0.0 || params.min_child_weight < 0.0) {
        throw ValidationError("boosting: l2 and min_child_weight must be >= 0");
    }

    const std::size_t n = data.rows.size();
    const std::size_t k = data.class_names.size();
    BoostModel model;
    model.learning_rate = params.learning_rate;

    // Start from log class priors; absent classes get a floor far below the rest.
    const auto counts = data.class_counts();
    model.base.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        model.base[c] = counts[c] > 0
                            ? std::log(static_cast<double>(counts[c]) / static_cast<double>(n))
                            : std::log(0.5 / static_cast<double>(n)) - 30.0;
    }

    std::vector<std::vector<double>> raw(n, model.base);
    std::vector<double> grad(n);
    std::vector<double> hess(n);
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), std::uint32_t{0});
    const auto n_sample = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))));
    Rng rng(seed);

    std::vector<std::vector<double>> probs(n);
    for (int round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) probs[i] = softmax(raw[i]);

        std::vector<std::uint32_t> rows = all;
        if (n_sample < n) {
            rng.shuffle(std::span<std::uint32_t>(rows));
            rows.resize(n_sample);
            std::sort(rows.begin(), rows.end());
        }

        std::vector<Tree> trees;
        trees.reserve(k);
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[i][c];
                grad[i] = p - (data.labels[i] == c ? 1.0 : 0.0);
                hess[i] = std::max(p * (1.0 - p), 1e-16);
            }
            RegressionTreeGrower grower(data, params, grad, hess);
            trees.push_back(grower.grow(rows));
            for (std::size_t i = 0; i < n; ++i) {
                raw[i][c] += params.learning_rate * trees.back().evaluate(data.rows[i]);
            }
        }
        model.rounds.push_back(std::move(trees));
    }
    return model;
}

std::vector<double> boost_scores(const BoostModel& model, const FeatureVector& x) {
    std::vector<double> out = model.base;
    for (const auto& trees : model.rounds) {
        for (std::size_t c = 0; c < trees.size(); ++c) {
            out[c] += model.learning_rate * trees[c].evaluate(x);
        }
    }
    return out;
}

}  // namespace tutoreval::classifiers
