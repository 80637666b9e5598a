#include <cmath>
#include <numeric>

#include "model.hpp"
#include "tree_split.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::classifiers {

namespace {

struct ClassWeights {
    std::vector<double> w;

    ClassWeights& operator+=(const ClassWeights& o) {
        for (std::size_t c = 0; c < w.size(); ++c) w[c] += o.w[c];
        return *this;
    }
    ClassWeights& operator-=(const ClassWeights& o) {
        for (std::size_t c = 0; c < w.size(); ++c) w[c] -= o.w[c];
        return *this;
    }
    double total() const { return std::accumulate(w.begin(), w.end(), 0.0); }
    // sum_c w_c^2 / W; larger is purer.
    double purity() const {
        const double t = total();
        if (t <= 0.0) return 0.0;
        double s = 0.0;
        for (double v : w) s += v * v;
        return s / t;
    }
};

class TreeGrower {
public:
    TreeGrower(const LabeledMatrix& data, const ForestParams& params, std::vector<double> weights,
               Rng& rng)
        : data_(data),
          params_(params),
          weights_(std::move(weights)),
          rng_(rng),
          gather_(data.dim()),
          n_classes_(data.class_names.size()),
          per_batch_(std::max<std::size_t>(
              1, static_cast<std::size_t>(std::sqrt(static_cast<double>(data.dim()))))) {}

    Tree grow() {
        std::vector<std::uint32_t> root;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            if (weights_[i] > 0.0) root.push_back(static_cast<std::uint32_t>(i));
        }
        tree_.nodes.clear();
        build(root, 0);
        return std::move(tree_);
    }

private:
    ClassWeights stats_of(std::span<const std::uint32_t> rows) const {
        ClassWeights s{std::vector<double>(n_classes_, 0.0)};
        for (auto r : rows) s.w[data_.labels[r]] += weights_[r];
        return s;
    }

    int make_leaf(const ClassWeights& s) {
        TreeNode leaf;
        leaf.value = static_cast<double>(argmax(s.w));
        tree_.nodes.push_back(leaf);
        return static_cast<int>(tree_.nodes.size() - 1);
    }

    int build(std::vector<std::uint32_t>& rows, int depth) {
        const ClassWeights total = stats_of(rows);
        const double weight = total.total();
        const auto nonzero_classes =
            std::count_if(total.w.begin(), total.w.end(), [](double v) { return v > 0.0; });
        const bool depth_reached = params_.max_depth && depth >= *params_.max_depth;
        if (nonzero_classes <= 1 || weight < params_.min_samples_split || depth_reached) {
            return make_leaf(total);
        }

        auto candidates = detail::active_features(data_.rows, rows, data_.dim(), mark_);
        rng_.shuffle(std::span<std::size_t>(candidates));

        const double parent = total.purity();
        auto add = [&](ClassWeights& s, std::uint32_t r) { s.w[data_.labels[r]] += weights_[r]; };
        auto gain = [&](const ClassWeights& left, const ClassWeights& all) -> std::optional<double> {
            ClassWeights right = all;
            right -= left;
            if (left.total() <= 0.0 || right.total() <= 0.0) return std::nullopt;
            return left.purity() + right.purity() - parent;
        };

        const ClassWeights empty{std::vector<double>(n_classes_, 0.0)};
        std::optional<detail::SplitChoice> best;
        std::size_t best_feature = 0;
        // Draw sqrt(dim) features at a time; keep drawing only while no split helps.
        for (std::size_t pos = 0; pos < candidates.size() && !best; pos += per_batch_) {
            const auto end = std::min(candidates.size(), pos + per_batch_);
            const std::span<const std::size_t> batch(candidates.data() + pos, end - pos);
            gather_.gather(data_.rows, rows, batch);
            for (std::size_t s = 0; s < batch.size(); ++s) {
                auto choice = detail::best_threshold(gather_.bucket(s), rows.size(), empty, total,
                                                     add, gain);
                if (choice && choice->gain > 1e-12 && (!best || choice->gain > best->gain)) {
                    best = choice;
                    best_feature = batch[s];
                }
            }
        }
        if (!best) return make_leaf(total);

        std::vector<std::uint32_t> left_rows;
        std::vector<std::uint32_t> right_rows;
        for (auto r : rows) {
            (data_.rows[r].at(best_feature) <= best->threshold ? left_rows : right_rows).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        const auto self = tree_.nodes.size();
        tree_.nodes.push_back(TreeNode{static_cast<int>(best_feature), best->threshold, -1, -1, 0.0});
        const int l = build(left_rows, depth + 1);
        const int r = build(right_rows, depth + 1);
        tree_.nodes[self].left = l;
        tree_.nodes[self].right = r;
        return static_cast<int>(self);
    }

    const LabeledMatrix& data_;
    const ForestParams& params_;
    std::vector<double> weights_;
    Rng& rng_;
    detail::ColumnGather gather_;
    std::size_t n_classes_;
    std::size_t per_batch_;
    std::vector<char> mark_;
    Tree tree_;
};

}  // namespace

ForestModel train_forest(const LabeledMatrix& data, const ForestParams& params, std::uint64_t seed) {
    if (params.n_trees < 1) throw ValidationError("random forest: n_trees must be >= 1");
    if (params.max_depth && *params.max_depth < 1) {
        throw ValidationError("random forest: max_depth must be >= 1");
    }
    if (params.min_samples_split < 2) {
        throw ValidationError("random forest: min_samples_split must be >= 2");
    }
    Rng rng(seed);
    ForestModel forest;
    const std::size_t n = data.rows.size();
    for (int t = 0; t < params.n_trees; ++t) {
        std::vector<double> weights(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) weights[rng.below(n)] += 1.0;
        TreeGrower grower(data, params, std::move(weights), rng);
        forest.trees.push_back(grower.grow());
    }
    return forest;
}

double Tree::evaluate(const FeatureVector& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x.at(static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left
                                                                                               : n.right);
    }
    return nodes[i].value;
}

nlohmann::json Tree::to_json() const {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> value;
    for (const auto& n : nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
            {"value", value}};
}

Tree Tree::from_json(const nlohmann::json& j) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const auto n = feature.size();
    if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n ||
        value.size() != n) {
        throw ValidationError("malformed tree: column lengths differ");
    }
    Tree t;
    for (std::size_t i = 0; i < n; ++i) {
        if (feature[i] >= 0) {
            const auto ok = [n, i](int c) {
                return c > static_cast<int>(i) && static_cast<std::size_t>(c) < n;
            };
            if (!ok(left[i]) || !ok(right[i])) throw ValidationError("malformed tree: bad child index");
        }
        t.nodes.push_back(TreeNode{feature[i], threshold[i], left[i], right[i], value[i]});
    }
    return t;
}

}  // namespace tutoreval::classifiers
