#include <algorithm>
#include <cmath>
#include <tuple>

#include "model.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::classifiers {

KnnModel train_knn(const LabeledMatrix& data, const KnnParams& params) {
    if (params.k < 1) throw ValidationError("k-NN: k must be >= 1");
    if (static_cast<std::size_t>(params.k) > data.rows.size()) {
        throw ValidationError("k-NN: k = " + std::to_string(params.k) + " exceeds the " +
                              std::to_string(data.rows.size()) + " training rows");
    }
    KnnModel m;
    m.k = params.k;
    m.rows = data.rows;
    m.labels = data.labels;
    m.norms.reserve(m.rows.size());
    for (const auto& r : m.rows) m.norms.push_back(std::sqrt(r.squared_norm()));
    return m;
}

void knn_votes(const KnnModel& model, const FeatureVector& x, std::size_t n_classes,
               std::vector<double>& votes, std::vector<double>& distance_sums) {
    const double nx = std::sqrt(x.squared_norm());
    // (distance, label, row): equal distances resolve by label first so the
    // neighbour multiset does not depend on training row order.
    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    cand.reserve(model.rows.size());
    for (std::size_t i = 0; i < model.rows.size(); ++i) {
        const double nr = model.norms[i];
        const double d = (nx == 0.0 || nr == 0.0) ? 1.0 : 1.0 - x.dot(model.rows[i]) / (nx * nr);
        cand.emplace_back(d, model.labels[i], i);
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(model.k), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());

    votes.assign(n_classes, 0.0);
    distance_sums.assign(n_classes, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& [d, label, row] = cand[i];
        votes[label] += 1.0;
        distance_sums[label] += d;
    }
}

std::vector<std::size_t> balanced_subset(std::span<const std::size_t> labels,
                                         std::size_t n_classes, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) {
            throw ValidationError("balanced subset: label out of range at row " + std::to_string(i));
        }
        by_class[labels[i]].push_back(i);
    }
    std::size_t min_count = labels.size();
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (by_class[c].empty()) {
            throw ValidationError("balanced subset: class " + std::to_string(c) + " has no examples");
        }
        min_count = std::min(min_count, by_class[c].size());
    }

    Rng rng(seed);
    std::vector<std::size_t> keep;
    keep.reserve(min_count * n_classes);
    for (auto& members : by_class) {
        // Partial Fisher-Yates: the first min_count slots become a uniform sample.
        for (std::size_t i = 0; i < min_count; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(members.size() - i));
            std::swap(members[i], members[j]);
        }
        keep.insert(keep.end(), members.begin(),
                    members.begin() + static_cast<std::ptrdiff_t>(min_count));
    }
    std::sort(keep.begin(), keep.end());
    return keep;
}

TrainedClassifier fit_knn_balanced(const LabeledMatrix& data, int k, std::uint64_t seed) {
    return fit(Backend::KnnBalanced, data, KnnParams{k}, seed);
}

}  // namespace tutoreval::classifiers
