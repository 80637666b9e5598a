#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tutoreval/classifiers.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

using namespace tutoreval;
using namespace tutoreval::classifiers;

namespace {

const Backend kAllBackends[] = {Backend::Knn, Backend::KnnBalanced, Backend::RandomForest,
                                Backend::LinearSvm, Backend::SoftmaxRegression, Backend::GradientBoostedTrees};

LabeledMatrix three_points(std::size_t copies) {
    LabeledMatrix m;
    m.class_names = {"No", "To some extent", "Yes"};
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<double> v(3, 0.0);
        v[c] = 1.0;
        for (std::size_t i = 0; i < copies; ++i) {
            m.rows.push_back(FeatureVector::dense(v));
            m.labels.push_back(c);
        }
    }
    return m;
}

/// Gaussian-ish blobs, one per class, dense or sparse.
LabeledMatrix blobs(std::size_t n_classes, std::size_t per_class, std::size_t dim, std::uint64_t seed, bool sparse) {
    Rng rng(seed);
    LabeledMatrix m;
    for (std::size_t c = 0; c < n_classes; ++c) m.class_names.push_back("c" + std::to_string(c));
    for (std::size_t c = 0; c < n_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<double> v(dim, 0.0);
            for (std::size_t j = 0; j < dim; ++j) {
                const double noise = rng.uniform() - 0.5;
                if (sparse && rng.uniform() < 0.6) continue;
                v[j] = (j % n_classes == c ? 2.0 : 0.0) + noise;
            }
            if (sparse) {
                std::vector<std::size_t> idx;
                std::vector<double> val;
                for (std::size_t j = 0; j < dim; ++j) {
                    if (v[j] != 0.0) {
                        idx.push_back(j);
                        val.push_back(v[j]);
                    }
                }
                m.rows.push_back(FeatureVector::sparse(idx, val, dim));
            } else {
                m.rows.push_back(FeatureVector::dense(v));
            }
            m.labels.push_back(c);
        }
    }
    return m;
}

double training_accuracy(const TrainedClassifier& clf, const LabeledMatrix& m) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < m.rows.size(); ++i) ok += clf.predict(m.rows[i]) == m.labels[i];
    return static_cast<double>(ok) / static_cast<double>(m.rows.size());
}

Hyperparams small_params(Backend b) {
    switch (b) {
        case Backend::RandomForest: return ForestParams{25, std::nullopt, 2};
        case Backend::GradientBoostedTrees: {
            BoostParams p;
            p.rounds = 20;
            return p;
        }
        default: return default_params(b);
    }
}

/// Best training accuracy over every depth-1 stump on binary features.
double best_stump_accuracy(const std::vector<std::array<double, 2>>& xs, const std::vector<std::size_t>& ys) {
    double best = 0.0;
    for (int f = 0; f < 2; ++f) {
        for (double t : {-0.5, 0.5, 1.5}) {
            for (std::size_t left = 0; left < 2; ++left) {
                for (std::size_t right = 0; right < 2; ++right) {
                    std::size_t ok = 0;
                    for (std::size_t i = 0; i < xs.size(); ++i) {
                        ok += (xs[i][static_cast<std::size_t>(f)] <= t ? left : right) == ys[i];
                    }
                    best = std::max(best, static_cast<double>(ok) / static_cast<double>(xs.size()));
                }
            }
        }
    }
    return best;
}

nlohmann::json leaf_tree(std::size_t label) {
    return {{"feature", {-1}}, {"threshold", {0.0}}, {"left", {-1}}, {"right", {-1}}, {"value", {static_cast<double>(label)}}};
}

}  // namespace

TEST_CASE("every backend memorizes one point per class") {
    const auto m = three_points(10);
    for (auto b : kAllBackends) {
        CAPTURE(to_string(b));
        const auto clf = fit(b, m, small_params(b), 1);
        CHECK(training_accuracy(clf, m) == 1.0);
        CHECK(clf.class_names() == m.class_names);
        CHECK(clf.dim() == 3);
    }
}

TEST_CASE("depth-1 forest cannot beat the best stump on XOR") {
    for (std::size_t mult : {1u, 3u, 10u}) {
        LabeledMatrix m;
        m.class_names = {"zero", "one"};
        std::vector<std::array<double, 2>> xs;
        std::vector<std::size_t> ys;
        for (std::size_t r = 0; r < mult; ++r) {
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    xs.push_back({double(a), double(b)});
                    ys.push_back(static_cast<std::size_t>(a ^ b));
                    m.rows.push_back(FeatureVector::dense({double(a), double(b)}));
                    m.labels.push_back(ys.back());
                }
            }
        }
        const double oracle = best_stump_accuracy(xs, ys);
        CHECK(oracle <= 0.75);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto clf = fit(Backend::RandomForest, m, ForestParams{1, 1, 2}, seed);
            CHECK(training_accuracy(clf, m) <= oracle);
        }
    }
}

TEST_CASE("k-NN prediction rules") {
    SUBCASE("k = 1 returns the label of an identical training point") {
        const auto m = blobs(3, 20, 6, 3, false);
        const auto clf = fit(Backend::Knn, m, KnnParams{1}, 0);
        for (std::size_t i = 0; i < m.rows.size(); ++i) CHECK(clf.predict(m.rows[i]) == m.labels[i]);
    }
    SUBCASE("vote fractions") {
        LabeledMatrix m;
        m.class_names = {"a", "b", "c"};
        const std::size_t labels[] = {0, 0, 0, 0, 0, 0, 1, 1, 2};
        for (std::size_t i = 0; i < 9; ++i) {
            m.rows.push_back(FeatureVector::dense({1.0, 0.01 * double(i)}));
            m.labels.push_back(labels[i]);
        }
        m.rows.push_back(FeatureVector::dense({-1.0, 0.0}));
        m.labels.push_back(1);
        const auto clf = fit(Backend::Knn, m, KnnParams{9}, 0);
        const auto p = clf.predict_proba(FeatureVector::dense({1.0, 0.0}));
        CHECK(p[0] == doctest::Approx(6.0 / 9.0));
        CHECK(p[1] == doctest::Approx(2.0 / 9.0));
        CHECK(p[2] == doctest::Approx(1.0 / 9.0));
    }
    SUBCASE("tied votes go to the smaller summed distance, then the lower class") {
        LabeledMatrix m;
        m.class_names = {"a", "b"};
        m.rows = {FeatureVector::dense({1.0, 0.0}), FeatureVector::dense({0.0, 1.0})};
        m.labels = {0, 1};
        const auto clf = fit(Backend::Knn, m, KnnParams{2}, 0);
        CHECK(clf.predict(FeatureVector::dense({0.2, 1.0})) == 1);
        CHECK(clf.predict(FeatureVector::dense({1.0, 0.2})) == 0);
        CHECK(clf.predict(FeatureVector::dense({1.0, 1.0})) == 0);
        CHECK(clf.predict(FeatureVector::dense({0.0, 0.0})) == 0);
    }
    SUBCASE("prediction does not depend on training row order") {
        auto m = blobs(3, 30, 5, 8, true);
        const auto a = fit(Backend::Knn, m, KnnParams{7}, 0);
        std::reverse(m.rows.begin(), m.rows.end());
        std::reverse(m.labels.begin(), m.labels.end());
        const auto b = fit(Backend::Knn, m, KnnParams{7}, 0);
        const auto probe = blobs(3, 10, 5, 99, true);
        CHECK(a.predict_batch(probe.rows) == b.predict_batch(probe.rows));
    }
}

TEST_CASE("cosine distance") {
    const auto a = FeatureVector::dense({1.0, 0.0});
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0));
    CHECK(cosine_distance(a, FeatureVector::dense({0.0, 2.0})) == doctest::Approx(1.0));
    CHECK(cosine_distance(a, FeatureVector::dense({-3.0, 0.0})) == doctest::Approx(2.0));
    CHECK(cosine_distance(a, FeatureVector::dense({0.0, 0.0})) == 1.0);
    CHECK(cosine_distance(FeatureVector::sparse({1}, {2.0}, 2), FeatureVector::dense({0.0, 5.0})) == doctest::Approx(0.0));
}

TEST_CASE("balanced k-NN") {
    SUBCASE("800/100/100 keeps 100 of each") {
        std::vector<std::size_t> labels(800, 2);
        labels.insert(labels.end(), 100, 0);
        labels.insert(labels.end(), 100, 1);
        const auto keep = balanced_subset(labels, 3, 11);
        std::vector<std::size_t> counts(3, 0);
        for (auto i : keep) ++counts[labels[i]];
        CHECK(counts == std::vector<std::size_t>{100, 100, 100});
        CHECK(std::is_sorted(keep.begin(), keep.end()));
        CHECK(keep == balanced_subset(labels, 3, 11));
        CHECK(keep != balanced_subset(labels, 3, 12));
    }
    SUBCASE("balanced data is kept whole") {
        const auto m = blobs(3, 15, 4, 5, false);
        const auto keep = balanced_subset(m.labels, 3, 1);
        std::vector<std::size_t> all(m.rows.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        CHECK(keep == all);
        const auto probe = blobs(3, 10, 4, 6, false);
        CHECK(fit_knn_balanced(m, 5, 1).predict_batch(probe.rows) == fit(Backend::Knn, m, KnnParams{5}, 1).predict_batch(probe.rows));
    }
    SUBCASE("large per-track k values are accepted when enough rows remain") {
        const auto m = blobs(3, 200, 4, 21, false);
        for (int k : {415, 540, 125, 96}) CHECK_NOTHROW(fit_knn_balanced(m, k, 3));
    }
    SUBCASE("k beyond the retained set") {
        auto m = blobs(3, 10, 4, 2, false);
        m.rows.resize(24);
        m.labels.resize(24);
        CHECK_THROWS_AS(fit_knn_balanced(m, 13, 0), ValidationError);
        CHECK_NOTHROW(fit_knn_balanced(m, 12, 0));
    }
    SUBCASE("a class with no examples") {
        const std::vector<std::size_t> labels = {0, 0, 2};
        CHECK_THROWS_AS(balanced_subset(labels, 3, 0), ValidationError);
    }
}

TEST_CASE("probabilities lie on the simplex") {
    const auto m = blobs(3, 25, 8, 4, true);
    const auto probe = blobs(3, 10, 8, 40, true);
    for (auto b : kAllBackends) {
        CAPTURE(to_string(b));
        const auto clf = fit(b, m, small_params(b), 7);
        for (const auto& x : probe.rows) {
            const auto scores = clf.decision_scores(x);
            CHECK(scores.size() == 3);
            if (b == Backend::LinearSvm) {
                CHECK_THROWS_AS(clf.predict_proba(x), ValidationError);
                continue;
            }
            const auto p = clf.predict_proba(x);
            double sum = 0.0;
            for (double v : p) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("fits are reproducible and survive serialization") {
    const auto m = blobs(3, 30, 10, 12, true);
    const auto probe = blobs(3, 15, 10, 13, true);
    for (auto b : kAllBackends) {
        CAPTURE(to_string(b));
        const auto one = fit(b, m, small_params(b), 5);
        const auto two = fit(b, m, small_params(b), 5);
        CHECK(one.predict_batch(probe.rows) == two.predict_batch(probe.rows));
        CHECK(one.to_json() == two.to_json());
        const auto back = TrainedClassifier::from_json(nlohmann::json::parse(one.to_json().dump()));
        CHECK(back.backend() == b);
        CHECK(back.predict_batch(probe.rows) == one.predict_batch(probe.rows));
        for (const auto& x : probe.rows) {
            const auto s1 = one.decision_scores(x);
            const auto s2 = back.decision_scores(x);
            for (std::size_t c = 0; c < s1.size(); ++c) CHECK(s2[c] == doctest::Approx(s1[c]).epsilon(1e-12));
        }
    }
}

TEST_CASE("forest votes and ties") {
    nlohmann::json j = {{"format_version", kModelFormatVersion},
                        {"backend", "forest"},
                        {"class_names", {"No", "To some extent", "Yes"}},
                        {"dim", 2},
                        {"model", {{"trees", {leaf_tree(1), leaf_tree(0), leaf_tree(1), leaf_tree(0)}}}}};
    const auto clf = TrainedClassifier::from_json(j);
    const auto x = FeatureVector::dense({0.3, 0.1});
    CHECK(clf.predict_proba(x) == std::vector<double>{0.5, 0.5, 0.0});
    CHECK(clf.predict(x) == 0);

    j["model"]["trees"][0] = leaf_tree(3);
    CHECK_THROWS_AS(TrainedClassifier::from_json(j), ValidationError);
    j["model"]["trees"][0] = {{"feature", {0, -1}}, {"threshold", {0.5, 0.0}}, {"left", {0, 1}}, {"right", {1, 1}}, {"value", {0.0, 1.0}}};
    CHECK_THROWS_AS(TrainedClassifier::from_json(j), ValidationError);
}

TEST_CASE("softmax regression") {
    SUBCASE("zero weights give a uniform distribution") {
        auto j = fit(Backend::SoftmaxRegression, three_points(2), SoftmaxParams{}, 0).to_json();
        for (auto& row : j["model"]["weights"]) {
            for (auto& w : row) w = 0.0;
        }
        for (auto& b : j["model"]["bias"]) b = 0.0;
        const auto p = TrainedClassifier::from_json(j).predict_proba(FeatureVector::dense({0.4, -2.0, 7.0}));
        for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("separable two-point set") {
        LabeledMatrix m;
        m.class_names = {"neg", "pos"};
        m.rows = {FeatureVector::dense({-1.0, 0.5}), FeatureVector::dense({1.0, 0.5})};
        m.labels = {0, 1};
        const auto clf = fit(Backend::SoftmaxRegression, m, SoftmaxParams{}, 0);
        CHECK(clf.predict(m.rows[0]) == 0);
        CHECK(clf.predict(m.rows[1]) == 1);
    }
    SUBCASE("training loss never increases") {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto m = blobs(4, 20, 6, seed, seed % 2 == 0);
            SoftmaxParams p;
            p.learning_rate = 5.0;
            const auto clf = fit(Backend::SoftmaxRegression, m, p, 0);
            const auto& losses = clf.training_losses();
            REQUIRE(losses.size() >= 2);
            for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1]);
        }
    }
    SUBCASE("stops once progress stalls") {
        SoftmaxParams p;
        p.max_iter = 100000;
        const auto clf = fit(Backend::SoftmaxRegression, three_points(3), p, 0);
        CHECK(clf.training_losses().size() < 100000);
    }
}

TEST_CASE("boosting with learning rate zero predicts the prior argmax") {
    auto m = blobs(3, 10, 5, 31, false);
    for (std::size_t i = 0; i < 5; ++i) {
        m.rows.push_back(m.rows[i]);
        m.labels.push_back(1);
    }
    BoostParams p;
    p.rounds = 10;
    p.learning_rate = 0.0;
    const auto clf = fit(Backend::GradientBoostedTrees, m, p, 0);
    const auto probe = blobs(3, 10, 5, 32, false);
    for (const auto& x : probe.rows) CHECK(clf.predict(x) == 1);
    const auto prior = clf.predict_proba(probe.rows[0]);
    CHECK(prior[1] == doctest::Approx(15.0 / 35.0));
}

TEST_CASE("boosting subsample stays reproducible") {
    const auto m = blobs(3, 20, 6, 50, true);
    BoostParams p;
    p.rounds = 15;
    p.subsample = 0.5;
    const auto probe = blobs(3, 10, 6, 51, true);
    CHECK(fit(Backend::GradientBoostedTrees, m, p, 9).predict_batch(probe.rows) ==
          fit(Backend::GradientBoostedTrees, m, p, 9).predict_batch(probe.rows));
}

TEST_CASE("fit errors") {
    const auto m = blobs(3, 5, 4, 1, false);
    CHECK_THROWS_AS(fit(Backend::Knn, m, KnnParams{0}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::Knn, m, KnnParams{16}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::Knn, m, ForestParams{}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::RandomForest, m, ForestParams{0, std::nullopt, 2}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::RandomForest, m, ForestParams{5, 0, 2}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::LinearSvm, m, SvmParams{0.0, 5}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::SoftmaxRegression, m, SoftmaxParams{0.0}, 0), ValidationError);
    BoostParams neg;
    neg.learning_rate = -0.1;
    CHECK_THROWS_AS(fit(Backend::GradientBoostedTrees, m, neg, 0), ValidationError);
    BoostParams depth;
    depth.max_depth = 0;
    CHECK_THROWS_AS(fit(Backend::GradientBoostedTrees, m, depth, 0), ValidationError);
    BoostParams sub;
    sub.subsample = 0.0;
    CHECK_THROWS_AS(fit(Backend::GradientBoostedTrees, m, sub, 0), ValidationError);

    LabeledMatrix empty;
    empty.class_names = {"a", "b"};
    CHECK_THROWS_AS(fit(Backend::Knn, empty, KnnParams{1}, 0), ValidationError);

    LabeledMatrix single = m;
    std::fill(single.labels.begin(), single.labels.end(), 0);
    CHECK_THROWS_AS(fit(Backend::LinearSvm, single, SvmParams{}, 0), ValidationError);
    CHECK_THROWS_AS(fit(Backend::SoftmaxRegression, single, SoftmaxParams{}, 0), ValidationError);

    LabeledMatrix ragged = m;
    ragged.rows[3] = FeatureVector::dense({1.0, 2.0});
    CHECK_THROWS_AS(fit(Backend::RandomForest, ragged, ForestParams{}, 0), ValidationError);
    LabeledMatrix bad_label = m;
    bad_label.labels[0] = 7;
    CHECK_THROWS_AS(fit(Backend::Knn, bad_label, KnnParams{1}, 0), ValidationError);

    const auto clf = fit(Backend::Knn, m, KnnParams{3}, 0);
    CHECK_THROWS_AS(clf.predict(FeatureVector::dense({1.0})), ValidationError);
    CHECK_THROWS_AS(parse_backend("xgboost"), ValidationError);
}

TEST_CASE("feature vectors") {
    CHECK_THROWS_AS(FeatureVector::sparse({2, 1}, {1.0, 1.0}, 4), ValidationError);
    CHECK_THROWS_AS(FeatureVector::sparse({4}, {1.0}, 4), ValidationError);
    CHECK_THROWS_AS(FeatureVector::sparse({1}, {1.0, 2.0}, 4), ValidationError);
    const auto s = FeatureVector::sparse({1, 3}, {2.0, -1.0}, 4);
    CHECK(s.at(0) == 0.0);
    CHECK(s.at(3) == -1.0);
    CHECK(s.to_dense() == std::vector<double>{0.0, 2.0, 0.0, -1.0});
    CHECK(s.dot(FeatureVector::dense({1.0, 1.0, 1.0, 1.0})) == 1.0);
    CHECK(s.squared_norm() == 5.0);
    const std::vector<double> w = {0.5, 0.5, 0.5, 2.0};
    CHECK(s.dot(w) == -1.0);
    CHECK(FeatureVector::from_json(s.to_json()).to_dense() == s.to_dense());
}

TEST_CASE("feature concatenation") {
    const std::vector<double> resp(1024, 0.1);
    const std::vector<double> hist(1024, 0.2);
    CHECK(concat_features(resp, std::nullopt, std::nullopt).size() == 1024);
    CHECK(concat_features(resp, std::span<const double>(hist), std::nullopt).size() == 2048);
    const auto full = concat_features(resp, std::span<const double>(hist), std::array<double, 3>{0.7, 0.2, 0.1});
    CHECK(full.size() == 2051);
    CHECK(full[1023] == 0.1);
    CHECK(full[1024] == 0.2);
    CHECK(full[2048] == 0.7);
    CHECK(full[2050] == 0.1);

    std::vector<FeatureParts> rows(2);
    rows[0].response = {1.0, 2.0};
    rows[1].response = {3.0, 4.0};
    rows[0].probs = rows[1].probs = std::array<double, 3>{0.5, 0.25, 0.25};
    const auto out = concat_feature_rows(rows);
    CHECK(out[1].to_dense() == std::vector<double>{3.0, 4.0, 0.5, 0.25, 0.25});

    rows[1].response = {3.0};
    CHECK_THROWS_AS(concat_feature_rows(rows), ValidationError);
    rows[1].response = {3.0, 4.0};
    rows[1].history = std::vector<double>{1.0};
    CHECK_THROWS_AS(concat_feature_rows(rows), ValidationError);
}
