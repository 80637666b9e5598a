#include <cmath>

#include "model.hpp"
#include "tutoreval/errors.hpp"

namespace tutoreval::classifiers {

namespace {

constexpr std::array<std::pair<Backend, std::string_view>, 6> kBackendNames = {{
    {Backend::Knn, "knn"},
    {Backend::KnnBalanced, "knn_balanced"},
    {Backend::RandomForest, "forest"},
    {Backend::LinearSvm, "svm"},
    {Backend::SoftmaxRegression, "softmax"},
    {Backend::GradientBoostedTrees, "gbt"},
}};

template <class P>
const P& params_as(const Hyperparams& params, Backend backend) {
    if (const auto* p = std::get_if<P>(&params)) return *p;
    throw ValidationError("hyperparameters do not match backend " + std::string(to_string(backend)));
}

LabeledMatrix subset(const LabeledMatrix& data, std::span<const std::size_t> keep) {
    LabeledMatrix out;
    out.class_names = data.class_names;
    out.rows.reserve(keep.size());
    out.labels.reserve(keep.size());
    for (auto i : keep) {
        out.rows.push_back(data.rows[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

}  // namespace

std::string_view to_string(Backend b) {
    for (const auto& [backend, name] : kBackendNames) {
        if (backend == b) return name;
    }
    return "?";
}

Backend parse_backend(std::string_view s) {
    for (const auto& [backend, name] : kBackendNames) {
        if (name == s) return backend;
    }
    throw ValidationError("unknown backend \"" + std::string(s) +
                          "\" (expected knn, knn_balanced, forest, svm, softmax or gbt)");
}

Hyperparams default_params(Backend backend) {
    switch (backend) {
        case Backend::Knn:
        case Backend::KnnBalanced: return KnnParams{};
        case Backend::RandomForest: return ForestParams{};
        case Backend::LinearSvm: return SvmParams{};
        case Backend::SoftmaxRegression: return SoftmaxParams{};
        case Backend::GradientBoostedTrees: return BoostParams{};
    }
    return KnnParams{};
}

TrainedClassifier fit(Backend backend, const LabeledMatrix& data, const Hyperparams& params,
                      std::uint64_t seed) {
    if (data.rows.empty()) throw ValidationError("cannot fit on an empty training set");
    if (data.class_names.empty()) throw ValidationError("training set declares no classes");
    data.validate();

    auto model = std::make_shared<Model>();
    model->backend = backend;
    model->class_names = data.class_names;
    model->dim = data.dim();
    switch (backend) {
        case Backend::Knn:
            model->body = train_knn(data, params_as<KnnParams>(params, backend));
            break;
        case Backend::KnnBalanced: {
            const auto& p = params_as<KnnParams>(params, backend);
            const auto keep = balanced_subset(data.labels, data.class_names.size(), seed);
            if (p.k < 1 || static_cast<std::size_t>(p.k) > keep.size()) {
                throw ValidationError("balanced k-NN: k = " + std::to_string(p.k) +
                                      " is larger than the retained set of " +
                                      std::to_string(keep.size()) + " examples");
            }
            model->body = train_knn(subset(data, keep), p);
            break;
        }
        case Backend::RandomForest:
            model->body = train_forest(data, params_as<ForestParams>(params, backend), seed);
            break;
        case Backend::LinearSvm:
            model->body = train_svm(data, params_as<SvmParams>(params, backend), seed);
            break;
        case Backend::SoftmaxRegression:
            model->body =
                train_softmax(data, params_as<SoftmaxParams>(params, backend), model->losses);
            break;
        case Backend::GradientBoostedTrees:
            model->body = train_boost(data, params_as<BoostParams>(params, backend), seed);
            break;
    }
    return TrainedClassifier(std::move(model));
}

TrainedClassifier::TrainedClassifier(std::shared_ptr<const Model> model) : model_(std::move(model)) {}

Backend TrainedClassifier::backend() const { return model_->backend; }
const std::vector<std::string>& TrainedClassifier::class_names() const { return model_->class_names; }
std::size_t TrainedClassifier::dim() const { return model_->dim; }
const std::vector<double>& TrainedClassifier::training_losses() const { return model_->losses; }

void TrainedClassifier::check_dim(const FeatureVector& x) const {
    if (x.dim() != model_->dim) {
        throw ValidationError("dimension mismatch: model expects " + std::to_string(model_->dim) +
                              ", got " + std::to_string(x.dim()));
    }
}

std::vector<double> TrainedClassifier::decision_scores(const FeatureVector& x) const {
    check_dim(x);
    const auto n_classes = model_->class_names.size();
    return std::visit(
        [&](const auto& body) -> std::vector<double> {
            using T = std::decay_t<decltype(body)>;
            if constexpr (std::is_same_v<T, KnnModel>) {
                std::vector<double> votes;
                std::vector<double> dist;
                knn_votes(body, x, n_classes, votes, dist);
                return votes;
            } else if constexpr (std::is_same_v<T, ForestModel>) {
                std::vector<double> votes(n_classes, 0.0);
                for (const auto& tree : body.trees) {
                    votes[static_cast<std::size_t>(tree.evaluate(x))] += 1.0;
                }
                return votes;
            } else if constexpr (std::is_same_v<T, LinearModel>) {
                return linear_scores(body, x);
            } else {
                return boost_scores(body, x);
            }
        },
        model_->body);
}

std::size_t TrainedClassifier::predict(const FeatureVector& x) const {
    if (const auto* knn = std::get_if<KnnModel>(&model_->body)) {
        check_dim(x);
        std::vector<double> votes;
        std::vector<double> dist;
        knn_votes(*knn, x, model_->class_names.size(), votes, dist);
        std::size_t best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c) {
            if (votes[c] > votes[best] || (votes[c] == votes[best] && dist[c] < dist[best])) {
                best = c;
            }
        }
        return best;
    }
    return argmax(decision_scores(x));
}

std::vector<std::size_t> TrainedClassifier::predict_batch(std::span<const FeatureVector> xs) const {
    std::vector<std::size_t> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(predict(x));
    return out;
}

std::vector<double> TrainedClassifier::predict_proba(const FeatureVector& x) const {
    switch (model_->backend) {
        case Backend::LinearSvm:
            throw ValidationError("linear SVM does not produce probabilities; use decision_scores");
        case Backend::SoftmaxRegression:
        case Backend::GradientBoostedTrees: return softmax(decision_scores(x));
        default: {
            auto votes = decision_scores(x);
            double total = 0.0;
            for (double v : votes) total += v;
            for (double& v : votes) v /= total;
            return votes;
        }
    }
}

nlohmann::json TrainedClassifier::to_json() const {
    nlohmann::json body = std::visit(
        [](const auto& m) -> nlohmann::json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, KnnModel>) {
                nlohmann::json rows = nlohmann::json::array();
                for (const auto& r : m.rows) rows.push_back(r.to_json());
                return {{"k", m.k}, {"rows", std::move(rows)}, {"labels", m.labels}};
            } else if constexpr (std::is_same_v<T, ForestModel>) {
                nlohmann::json trees = nlohmann::json::array();
                for (const auto& t : m.trees) trees.push_back(t.to_json());
                return {{"trees", std::move(trees)}};
            } else if constexpr (std::is_same_v<T, LinearModel>) {
                return {{"weights", m.weights}, {"bias", m.bias}};
            } else {
                nlohmann::json rounds = nlohmann::json::array();
                for (const auto& trees : m.rounds) {
                    nlohmann::json per_class = nlohmann::json::array();
                    for (const auto& t : trees) per_class.push_back(t.to_json());
                    rounds.push_back(std::move(per_class));
                }
                return {{"base", m.base}, {"learning_rate", m.learning_rate},
                        {"rounds", std::move(rounds)}};
            }
        },
        model_->body);
    return {{"format_version", kModelFormatVersion},
            {"backend", to_string(model_->backend)},
            {"class_names", model_->class_names},
            {"dim", model_->dim},
            {"model", std::move(body)}};
}

TrainedClassifier TrainedClassifier::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion) {
            throw ValidationError("unsupported classifier format_version");
        }
        auto model = std::make_shared<Model>();
        model->backend = parse_backend(j.at("backend").get<std::string>());
        model->class_names = j.at("class_names").get<std::vector<std::string>>();
        model->dim = j.at("dim").get<std::size_t>();
        const auto n_classes = model->class_names.size();
        const auto& b = j.at("model");
        auto check_class = [n_classes](std::size_t c) {
            if (c >= n_classes) throw ValidationError("stored class id out of range");
        };
        switch (model->backend) {
            case Backend::Knn:
            case Backend::KnnBalanced: {
                KnnModel m;
                m.k = b.at("k").get<int>();
                for (const auto& r : b.at("rows")) m.rows.push_back(FeatureVector::from_json(r));
                m.labels = b.at("labels").get<std::vector<std::size_t>>();
                if (m.labels.size() != m.rows.size() || m.k < 1) {
                    throw ValidationError("malformed k-NN model");
                }
                for (auto l : m.labels) check_class(l);
                for (const auto& r : m.rows) {
                    if (r.dim() != model->dim) throw ValidationError("k-NN row dimension mismatch");
                    m.norms.push_back(std::sqrt(r.squared_norm()));
                }
                model->body = std::move(m);
                break;
            }
            case Backend::RandomForest: {
                ForestModel m;
                for (const auto& t : b.at("trees")) {
                    m.trees.push_back(Tree::from_json(t));
                    for (const auto& node : m.trees.back().nodes) {
                        if (node.feature < 0) check_class(static_cast<std::size_t>(node.value));
                    }
                }
                if (m.trees.empty()) throw ValidationError("forest has no trees");
                model->body = std::move(m);
                break;
            }
            case Backend::LinearSvm:
            case Backend::SoftmaxRegression: {
                LinearModel m;
                m.weights = b.at("weights").get<std::vector<std::vector<double>>>();
                m.bias = b.at("bias").get<std::vector<double>>();
                if (m.weights.size() != n_classes || m.bias.size() != n_classes) {
                    throw ValidationError("linear model: class count mismatch");
                }
                for (const auto& w : m.weights) {
                    if (w.size() != model->dim) throw ValidationError("linear model: dim mismatch");
                }
                model->body = std::move(m);
                break;
            }
            case Backend::GradientBoostedTrees: {
                BoostModel m;
                m.base = b.at("base").get<std::vector<double>>();
                m.learning_rate = b.at("learning_rate").get<double>();
                for (const auto& round : b.at("rounds")) {
                    std::vector<Tree> trees;
                    for (const auto& t : round) trees.push_back(Tree::from_json(t));
                    if (trees.size() != n_classes) throw ValidationError("boosting: class count mismatch");
                    m.rounds.push_back(std::move(trees));
                }
                if (m.base.size() != n_classes) throw ValidationError("boosting: class count mismatch");
                model->body = std::move(m);
                break;
            }
        }
        return TrainedClassifier(std::move(model));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed classifier: ") + e.what());
    }
}

std::vector<double> concat_features(std::span<const double> response,
                                    std::optional<std::span<const double>> history,
                                    std::optional<std::array<double, 3>> probs) {
    std::vector<double> out(response.begin(), response.end());
    if (history) out.insert(out.end(), history->begin(), history->end());
    if (probs) out.insert(out.end(), probs->begin(), probs->end());
    return out;
}

std::vector<FeatureVector> concat_feature_rows(std::span<const FeatureParts> rows) {
    std::vector<FeatureVector> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& first = rows.front();
        const bool same_shape = r.response.size() == first.response.size() &&
                                r.history.has_value() == first.history.has_value() &&
                                (!r.history || r.history->size() == first.history->size()) &&
                                r.probs.has_value() == first.probs.has_value();
        if (!same_shape) {
            throw ValidationError("inconsistent feature parts at row " + std::to_string(i) +
                                  " (dims or present parts differ from row 0)");
        }
        std::optional<std::span<const double>> hist;
        if (r.history) hist = std::span<const double>(*r.history);
        out.push_back(FeatureVector::dense(concat_features(r.response, hist, r.probs)));
    }
    return out;
}

}  // namespace tutoreval::classifiers
