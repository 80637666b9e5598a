#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "model.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::classifiers {

namespace {

void require_two_classes(const LabeledMatrix& data, std::string_view who) {
    const std::set<std::size_t> present(data.labels.begin(), data.labels.end());
    if (present.size() < 2) {
        throw ValidationError(std::string(who) + " needs at least two classes in the training data");
    }
}

// w += scale * x
void axpy(std::vector<double>& w, double scale, const FeatureVector& x) {
    for (std::size_t k = 0; k < x.stored(); ++k) w[x.index(k)] += scale * x.value(k);
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) return out;
    const double m = *std::max_element(out.begin(), out.end());
    double z = 0.0;
    for (double& v : out) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : out) v /= z;
    return out;
}

std::size_t argmax(std::span<const double> xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) best = i;
    }
    return best;
}

std::vector<double> linear_scores(const LinearModel& model, const FeatureVector& x) {
    std::vector<double> out(model.weights.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = x.dot(model.weights[c]) + model.bias[c];
    return out;
}

LinearModel train_svm(const LabeledMatrix& data, const SvmParams& params, std::uint64_t seed) {
    if (!(params.lambda > 0.0)) throw ValidationError("linear SVM: lambda must be > 0");
    if (params.epochs < 1) throw ValidationError("linear SVM: epochs must be >= 1");
    require_two_classes(data, "linear SVM");

    const std::size_t n = data.rows.size();
    const std::size_t d = data.dim();
    const std::size_t n_classes = data.class_names.size();
    LinearModel model;
    model.weights.assign(n_classes, std::vector<double>(d, 0.0));
    model.bias.assign(n_classes, 0.0);

    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t c = 0; c < n_classes; ++c) {
        // w = scale * v; the bias is the weight of a constant feature 1.
        std::vector<double>& v = model.weights[c];
        double v_bias = 0.0;
        double scale = 1.0;
        std::size_t t = 0;
        for (int epoch = 0; epoch < params.epochs; ++epoch) {
            rng.shuffle(std::span<std::size_t>(order));
            for (auto i : order) {
                ++t;
                const double eta = 1.0 / (params.lambda * static_cast<double>(t));
                const double y = data.labels[i] == c ? 1.0 : -1.0;
                const double margin = y * scale * (data.rows[i].dot(v) + v_bias);
                const double shrink = 1.0 - eta * params.lambda;
                if (shrink <= 0.0) {
                    std::fill(v.begin(), v.end(), 0.0);
                    v_bias = 0.0;
                    scale = 1.0;
                } else {
                    scale *= shrink;
                }
                if (margin < 1.0) {
                    axpy(v, eta * y / scale, data.rows[i]);
                    v_bias += eta * y / scale;
                }
                if (scale < 1e-9) {
                    for (double& w : v) w *= scale;
                    v_bias *= scale;
                    scale = 1.0;
                }
            }
        }
        for (double& w : v) w *= scale;
        model.bias[c] = v_bias * scale;
    }
    return model;
}

namespace {

struct SoftmaxState {
    std::vector<std::vector<double>> w;
    std::vector<double> b;
};

double softmax_loss(const LabeledMatrix& data, const SoftmaxState& s, double l2,
                    SoftmaxState* grad) {
    const std::size_t n = data.rows.size();
    const std::size_t k = s.b.size();
    if (grad) {
        for (auto& row : grad->w) std::fill(row.begin(), row.end(), 0.0);
        std::fill(grad->b.begin(), grad->b.end(), 0.0);
    }
    double loss = 0.0;
    std::vector<double> logits(k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& x = data.rows[i];
        for (std::size_t c = 0; c < k; ++c) logits[c] = x.dot(s.w[c]) + s.b[c];
        const double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double v : logits) z += std::exp(v - m);
        const double log_z = m + std::log(z);
        loss += log_z - logits[data.labels[i]];
        if (grad) {
            for (std::size_t c = 0; c < k; ++c) {
                const double p = std::exp(logits[c] - log_z);
                const double g = (p - (data.labels[i] == c ? 1.0 : 0.0)) / static_cast<double>(n);
                if (g != 0.0) axpy(grad->w[c], g, x);
                grad->b[c] += g;
            }
        }
    }
    loss /= static_cast<double>(n);
    if (l2 > 0.0) {
        double sq = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < s.w[c].size(); ++j) {
                sq += s.w[c][j] * s.w[c][j];
                if (grad) grad->w[c][j] += l2 * s.w[c][j];
            }
        }
        loss += 0.5 * l2 * sq;
    }
    return loss;
}

}  // namespace

LinearModel train_softmax(const LabeledMatrix& data, const SoftmaxParams& params,
                          std::vector<double>& losses) {
    if (!(params.learning_rate > 0.0)) throw ValidationError("softmax: learning rate must be > 0");
    if (params.l2 < 0.0) throw ValidationError("softmax: l2 must be >= 0");
    if (!(params.tol >= 0.0) || params.n_iter_no_change < 1 || params.max_iter < 1) {
        throw ValidationError("softmax: invalid stopping parameters");
    }
    require_two_classes(data, "softmax regression");

    const std::size_t k = data.class_names.size();
    const std::size_t d = data.dim();
    SoftmaxState state{std::vector<std::vector<double>>(k, std::vector<double>(d, 0.0)),
                       std::vector<double>(k, 0.0)};
    SoftmaxState grad = state;
    SoftmaxState trial = state;

    double lr = params.learning_rate;
    double loss = softmax_loss(data, state, params.l2, &grad);
    losses.clear();
    losses.push_back(loss);
    double best = loss;
    int no_improvement = 0;

    for (int iter = 0; iter < params.max_iter && no_improvement < params.n_iter_no_change; ++iter) {
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < d; ++j) trial.w[c][j] = state.w[c][j] - lr * grad.w[c][j];
            trial.b[c] = state.b[c] - lr * grad.b[c];
        }
        const double trial_loss = softmax_loss(data, trial, params.l2, nullptr);
        if (!(trial_loss <= loss)) {
            // Rejected step: halve the rate and count it as a non-improving iteration.
            lr /= 2.0;
            ++no_improvement;
            if (lr < 1e-12) break;
            continue;
        }
        std::swap(state, trial);
        loss = softmax_loss(data, state, params.l2, &grad);
        losses.push_back(loss);
        if (loss > best - params.tol) {
            ++no_improvement;
        } else {
            no_improvement = 0;
        }
        best = std::min(best, loss);
    }
    return LinearModel{std::move(state.w), std::move(state.b)};
}

}  // namespace tutoreval::classifiers
