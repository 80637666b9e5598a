#include "tutoreval/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "tutoreval/classifiers.hpp"
#include "tutoreval/corpus.hpp"
#include "tutoreval/errors.hpp"
#include "tutoreval/eval.hpp"
#include "tutoreval/external_scores.hpp"
#include "tutoreval/features.hpp"
#include "tutoreval/thresholds.hpp"

namespace tutoreval::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kPipelineFormatVersion = 1;

// ---------------------------------------------------------------------------
// shared helpers

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void check_track(int track) {
    if (track < 1 || track > 5) throw ValidationError("track must lie in 1..5, got " + std::to_string(track));
}

Dimension ternary_dimension(int track, std::string_view who) {
    check_track(track);
    if (auto d = dimension_for_track(track)) return *d;
    throw ValidationError(std::string(who) + " works on tracks 1-4 only");
}

eval::LabelSpace space_for(int track) {
    return track == 5 ? eval::LabelSpace::TutorIdentity : eval::LabelSpace::Ternary;
}

/// Gold label string of a response for a track; nullopt when unannotated.
std::optional<std::string> gold_label(const corpus::TutorResponse& r, int track) {
    if (track == 5) return r.tutor_id;
    if (auto l = r.label(*dimension_for_track(track))) return std::string(to_string(*l));
    return std::nullopt;
}

std::vector<std::string> ternary_class_names() {
    std::vector<std::string> out;
    for (Ternary t : kAllTernary) out.emplace_back(to_string(t));
    return out;
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void print_report(std::ostream& out, const std::string& name, const eval::MetricReport& report, bool as_json) {
    if (as_json) {
        json j = report.to_json();
        j["name"] = name;
        out << j.dump(2) << '\n';
        return;
    }
    const eval::NamedReport row{name, report};
    out << eval::render_table(std::span(&row, 1));
}

// ---------------------------------------------------------------------------
// feature pipeline shared by train / predict

struct FeatureSources {
    std::string embeddings;
    std::string history_embeddings;
    std::string probs;
};

struct Pipeline {
    int track = 1;
    std::string kind;  // "text" or "embedding"
    corpus::InputText text_mode = corpus::InputText::ResponseOnly;
    std::optional<features::VectorizerModel> vectorizer;
    bool use_history = false;
    bool use_probs = false;
};

std::string_view to_string(corpus::InputText mode) {
    return mode == corpus::InputText::ResponseOnly ? "response" : "history";
}

corpus::InputText parse_text_mode(std::string_view s) {
    if (s == "response") return corpus::InputText::ResponseOnly;
    if (s == "history") return corpus::InputText::ResponseWithHistory;
    throw ValidationError("unknown text mode \"" + std::string(s) + "\" (expected response or history)");
}

struct ResponseRef {
    const corpus::Conversation* conversation;
    const corpus::TutorResponse* response;
};

std::vector<ResponseRef> responses_of(const corpus::Dataset& d) {
    std::vector<ResponseRef> out;
    for (const auto& c : d.conversations) {
        for (const auto& r : c.responses) out.push_back({&c, &r});
    }
    return out;
}

std::vector<classifiers::FeatureVector> featurize(const Pipeline& p, const corpus::Dataset& data,
                                                  const FeatureSources& src) {
    std::vector<classifiers::FeatureVector> rows;
    if (p.kind == "text") {
        for (const auto& ref : responses_of(data)) {
            rows.push_back(classifiers::FeatureVector::from(
                p.vectorizer->transform(corpus::build_input_text(*ref.response, *ref.conversation, p.text_mode))));
        }
        return rows;
    }

    if (src.embeddings.empty()) throw ValidationError("embedding features need --embeddings");
    if (p.use_history && src.history_embeddings.empty()) {
        throw ValidationError("this model was trained with history embeddings; pass --history-embeddings");
    }
    if (p.use_probs && src.probs.empty()) {
        throw ValidationError("this model was trained with label probabilities; pass --probs");
    }
    const auto resp = scores::read_scores(src.embeddings);
    const auto resp_rows = scores::join_scores(data, resp, {scores::Payload::Embedding});
    std::vector<scores::ScoreRecord> hist;
    std::vector<scores::AlignedRow> hist_rows;
    if (p.use_history) {
        hist = scores::read_scores(src.history_embeddings);
        hist_rows = scores::join_scores(data, hist, {scores::Payload::Embedding});
    }
    std::vector<scores::ScoreRecord> probs;
    std::vector<scores::AlignedRow> prob_rows;
    if (p.use_probs) {
        probs = scores::read_scores(src.probs);
        prob_rows = scores::join_scores(data, probs, {scores::Payload::Probs});
    }
    std::vector<classifiers::FeatureParts> parts(resp_rows.size());
    for (std::size_t i = 0; i < resp_rows.size(); ++i) {
        parts[i].response = *resp_rows[i].record->embedding;
        if (p.use_history) parts[i].history = *hist_rows[i].record->embedding;
        if (p.use_probs) {
            const auto& cp = *prob_rows[i].record->probs;
            parts[i].probs = std::array<double, 3>{cp.yes, cp.no, cp.tse};
        }
    }
    return classifiers::concat_feature_rows(parts);
}

json pipeline_features_json(const Pipeline& p) {
    json f = {{"kind", p.kind}};
    if (p.kind == "text") {
        f["text_mode"] = to_string(p.text_mode);
        f["vectorizer"] = p.vectorizer->to_json();
    } else {
        f["history"] = p.use_history;
        f["probs"] = p.use_probs;
    }
    return f;
}

Pipeline pipeline_from_json(const json& j) {
    try {
        if (j.at("format_version").get<int>() != kPipelineFormatVersion) {
            throw ValidationError("unsupported model file format_version");
        }
        Pipeline p;
        p.track = j.at("track").get<int>();
        check_track(p.track);
        const auto& f = j.at("features");
        p.kind = f.at("kind").get<std::string>();
        if (p.kind == "text") {
            p.text_mode = parse_text_mode(f.at("text_mode").get<std::string>());
            p.vectorizer = features::VectorizerModel::from_json(f.at("vectorizer"));
        } else if (p.kind == "embedding") {
            p.use_history = f.at("history").get<bool>();
            p.use_probs = f.at("probs").get<bool>();
        } else {
            throw ValidationError("unknown feature kind \"" + p.kind + "\"");
        }
        return p;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// subcommands

struct SplitArgs {
    std::string input;
    double ratio = 0.8;
    std::uint64_t seed = 42;
    std::string train_out;
    std::string dev_out;
};

int do_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
    const auto data = corpus::load_dataset(a.input);
    const auto result = corpus::grouped_split(data, a.ratio, a.seed);
    for (const auto& w : result.warnings) err << "warning: " << w << '\n';

    const fs::path in(a.input);
    const fs::path train = a.train_out.empty() ? in.parent_path() / (in.stem().string() + ".train.json")
                                               : fs::path(a.train_out);
    const fs::path dev =
        a.dev_out.empty() ? in.parent_path() / (in.stem().string() + ".dev.json") : fs::path(a.dev_out);
    corpus::save_split(result.train, "train", train);
    corpus::save_split(result.dev, "dev", dev);
    out << "train: " << result.train.data.conversations.size() << " conversations, "
        << result.train.data.response_count() << " responses -> " << train.string() << '\n';
    out << "dev:   " << result.dev.data.conversations.size() << " conversations, "
        << result.dev.data.response_count() << " responses -> " << dev.string() << '\n';
    return kExitOk;
}

struct StatsArgs {
    std::vector<std::string> inputs;
    int track = 0;  // 0 = all four dimensions
    bool json_out = false;
};

int do_stats(const StatsArgs& a, std::ostream& out) {
    std::vector<Dimension> dims;
    if (a.track == 0) {
        dims.assign(kAllDimensions.begin(), kAllDimensions.end());
    } else {
        dims.push_back(ternary_dimension(a.track, "stats"));
    }
    json doc = json::object();
    std::ostringstream text;
    for (const auto& input : a.inputs) {
        const auto data = corpus::load_dataset(input);
        text << input << " (" << data.conversations.size() << " conversations, " << data.response_count()
             << " responses)\n";
        for (Dimension d : dims) {
            const auto dist = corpus::class_distribution(data, d);
            text << "  " << dimension_title(d) << ':';
            for (Ternary t : kAllTernary) {
                const auto it = dist.find(t);
                const std::size_t count = it == dist.end() ? 0 : it->second.count;
                const double frac = it == dist.end() ? 0.0 : it->second.fraction;
                text << "  " << to_string(t) << ' ' << count << " (" << fmt2(100.0 * frac) << "%)";
                doc[input][std::string(dimension_key(d))][std::string(to_string(t))] = {{"count", count},
                                                                                        {"fraction", frac}};
            }
            text << '\n';
        }
    }
    out << (a.json_out ? doc.dump(2) + "\n" : text.str());
    return kExitOk;
}

struct ModelArgs {
    std::string backend = "knn";
    int k = 5;
    int trees = 100;
    int max_depth = 0;  // 0: backend default
    double learning_rate = 0.0;  // 0: backend default
    int rounds = 100;
    double subsample = 1.0;
    double lambda = 1e-4;
    int epochs = 50;
    double l2 = -1.0;  // <0: backend default
    int max_iter = 500;
};

classifiers::Hyperparams make_params(classifiers::Backend backend, const ModelArgs& a) {
    using classifiers::Backend;
    switch (backend) {
        case Backend::Knn:
        case Backend::KnnBalanced: return classifiers::KnnParams{a.k};
        case Backend::RandomForest: {
            classifiers::ForestParams p;
            p.n_trees = a.trees;
            if (a.max_depth > 0) p.max_depth = a.max_depth;
            return p;
        }
        case Backend::LinearSvm: return classifiers::SvmParams{a.lambda, a.epochs};
        case Backend::SoftmaxRegression: {
            classifiers::SoftmaxParams p;
            if (a.learning_rate > 0.0) p.learning_rate = a.learning_rate;
            if (a.l2 >= 0.0) p.l2 = a.l2;
            p.max_iter = a.max_iter;
            return p;
        }
        case Backend::GradientBoostedTrees: {
            classifiers::BoostParams p;
            p.rounds = a.rounds;
            if (a.max_depth > 0) p.max_depth = a.max_depth;
            if (a.learning_rate > 0.0) p.learning_rate = a.learning_rate;
            p.subsample = a.subsample;
            if (a.l2 >= 0.0) p.l2 = a.l2;
            return p;
        }
    }
    return classifiers::KnnParams{a.k};
}

struct TrainArgs {
    std::string data;
    int track = 1;
    std::string features = "tfidf";
    int ngram_lo = 1;
    int ngram_hi = 1;
    std::string text_mode = "response";
    FeatureSources sources;
    ModelArgs model;
    std::uint64_t seed = 42;
    std::string model_out;
};

int do_train(const TrainArgs& a, std::ostream& out) {
    check_track(a.track);
    const auto data = corpus::load_dataset(a.data);
    const auto refs = responses_of(data);

    Pipeline p;
    p.track = a.track;
    if (a.features == "tfidf" || a.features == "bow") {
        p.kind = "text";
        p.text_mode = parse_text_mode(a.text_mode);
        std::vector<std::string> texts;
        for (const auto& ref : refs) texts.push_back(corpus::build_input_text(*ref.response, *ref.conversation, p.text_mode));
        p.vectorizer = features::fit_vectorizer(texts, {a.ngram_lo, a.ngram_hi}, features::parse_weighting(a.features));
    } else if (a.features == "embedding") {
        p.kind = "embedding";
        p.use_history = !a.sources.history_embeddings.empty();
        p.use_probs = !a.sources.probs.empty();
    } else {
        throw ValidationError("unknown feature kind \"" + a.features + "\" (expected tfidf, bow or embedding)");
    }

    classifiers::LabeledMatrix m;
    m.rows = featurize(p, data, a.sources);
    std::vector<std::string> gold;
    std::vector<std::string> unlabeled;
    for (const auto& ref : refs) {
        if (auto g = gold_label(*ref.response, a.track)) {
            gold.push_back(*g);
        } else {
            unlabeled.push_back(ref.response->id);
        }
    }
    if (!unlabeled.empty()) {
        std::string msg = "training responses without a track " + std::to_string(a.track) + " label:";
        for (const auto& id : unlabeled) msg += " " + id;
        throw ValidationError(msg);
    }
    if (a.track == 5) {
        const std::set<std::string> names(gold.begin(), gold.end());
        m.class_names.assign(names.begin(), names.end());
    } else {
        m.class_names = ternary_class_names();
    }
    for (const auto& g : gold) {
        m.labels.push_back(static_cast<std::size_t>(
            std::find(m.class_names.begin(), m.class_names.end(), g) - m.class_names.begin()));
    }

    const auto backend = classifiers::parse_backend(a.model.backend);
    const auto clf = classifiers::fit(backend, m, make_params(backend, a.model), a.seed);

    const json doc = {{"format_version", kPipelineFormatVersion},
                      {"track", a.track},
                      {"seed", a.seed},
                      {"features", pipeline_features_json(p)},
                      {"classifier", clf.to_json()}};
    write_text(a.model_out, doc.dump() + "\n");

    std::size_t correct = 0;
    for (std::size_t i = 0; i < m.rows.size(); ++i) correct += clf.predict(m.rows[i]) == m.labels[i] ? 1 : 0;
    out << "trained " << classifiers::to_string(backend) << " on " << m.rows.size() << " responses, "
        << m.dim() << " features, track " << a.track << " (training accuracy "
        << fmt2(100.0 * static_cast<double>(correct) / static_cast<double>(m.rows.size())) << ") -> "
        << a.model_out << '\n';
    return kExitOk;
}

struct PredictArgs {
    std::string model;
    std::string data;
    FeatureSources sources;
    std::string out;
    std::string overrides;
    bool educated_guess = false;
};

int do_predict(const PredictArgs& a, std::ostream& out) {
    const json doc = read_json_file(a.model);
    const Pipeline p = pipeline_from_json(doc);
    const auto clf = classifiers::TrainedClassifier::from_json(doc.at("classifier"));
    const auto data = corpus::load_dataset(a.data);
    const auto refs = responses_of(data);
    const auto rows = featurize(p, data, a.sources);

    std::vector<std::string> labels;
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        labels.push_back(clf.class_names()[clf.predict(rows[i])]);
        tags.push_back(refs[i].response->tutor_id);
    }
    if (!a.overrides.empty() || a.educated_guess) {
        auto table = a.educated_guess ? eval::educated_guess_overrides() : eval::OverrideTable{};
        if (!a.overrides.empty()) {
            for (auto& [k, v] : eval::load_override_table(a.overrides)) table[k] = v;
        }
        labels = eval::apply_overrides(labels, tags, table);
    }

    std::vector<scores::Prediction> preds;
    for (std::size_t i = 0; i < refs.size(); ++i) preds.push_back({refs[i].response->id, p.track, labels[i]});
    if (a.out.empty()) {
        scores::write_predictions(preds, out);
    } else {
        scores::write_predictions(preds, fs::path(a.out));
    }
    return kExitOk;
}

struct EvaluateArgs {
    std::string gold;
    std::string pred;
    int track = 1;
    std::string mode = "exact";
    std::string name;
    bool json_out = false;
};

/// Gold and predicted labels aligned in dataset order.
void align_predictions(const corpus::Dataset& data, std::span<const scores::Prediction> preds, int track,
                       std::vector<std::string>& gold, std::vector<std::string>& pred) {
    std::map<std::string, const scores::Prediction*> by_id;
    for (const auto& p : preds) {
        if (p.track != track) {
            throw ValidationError("prediction for " + p.response_id + " is for track " + std::to_string(p.track) +
                                  ", expected " + std::to_string(track));
        }
        by_id.emplace(p.response_id, &p);
    }
    std::vector<std::string> missing;
    std::vector<std::string> unlabeled;
    for (const auto& ref : responses_of(data)) {
        const auto g = gold_label(*ref.response, track);
        if (!g) {
            unlabeled.push_back(ref.response->id);
            continue;
        }
        auto it = by_id.find(ref.response->id);
        if (it == by_id.end()) {
            missing.push_back(ref.response->id);
            continue;
        }
        if (track != 5) parse_ternary_or_throw(it->second->prediction);
        gold.push_back(*g);
        pred.push_back(it->second->prediction);
        by_id.erase(it);
    }
    std::string msg;
    if (!unlabeled.empty()) {
        msg += "\n  gold responses without a track " + std::to_string(track) + " label:";
        for (const auto& id : unlabeled) msg += " " + id;
    }
    if (!missing.empty()) {
        msg += "\n  responses without a prediction:";
        for (const auto& id : missing) msg += " " + id;
    }
    if (!by_id.empty()) {
        msg += "\n  predictions for unknown responses:";
        for (const auto& [id, ptr] : by_id) msg += " " + id;
    }
    if (!msg.empty()) throw ValidationError("cannot evaluate:" + msg);
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
    check_track(a.track);
    const auto data = corpus::load_dataset(a.gold);
    const auto preds = scores::read_predictions(a.pred);
    std::vector<std::string> gold;
    std::vector<std::string> pred;
    align_predictions(data, preds, a.track, gold, pred);
    const auto report = eval::metrics(gold, pred, eval::parse_mode(a.mode), space_for(a.track));
    print_report(out, a.name.empty() ? fs::path(a.pred).stem().string() : a.name, report, a.json_out);
    return kExitOk;
}

struct CalibrateArgs {
    std::string scores;
    std::string gold;
    int track = 1;
    std::string objective = "macro_f1";
    double step = 0.01;
    std::string out;
    std::string apply;
    std::string pred_out;
    bool json_out = false;
};

int do_calibrate(const CalibrateArgs& a, std::ostream& out) {
    const Dimension dim = ternary_dimension(a.track, "calibrate");
    const auto data = corpus::load_dataset(a.gold);
    const auto records = scores::read_scores(a.scores);
    const auto rows = scores::join_scores(data, records, {scores::Payload::Logit});

    std::vector<double> logits;
    std::vector<Ternary> gold;
    for (const auto& r : rows) {
        const auto g = r.response->label(dim);
        if (!g) throw ValidationError("gold response " + r.response->id + " has no " + std::string(dimension_key(dim)) + " label");
        logits.push_back(*r.record->logit);
        gold.push_back(*g);
    }
    const auto objective = thresholds::parse_objective(a.objective);
    const auto cal = thresholds::calibrate_logit_thresholds(logits, gold, objective, a.step);

    std::vector<Ternary> fitted;
    for (double l : logits) fitted.push_back(thresholds::split_by_logit(l, cal.thresholds));
    const auto report = eval::metrics(gold, fitted, eval::EvalMode::Exact);

    json th = cal.thresholds.to_json();
    th["track"] = a.track;
    th["objective"] = thresholds::to_string(objective);
    th["grid_step"] = a.step;
    th["score"] = cal.objective;
    if (!a.out.empty()) write_text(a.out, th.dump(2) + "\n");

    if (!a.pred_out.empty()) {
        std::vector<scores::Prediction> preds;
        if (a.apply.empty()) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                preds.push_back({rows[i].response->id, a.track, std::string(to_string(fitted[i]))});
            }
        } else {
            for (const auto& r : scores::read_scores(a.apply)) {
                if (!r.logit) throw ValidationError("record " + r.response_id + " in " + a.apply + " has no logit");
                preds.push_back({r.response_id, a.track,
                                 std::string(to_string(thresholds::split_by_logit(*r.logit, cal.thresholds)))});
            }
        }
        scores::write_predictions(preds, fs::path(a.pred_out));
    }

    if (a.json_out) {
        th["report"] = report.to_json();
        out << th.dump(2) << '\n';
    } else {
        out << "thresholds: t_low = " << cal.thresholds.t_low << ", t_high = " << cal.thresholds.t_high
            << " (" << thresholds::to_string(objective) << " " << fmt2(cal.objective) << ")\n";
        print_report(out, "logit thresholds", report, false);
    }
    return kExitOk;
}

struct RulesArgs {
    std::string table;
    std::string scores;
    std::string gold;
    int track = 1;
    std::string out;
    bool stats = false;
    bool json_out = false;
};

int do_rules(const RulesArgs& a, std::ostream& out) {
    const Dimension dim = ternary_dimension(a.track, "rules");
    const auto table = a.table.empty() ? thresholds::default_rule_table()
                                       : thresholds::ProbRuleTable::create(thresholds::load_rule_table(a.table));
    const auto records = scores::read_scores(a.scores);

    std::vector<const scores::ScoreRecord*> used;
    std::vector<Ternary> gold;
    std::optional<corpus::Dataset> data;
    std::vector<scores::AlignedRow> rows;
    if (!a.gold.empty()) {
        data = corpus::load_dataset(a.gold);
        rows = scores::join_scores(*data, records, {scores::Payload::Probs});
        for (const auto& r : rows) {
            const auto g = r.response->label(dim);
            if (!g) throw ValidationError("gold response " + r.response->id + " has no " + std::string(dimension_key(dim)) + " label");
            gold.push_back(*g);
            used.push_back(r.record);
        }
    } else {
        for (const auto& r : records) {
            if (!r.probs) throw ValidationError("record " + r.response_id + " has no probs payload");
            used.push_back(&r);
        }
    }

    std::vector<Ternary> predicted;
    std::vector<scores::Prediction> preds;
    for (const auto* r : used) {
        predicted.push_back(thresholds::apply_prob_rules(*r->probs, dim, table));
        preds.push_back({r->response_id, a.track, std::string(to_string(predicted.back()))});
    }
    if (!a.out.empty()) {
        scores::write_predictions(preds, fs::path(a.out));
    } else if (a.gold.empty()) {
        scores::write_predictions(preds, out);
    }

    json doc = json::object();
    if (a.stats) {
        // Group by the label with the highest probability, as chosen by first-token decoding.
        std::vector<thresholds::ClassProbabilities> probs;
        std::vector<Ternary> argmax_labels;
        for (const auto* r : used) {
            const auto& p = *r->probs;
            probs.push_back(p);
            Ternary best = Ternary::Yes;
            if (p.no > p.yes && p.no >= p.tse) best = Ternary::No;
            else if (p.tse > p.yes && p.tse > p.no) best = Ternary::ToSomeExtent;
            argmax_labels.push_back(best);
        }
        const auto stats = thresholds::derive_rule_stats(probs, argmax_labels);
        for (const auto& [label, mean] : stats) {
            doc["stats"][std::string(to_string(label))] = {{"yes", mean.yes}, {"no", mean.no}, {"tse", mean.tse}};
            if (!a.json_out) {
                out << "predicted " << to_string(label) << ": mean p_yes " << fmt2(mean.yes) << ", p_no "
                    << fmt2(mean.no) << ", p_tse " << fmt2(mean.tse) << '\n';
            }
        }
    }
    if (!a.gold.empty()) {
        const auto report = eval::metrics(gold, predicted, eval::EvalMode::Exact);
        if (a.json_out) {
            doc["report"] = report.to_json();
        } else {
            print_report(out, "probability rules", report, false);
        }
    }
    if (a.json_out && !doc.empty()) out << doc.dump(2) << '\n';
    return kExitOk;
}

struct BaselineArgs {
    std::string kind = "always_yes";
    std::string gold;
    int track = 1;
    std::uint64_t seed = 42;
    std::string mode = "exact";
    bool json_out = false;
};

int do_baseline(const BaselineArgs& a, std::ostream& out) {
    check_track(a.track);
    const auto data = corpus::load_dataset(a.gold);
    std::vector<std::string> gold;
    for (const auto& ref : responses_of(data)) {
        auto g = gold_label(*ref.response, a.track);
        if (!g) throw ValidationError("gold response " + ref.response->id + " has no track " + std::to_string(a.track) + " label");
        gold.push_back(*g);
    }
    std::vector<std::string> pred;
    std::string name;
    if (a.kind == "always_yes") {
        if (a.track == 5) throw ValidationError("the always-yes baseline is defined for tracks 1-4");
        pred.assign(gold.size(), std::string(to_string(Ternary::Yes)));
        name = "Always Yes";
    } else if (a.kind == "random") {
        std::vector<std::string> classes;
        if (a.track == 5) {
            const std::set<std::string> names(gold.begin(), gold.end());
            classes.assign(names.begin(), names.end());
        } else {
            classes = ternary_class_names();
        }
        pred = eval::random_baseline(gold.size(), classes, a.seed);
        name = "Random";
    } else {
        throw ValidationError("unknown baseline \"" + a.kind + "\" (expected always_yes or random)");
    }
    print_report(out, name, eval::metrics(gold, pred, eval::parse_mode(a.mode), space_for(a.track)), a.json_out);
    return kExitOk;
}

std::map<std::string, double> parse_pairs(const std::vector<std::string>& items, std::string_view flag) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ValidationError(std::string(flag) + " expects metric=value, got \"" + item + "\"");
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) throw std::invalid_argument("trailing characters");
            out[item.substr(0, eq)] = v;
        } catch (const std::exception&) {
            throw ValidationError(std::string(flag) + ": \"" + item + "\" has no numeric value");
        }
    }
    return out;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lightweight tutor-response assessment toolkit", "tutoreval"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    SplitArgs split;
    auto* split_cmd = app.add_subcommand("split", "Grouped train/dev split at conversation level");
    split_cmd->add_option("--input", split.input, "Dataset JSON")->required();
    split_cmd->add_option("--ratio", split.ratio, "Train fraction")->capture_default_str();
    split_cmd->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
    split_cmd->add_option("--train-out", split.train_out, "Train file (default <input>.train.json)");
    split_cmd->add_option("--dev-out", split.dev_out, "Dev file (default <input>.dev.json)");

    StatsArgs stats;
    auto* stats_cmd = app.add_subcommand("stats", "Class balance per dimension");
    stats_cmd->add_option("--input", stats.inputs, "Dataset JSON (repeatable)")->required();
    stats_cmd->add_option("--track", stats.track, "Only this track (1-4)");
    stats_cmd->add_flag("--json", stats.json_out, "JSON output");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Fit features and a classifier, save the model");
    train_cmd->add_option("--data", train.data, "Training dataset JSON")->required();
    train_cmd->add_option("--track", train.track, "Track 1-5")->required();
    train_cmd->add_option("--features", train.features, "tfidf | bow | embedding")->capture_default_str();
    train_cmd->add_option("--ngram-lo", train.ngram_lo)->capture_default_str();
    train_cmd->add_option("--ngram-hi", train.ngram_hi)->capture_default_str();
    train_cmd->add_option("--text-mode", train.text_mode, "response | history")->capture_default_str();
    train_cmd->add_option("--embeddings", train.sources.embeddings, "Response embedding score file");
    train_cmd->add_option("--history-embeddings", train.sources.history_embeddings, "History embedding score file");
    train_cmd->add_option("--probs", train.sources.probs, "Label probability score file");
    train_cmd->add_option("--backend", train.model.backend, "knn | knn_balanced | forest | svm | softmax | gbt")
        ->capture_default_str();
    train_cmd->add_option("--k", train.model.k, "Neighbours for k-NN")->capture_default_str();
    train_cmd->add_option("--trees", train.model.trees, "Forest size")->capture_default_str();
    train_cmd->add_option("--max-depth", train.model.max_depth, "Tree depth (forest: unlimited, gbt: 3)");
    train_cmd->add_option("--learning-rate", train.model.learning_rate, "softmax: 1.0, gbt: 0.1");
    train_cmd->add_option("--rounds", train.model.rounds, "Boosting rounds")->capture_default_str();
    train_cmd->add_option("--subsample", train.model.subsample, "Boosting row subsample")->capture_default_str();
    train_cmd->add_option("--lambda", train.model.lambda, "SVM regularization")->capture_default_str();
    train_cmd->add_option("--epochs", train.model.epochs, "SVM epochs")->capture_default_str();
    train_cmd->add_option("--l2", train.model.l2, "L2 penalty (softmax: 0, gbt: 1)");
    train_cmd->add_option("--max-iter", train.model.max_iter, "Softmax iterations")->capture_default_str();
    train_cmd->add_option("--seed", train.seed)->capture_default_str();
    train_cmd->add_option("--model-out", train.model_out, "Model JSON to write")->required();

    PredictArgs predict;
    auto* predict_cmd = app.add_subcommand("predict", "Apply a saved model and write a predictions file");
    predict_cmd->add_option("--model", predict.model)->required();
    predict_cmd->add_option("--data", predict.data)->required();
    predict_cmd->add_option("--embeddings", predict.sources.embeddings);
    predict_cmd->add_option("--history-embeddings", predict.sources.history_embeddings);
    predict_cmd->add_option("--probs", predict.sources.probs);
    predict_cmd->add_option("--out", predict.out, "Predictions JSONL (default stdout)");
    predict_cmd->add_option("--overrides", predict.overrides, "JSON object tutor tag -> forced label");
    predict_cmd->add_flag("--educated-guess", predict.educated_guess, "Force Tutor9/Tutor2/Tutor3 identities");

    EvaluateArgs evaluate;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a predictions file against gold labels");
    evaluate_cmd->add_option("--gold", evaluate.gold)->required();
    evaluate_cmd->add_option("--pred", evaluate.pred)->required();
    evaluate_cmd->add_option("--track", evaluate.track)->required();
    evaluate_cmd->add_option("--mode", evaluate.mode, "exact | lenient")->capture_default_str();
    evaluate_cmd->add_option("--name", evaluate.name, "Row label in the report");
    evaluate_cmd->add_flag("--json", evaluate.json_out);

    CalibrateArgs calibrate;
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Fit two logit thresholds against gold labels");
    calibrate_cmd->add_option("--scores", calibrate.scores, "Score file with logits")->required();
    calibrate_cmd->add_option("--gold", calibrate.gold)->required();
    calibrate_cmd->add_option("--track", calibrate.track, "Track 1-4")->required();
    calibrate_cmd->add_option("--objective", calibrate.objective, "macro_f1 | accuracy")->capture_default_str();
    calibrate_cmd->add_option("--step", calibrate.step, "Grid step")->capture_default_str();
    calibrate_cmd->add_option("--out", calibrate.out, "Thresholds JSON to write");
    calibrate_cmd->add_option("--apply", calibrate.apply, "Score file to label with the fitted thresholds");
    calibrate_cmd->add_option("--pred-out", calibrate.pred_out, "Predictions JSONL to write");
    calibrate_cmd->add_flag("--json", calibrate.json_out);

    RulesArgs rules;
    auto* rules_cmd = app.add_subcommand("rules", "Apply per-dimension probability rules");
    rules_cmd->add_option("--table", rules.table, "Rule table JSON (default: bundled table)");
    rules_cmd->add_option("--scores", rules.scores, "Score file with probs")->required();
    rules_cmd->add_option("--gold", rules.gold, "Dataset to score against");
    rules_cmd->add_option("--track", rules.track, "Track 1-4")->required();
    rules_cmd->add_option("--out", rules.out, "Predictions JSONL to write");
    rules_cmd->add_flag("--stats", rules.stats, "Mean probabilities grouped by the most probable label");
    rules_cmd->add_flag("--json", rules.json_out);

    BaselineArgs baseline;
    auto* baseline_cmd = app.add_subcommand("baseline", "Always-yes or seeded random baseline");
    baseline_cmd->add_option("--kind", baseline.kind, "always_yes | random")->capture_default_str();
    baseline_cmd->add_option("--gold", baseline.gold)->required();
    baseline_cmd->add_option("--track", baseline.track)->required();
    baseline_cmd->add_option("--seed", baseline.seed)->capture_default_str();
    baseline_cmd->add_option("--mode", baseline.mode, "exact | lenient")->capture_default_str();
    baseline_cmd->add_flag("--json", baseline.json_out);

    int rank = 0;
    int total = 0;
    auto* quartile_cmd = app.add_subcommand("quartile", "Leaderboard quartile of a rank");
    quartile_cmd->add_option("--rank", rank)->required();
    quartile_cmd->add_option("--total", total)->required();

    std::vector<std::string> ours;
    std::vector<std::string> winners;
    bool delta_json = false;
    auto* delta_cmd = app.add_subcommand("delta", "Winner-minus-ours differences per metric");
    delta_cmd->add_option("--ours", ours, "metric=value (repeatable)")->required();
    delta_cmd->add_option("--winner", winners, "metric=value (repeatable)")->required();
    delta_cmd->add_flag("--json", delta_json);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* context = &app;
        for (const auto* sub : app.get_subcommands()) context = sub;
        err << context->help();
        return kExitValidation;
    }

    try {
        if (*split_cmd) return do_split(split, out, err);
        if (*stats_cmd) return do_stats(stats, out);
        if (*train_cmd) return do_train(train, out);
        if (*predict_cmd) return do_predict(predict, out);
        if (*evaluate_cmd) return do_evaluate(evaluate, out);
        if (*calibrate_cmd) return do_calibrate(calibrate, out);
        if (*rules_cmd) return do_rules(rules, out);
        if (*baseline_cmd) return do_baseline(baseline, out);
        if (*quartile_cmd) {
            out << 'Q' << eval::quartile(rank, total) << '\n';
            return kExitOk;
        }
        if (*delta_cmd) {
            const auto rows = eval::delta_report(parse_pairs(ours, "--ours"), parse_pairs(winners, "--winner"));
            if (delta_json) {
                json j = json::object();
                for (const auto& r : rows) j[r.metric] = {{"ours", r.ours}, {"winner", r.winner}, {"delta", r.text}};
                out << j.dump(2) << '\n';
            } else {
                out << eval::render_deltas(rows);
            }
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitValidation;
}

}  // namespace tutoreval::cli
