#include "tutoreval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::eval {

std::string_view to_string(EvalMode mode) { return mode == EvalMode::Exact ? "exact" : "lenient"; }

EvalMode parse_mode(std::string_view s) {
    if (s == "exact") return EvalMode::Exact;
    if (s == "lenient") return EvalMode::Lenient;
    throw ValidationError("unknown evaluation mode \"" + std::string(s) + "\" (expected exact or lenient)");
}

nlohmann::json MetricReport::to_json() const {
    return {{"macro_f1", macro_f1},
            {"accuracy", accuracy},
            {"per_class_f1", per_class_f1},
            {"mode", to_string(mode)},
            {"n", n}};
}

namespace {

double class_f1(const Confusion& m, std::size_t c) {
    double col = 0.0;
    double row = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        row += m[c][k];
        col += m[k][c];
    }
    const double tp = m[c][c];
    const double precision = col > 0.0 ? tp / col : 0.0;
    const double recall = row > 0.0 ? tp / row : 0.0;
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

bool class_present(const Confusion& m, std::size_t c) {
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (m[c][k] > 0.0 || m[k][c] > 0.0) return true;
    }
    return false;
}

MetricReport score_strings(std::span<const std::string> gold, std::span<const std::string> pred,
                           EvalMode mode) {
    if (gold.size() != pred.size()) {
        throw ValidationError("gold has " + std::to_string(gold.size()) + " labels but predictions have " +
                              std::to_string(pred.size()));
    }
    if (gold.empty()) throw ValidationError("cannot score an empty prediction set");

    std::set<std::string> names(gold.begin(), gold.end());
    names.insert(pred.begin(), pred.end());
    const std::vector<std::string> classes(names.begin(), names.end());
    auto id_of = [&](const std::string& s) {
        return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), s) -
                                        classes.begin());
    };

    Confusion m(classes.size(), std::vector<double>(classes.size(), 0.0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        m[id_of(gold[i])][id_of(pred[i])] += 1.0;
        if (gold[i] == pred[i]) ++correct;
    }

    MetricReport r;
    r.mode = mode;
    r.n = gold.size();
    r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
    for (std::size_t c = 0; c < classes.size(); ++c) r.per_class_f1[classes[c]] = 100.0 * class_f1(m, c);
    r.macro_f1 = 100.0 * macro_f1(m);
    return r;
}

}  // namespace

double macro_f1(const Confusion& confusion) {
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < confusion.size(); ++c) {
        if (!class_present(confusion, c)) continue;
        sum += class_f1(confusion, c);
        ++present;
    }
    return present > 0 ? sum / static_cast<double>(present) : 0.0;
}

MetricReport metrics(std::span<const Ternary> gold, std::span<const Ternary> pred, EvalMode mode) {
    std::vector<std::string> g;
    std::vector<std::string> p;
    g.reserve(gold.size());
    p.reserve(pred.size());
    for (auto t : gold) g.emplace_back(to_string(t));
    for (auto t : pred) p.emplace_back(to_string(t));
    return metrics(g, p, mode, LabelSpace::Ternary);
}

MetricReport metrics(std::span<const std::string> gold, std::span<const std::string> pred,
                     EvalMode mode, LabelSpace space) {
    if (mode == EvalMode::Exact) return score_strings(gold, pred, mode);
    if (space == LabelSpace::TutorIdentity) {
        throw ValidationError("lenient scoring is undefined for tutor-identity labels");
    }
    const std::string tse(to_string(Ternary::ToSomeExtent));
    const std::string yes(to_string(Ternary::Yes));
    auto fold = [&](std::span<const std::string> xs) {
        std::vector<std::string> out(xs.begin(), xs.end());
        for (auto& s : out) {
            if (s == tse) s = yes;
        }
        return out;
    };
    return score_strings(fold(gold), fold(pred), mode);
}

std::vector<Ternary> always_yes(std::size_t n) { return std::vector<Ternary>(n, Ternary::Yes); }

std::vector<std::string> random_baseline(std::size_t n, std::span<const std::string> classes,
                                         std::uint64_t seed) {
    if (classes.empty()) throw ValidationError("random baseline needs at least one class");
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(classes[rng.below(classes.size())]);
    return out;
}

std::vector<Ternary> random_ternary_baseline(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Ternary> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(kAllTernary[rng.below(kAllTernary.size())]);
    return out;
}

OverrideTable educated_guess_overrides() {
    return {{"Tutor9", "Novice"}, {"Tutor2", "Mistral"}, {"Tutor3", "Llama31405B"}};
}

OverrideTable load_override_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open override table " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j.get<OverrideTable>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": expected a JSON object of tag -> label: " + e.what());
    }
}

std::vector<std::string> apply_overrides(std::span<const std::string> pred,
                                         std::span<const std::string> tags,
                                         const OverrideTable& table) {
    if (pred.size() != tags.size()) {
        throw ValidationError("override: " + std::to_string(pred.size()) + " predictions but " +
                              std::to_string(tags.size()) + " tags");
    }
    std::vector<std::string> out(pred.begin(), pred.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (auto it = table.find(tags[i]); it != table.end()) out[i] = it->second;
    }
    return out;
}

int quartile(int rank, int total) {
    if (total < 1 || rank < 1 || rank > total) {
        throw ValidationError("rank " + std::to_string(rank) + " is outside 1.." + std::to_string(total));
    }
    return std::min(4, 4 * rank / total + 1);
}

namespace {

std::string two_decimals(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::vector<DeltaRow> delta_report(const std::map<std::string, double>& ours,
                                   const std::map<std::string, double>& winners) {
    for (const auto& [metric, value] : winners) {
        if (!ours.contains(metric)) throw ValidationError("missing metric \"" + metric + "\" in our scores");
    }
    std::vector<DeltaRow> rows;
    for (const auto& [metric, value] : ours) {
        auto it = winners.find(metric);
        if (it == winners.end()) throw ValidationError("missing metric \"" + metric + "\" in winner scores");
        DeltaRow row;
        row.metric = metric;
        row.ours = value;
        row.winner = it->second;
        row.delta = std::round((it->second - value) * 100.0) / 100.0;
        row.text = two_decimals(row.delta);
        if (row.text == "-0.00") row.text = "0.00";
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string render_table(std::span<const NamedReport> rows) {
    std::size_t width = std::string_view("Model").size();
    for (const auto& r : rows) width = std::max(width, r.name.size());
    std::ostringstream out;
    auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
    out << pad("Model") << " | F1-macro | Accuracy\n";
    out << std::string(width, '-') << "-+----------+---------\n";
    for (const auto& r : rows) {
        char line[64];
        std::snprintf(line, sizeof line, " | %8.2f | %8.2f\n", r.report.macro_f1, r.report.accuracy);
        out << pad(r.name) << line;
    }
    return out.str();
}

std::string render_deltas(std::span<const DeltaRow> rows) {
    std::size_t width = std::string_view("Metric").size();
    for (const auto& r : rows) width = std::max(width, r.metric.size());
    std::ostringstream out;
    auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
    out << pad("Metric") << " | Delta (winner - ours)\n";
    for (const auto& r : rows) {
        out << pad(r.metric) << " | " << two_decimals(r.winner) << " - " << two_decimals(r.ours)
            << " = " << r.text << '\n';
    }
    return out.str();
}

}  // namespace tutoreval::eval
