#include "tutoreval/thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tutoreval/errors.hpp"
#include "tutoreval/eval.hpp"

namespace tutoreval::thresholds {

nlohmann::json LogitThresholds::to_json() const { return {{"t_low", t_low}, {"t_high", t_high}}; }

LogitThresholds LogitThresholds::from_json(const nlohmann::json& j) {
    try {
        LogitThresholds th{j.at("t_low").get<double>(), j.at("t_high").get<double>()};
        validate(th);
        return th;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed thresholds: ") + e.what());
    }
}

void validate(const LogitThresholds& th) {
    if (!(th.t_low >= -1.0 && th.t_low < th.t_high && th.t_high <= 1.0)) {
        std::ostringstream msg;
        msg << "invalid thresholds (" << th.t_low << ", " << th.t_high
            << "); need -1 <= t_low < t_high <= 1";
        throw ValidationError(msg.str());
    }
}

Ternary split_by_logit(double logit, const LogitThresholds& th) {
    validate(th);
    if (logit < th.t_low) return Ternary::No;
    if (logit < th.t_high) return Ternary::ToSomeExtent;
    return Ternary::Yes;
}

bool ClassProbabilities::on_simplex(double tol) const {
    for (double v : {yes, no, tse}) {
        if (!(v >= 0.0 && v <= 1.0)) return false;
    }
    return std::abs(yes + no + tse - 1.0) <= tol;
}

namespace {

// Interval of one coordinate inside [0, 1] with open/closed ends.
struct Interval {
    double lo = 0.0;
    bool lo_open = false;
    double hi = 1.0;
    bool hi_open = false;

    void raise_lo(std::optional<double> v) {
        if (v && *v >= lo) {
            lo = *v;
            lo_open = true;
        }
    }
    void lower_hi(std::optional<double> v) {
        if (v && *v <= hi) {
            hi = *v;
            hi_open = true;
        }
    }
    bool empty() const { return lo > hi || (lo == hi && (lo_open || hi_open)); }
};

// Can both rules fire at one point with p_yes + p_no <= 1?
bool rules_overlap(const DimensionRules& r) {
    Interval y;
    y.raise_lo(r.yes.p_yes_gt);
    y.lower_hi(r.no.p_yes_lt);
    Interval n;
    n.raise_lo(r.no.p_no_gt);
    n.lower_hi(r.yes.p_no_lt);
    if (y.empty() || n.empty()) return false;
    const double min_sum = y.lo + n.lo;
    if (min_sum < 1.0) return true;
    return min_sum == 1.0 && !y.lo_open && !n.lo_open;
}

void check_constant(std::optional<double> v, const std::string& where, std::vector<std::string>& out) {
    if (v && !(*v >= 0.0 && *v <= 1.0)) {
        std::ostringstream msg;
        msg << where << " = " << *v << " is outside [0, 1]";
        out.push_back(msg.str());
    }
}

}  // namespace

std::vector<std::string> validate_rule_table(const RuleTableSpec& spec) {
    std::vector<std::string> out;
    for (const auto& [dim, r] : spec) {
        const std::string key(dimension_key(dim));
        check_constant(r.yes.p_yes_gt, key + ".yes.p_yes_gt", out);
        check_constant(r.yes.p_no_lt, key + ".yes.p_no_lt", out);
        check_constant(r.no.p_yes_lt, key + ".no.p_yes_lt", out);
        check_constant(r.no.p_no_gt, key + ".no.p_no_gt", out);
        if (rules_overlap(r)) {
            out.push_back(key + ": yes and no rules can fire on the same probabilities");
        }
    }
    return out;
}

ProbRuleTable ProbRuleTable::create(RuleTableSpec spec) {
    const auto violations = validate_rule_table(spec);
    if (!violations.empty()) {
        std::string msg = "invalid rule table:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw ValidationError(msg);
    }
    return ProbRuleTable(std::move(spec));
}

const DimensionRules& ProbRuleTable::rules(Dimension dim) const {
    auto it = spec_.find(dim);
    if (it == spec_.end()) {
        throw ValidationError("rule table has no rules for " + std::string(dimension_key(dim)));
    }
    return it->second;
}

ProbRuleTable default_rule_table() {
    RuleTableSpec spec;
    spec[Dimension::MistakeIdentification] = {{0.90, 0.05}, {0.40, 0.50}};
    spec[Dimension::MistakeLocation] = {{0.75, 0.15}, {0.42, 0.50}};
    spec[Dimension::ProvidingGuidance] = {{0.65, 0.12}, {0.35, 0.45}};
    spec[Dimension::Actionability] = {{0.70, 0.14}, {0.25, 0.65}};
    return ProbRuleTable::create(std::move(spec));
}

namespace {

std::optional<double> optional_number(const nlohmann::json& obj, const char* key,
                                      const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw ValidationError(where + "." + key + ": expected a number");
    return it->get<double>();
}

}  // namespace

RuleTableSpec parse_rule_table(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("rule table: expected a JSON object");
    RuleTableSpec spec;
    for (const auto& [key, body] : j.items()) {
        const auto dim = parse_dimension(key);
        if (!dim) throw ValidationError("rule table: unknown dimension \"" + key + "\"");
        if (!body.is_object()) throw ValidationError("rule table: " + key + " must be an object");
        DimensionRules r;
        if (auto it = body.find("yes"); it != body.end()) {
            r.yes.p_yes_gt = optional_number(*it, "p_yes_gt", key + ".yes");
            r.yes.p_no_lt = optional_number(*it, "p_no_lt", key + ".yes");
        }
        if (auto it = body.find("no"); it != body.end()) {
            r.no.p_yes_lt = optional_number(*it, "p_yes_lt", key + ".no");
            r.no.p_no_gt = optional_number(*it, "p_no_gt", key + ".no");
        }
        spec[*dim] = r;
    }
    return spec;
}

RuleTableSpec load_rule_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rule table " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return parse_rule_table(j);
}

nlohmann::json to_json(const RuleTableSpec& spec) {
    auto put = [](nlohmann::json& obj, const char* key, std::optional<double> v) {
        if (v) obj[key] = *v;
    };
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [dim, r] : spec) {
        nlohmann::json yes = nlohmann::json::object();
        nlohmann::json no = nlohmann::json::object();
        put(yes, "p_yes_gt", r.yes.p_yes_gt);
        put(yes, "p_no_lt", r.yes.p_no_lt);
        put(no, "p_yes_lt", r.no.p_yes_lt);
        put(no, "p_no_gt", r.no.p_no_gt);
        out[std::string(dimension_key(dim))] = {{"yes", yes}, {"no", no}};
    }
    return out;
}

Ternary apply_prob_rules(const ClassProbabilities& p, Dimension dim, const ProbRuleTable& table) {
    if (!p.on_simplex(1e-4)) {
        std::ostringstream msg;
        msg << "probabilities (" << p.yes << ", " << p.no << ", " << p.tse << ") are not on the simplex";
        throw ValidationError(msg.str());
    }
    const auto& r = table.rules(dim);
    const bool yes = (!r.yes.p_yes_gt || p.yes > *r.yes.p_yes_gt) && (!r.yes.p_no_lt || p.no < *r.yes.p_no_lt);
    if (yes) return Ternary::Yes;
    const bool no = (!r.no.p_yes_lt || p.yes < *r.no.p_yes_lt) && (!r.no.p_no_gt || p.no > *r.no.p_no_gt);
    if (no) return Ternary::No;
    return Ternary::ToSomeExtent;
}

std::string_view to_string(Objective o) { return o == Objective::MacroF1 ? "macro_f1" : "accuracy"; }

Objective parse_objective(std::string_view s) {
    if (s == "macro_f1") return Objective::MacroF1;
    if (s == "accuracy") return Objective::Accuracy;
    throw ValidationError("unknown objective \"" + std::string(s) + "\" (expected macro_f1 or accuracy)");
}

Calibration calibrate_logit_thresholds(std::span<const double> logits, std::span<const Ternary> gold,
                                       Objective objective, double grid_step) {
    if (logits.size() != gold.size()) {
        throw ValidationError("calibration: " + std::to_string(logits.size()) + " logits but " +
                              std::to_string(gold.size()) + " gold labels");
    }
    if (logits.empty()) throw ValidationError("calibration needs at least one example");
    if (!(grid_step > 0.0 && grid_step <= 2.0)) throw ValidationError("grid step must lie in (0, 2]");

    const std::size_t n = logits.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return logits[a] < logits[b]; });
    std::vector<double> sorted(n);
    // prefix[c][j]: gold examples of class c among the j smallest logits.
    std::vector<std::vector<double>> prefix(3, std::vector<double>(n + 1, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        sorted[j] = logits[order[j]];
        for (std::size_t c = 0; c < 3; ++c) prefix[c][j + 1] = prefix[c][j];
        prefix[static_cast<std::size_t>(gold[order[j]])][j + 1] += 1.0;
    }

    const auto steps = static_cast<std::size_t>(std::floor(2.0 / grid_step + 1e-9));
    std::vector<double> grid;
    for (std::size_t i = 0; i <= steps; ++i) grid.push_back(std::min(1.0, -1.0 + static_cast<double>(i) * grid_step));
    // below[i]: number of logits strictly less than grid[i].
    std::vector<std::size_t> below(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        below[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), grid[i]) - sorted.begin());
    }

    constexpr auto kNo = static_cast<std::size_t>(Ternary::No);
    constexpr auto kTse = static_cast<std::size_t>(Ternary::ToSomeExtent);
    constexpr auto kYes = static_cast<std::size_t>(Ternary::Yes);
    eval::Confusion m(3, std::vector<double>(3, 0.0));
    std::optional<Calibration> best;
    for (std::size_t a = 0; a < grid.size(); ++a) {
        for (std::size_t b = a + 1; b < grid.size(); ++b) {
            if (!(grid[a] < grid[b])) continue;
            for (std::size_t c = 0; c < 3; ++c) {
                m[c][kNo] = prefix[c][below[a]];
                m[c][kTse] = prefix[c][below[b]] - prefix[c][below[a]];
                m[c][kYes] = prefix[c][n] - prefix[c][below[b]];
            }
            const double score = objective == Objective::MacroF1
                                     ? 100.0 * eval::macro_f1(m)
                                     : 100.0 * (m[0][0] + m[1][1] + m[2][2]) / static_cast<double>(n);
            if (!best || score > best->objective + 1e-12) {
                best = Calibration{{grid[a], grid[b]}, score};
            }
        }
    }
    if (!best) throw ValidationError("grid step leaves no threshold pair in [-1, 1]");
    return *best;
}

std::map<Ternary, ClassProbabilities> derive_rule_stats(std::span<const ClassProbabilities> probs,
                                                        std::span<const Ternary> predicted) {
    if (probs.size() != predicted.size()) {
        throw ValidationError("rule stats: " + std::to_string(probs.size()) + " probability records but " +
                              std::to_string(predicted.size()) + " predictions");
    }
    if (probs.empty()) throw ValidationError("rule stats need at least one record");
    std::map<Ternary, ClassProbabilities> sums;
    std::map<Ternary, std::size_t> counts;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        auto& s = sums[predicted[i]];
        s.yes += probs[i].yes;
        s.no += probs[i].no;
        s.tse += probs[i].tse;
        ++counts[predicted[i]];
    }
    for (auto& [label, s] : sums) {
        const auto k = static_cast<double>(counts[label]);
        s.yes /= k;
        s.no /= k;
        s.tse /= k;
    }
    return sums;
}

}  // namespace tutoreval::thresholds
