#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tutoreval/labels.hpp"

namespace tutoreval::thresholds {

/// Two cut points on a binary model's positive-class logit.
/// Valid when -1 <= t_low < t_high <= 1.
struct LogitThresholds {
    double t_low = -1.0 / 3.0;
    double t_high = 1.0 / 3.0;

    nlohmann::json to_json() const;
    static LogitThresholds from_json(const nlohmann::json& j);
};

/// Throws ValidationError unless -1 <= t_low < t_high <= 1.
void validate(const LogitThresholds& th);

/// logit < t_low -> No; t_low <= logit < t_high -> ToSomeExtent; logit >= t_high -> Yes.
Ternary split_by_logit(double logit, const LogitThresholds& th);

struct ClassProbabilities {
    double yes = 0.0;
    double no = 0.0;
    double tse = 0.0;

    /// Each component in [0, 1] and the sum within `tol` of 1.
    bool on_simplex(double tol = 1e-6) const;
};

/// Yes fires when p_yes > p_yes_gt and p_no < p_no_lt (absent bounds do not constrain).
struct YesRule {
    std::optional<double> p_yes_gt;
    std::optional<double> p_no_lt;
};

/// No fires when p_yes < p_yes_lt and p_no > p_no_gt.
struct NoRule {
    std::optional<double> p_yes_lt;
    std::optional<double> p_no_gt;
};

struct DimensionRules {
    YesRule yes;
    NoRule no;
};

/// Unchecked rule constants as read from a file.
using RuleTableSpec = std::map<Dimension, DimensionRules>;

/// Problems with a table: constants outside [0, 1], or a dimension whose Yes
/// and No rules can both fire on some point of the probability simplex.
/// Empty when the table is usable.
std::vector<std::string> validate_rule_table(const RuleTableSpec& spec);

/// A rule table that passed validate_rule_table.
class ProbRuleTable {
public:
    /// Throws ValidationError listing every violation.
    static ProbRuleTable create(RuleTableSpec spec);

    const RuleTableSpec& spec() const { return spec_; }
    bool has(Dimension dim) const { return spec_.contains(dim); }
    const DimensionRules& rules(Dimension dim) const;

private:
    explicit ProbRuleTable(RuleTableSpec spec) : spec_(std::move(spec)) {}
    RuleTableSpec spec_;
};

/// The four per-dimension rules tuned for the fine-tuned decoder:
///   mistake_identification  Yes: p_yes > 0.90 & p_no < 0.05   No: p_yes < 0.40 & p_no > 0.50
///   mistake_location        Yes: p_yes > 0.75 & p_no < 0.15   No: p_yes < 0.42 & p_no > 0.50
///   providing_guidance      Yes: p_yes > 0.65 & p_no < 0.12   No: p_yes < 0.35 & p_no > 0.45
///   actionability           Yes: p_yes > 0.70 & p_no < 0.14   No: p_yes < 0.25 & p_no > 0.65
ProbRuleTable default_rule_table();

RuleTableSpec parse_rule_table(const nlohmann::json& j);
RuleTableSpec load_rule_table(const std::filesystem::path& path);
nlohmann::json to_json(const RuleTableSpec& spec);

/// Yes rule first, then No rule, otherwise ToSomeExtent. Throws
/// ValidationError if p is off the simplex (tolerance 1e-4) or the table has no
/// rules for `dim`.
Ternary apply_prob_rules(const ClassProbabilities& p, Dimension dim, const ProbRuleTable& table);

enum class Objective { MacroF1, Accuracy };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

struct Calibration {
    LogitThresholds thresholds;
    double objective = 0.0;  // percentage, as reported by eval
};

/// Exhaustive search over grid pairs t_low < t_high in [-1, 1] at `grid_step`.
/// Returns the best pair; ties go to the smaller t_low, then the smaller t_high.
Calibration calibrate_logit_thresholds(std::span<const double> logits, std::span<const Ternary> gold,
                                       Objective objective, double grid_step = 0.01);

/// Mean probabilities grouped by predicted label; labels never predicted are absent.
std::map<Ternary, ClassProbabilities> derive_rule_stats(std::span<const ClassProbabilities> probs,
                                                        std::span<const Ternary> predicted);

}  // namespace tutoreval::thresholds
