#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tutoreval/labels.hpp"

namespace tutoreval::eval {

/// Lenient scoring folds "To some extent" into "Yes" on both gold and predictions.
enum class EvalMode { Exact, Lenient };

std::string_view to_string(EvalMode mode);
EvalMode parse_mode(std::string_view s);

/// Ternary labels (tracks 1-4) or free-form tutor identities (track 5, Exact only).
enum class LabelSpace { Ternary, TutorIdentity };

/// Scores are percentages in [0, 100].
struct MetricReport {
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::map<std::string, double> per_class_f1;
    EvalMode mode = EvalMode::Exact;
    std::size_t n = 0;

    nlohmann::json to_json() const;
};

/// Square confusion matrix, rows = gold class, columns = predicted class.
using Confusion = std::vector<std::vector<double>>;

/// Mean per-class F1 (in [0, 1]) over classes that occur in gold or predictions.
/// A class with P + R = 0 contributes 0.
double macro_f1(const Confusion& confusion);

MetricReport metrics(std::span<const Ternary> gold, std::span<const Ternary> pred, EvalMode mode);
/// Throws ValidationError on length mismatch, empty input, or Lenient over tutor identities.
MetricReport metrics(std::span<const std::string> gold, std::span<const std::string> pred,
                     EvalMode mode, LabelSpace space);

std::vector<Ternary> always_yes(std::size_t n);

/// I.i.d. uniform draws from `classes` with Rng(seed).
std::vector<std::string> random_baseline(std::size_t n, std::span<const std::string> classes,
                                         std::uint64_t seed);
std::vector<Ternary> random_ternary_baseline(std::size_t n, std::uint64_t seed);

/// Anonymized tutor tag -> forced tutor identity.
using OverrideTable = std::map<std::string, std::string>;

/// Tutor9 -> Novice, Tutor2 -> Mistral, Tutor3 -> Llama31405B.
OverrideTable educated_guess_overrides();
/// JSON object of tag -> label.
OverrideTable load_override_table(const std::filesystem::path& path);

std::vector<std::string> apply_overrides(std::span<const std::string> pred,
                                         std::span<const std::string> tags,
                                         const OverrideTable& table);

/// Leaderboard bucket min(4, floor(4 * rank / total) + 1).
int quartile(int rank, int total);

struct DeltaRow {
    std::string metric;
    double ours = 0.0;
    double winner = 0.0;
    double delta = 0.0;  // winner - ours, rounded to cents
    std::string text;    // delta with two decimals
};

/// Throws ValidationError when the two maps do not share the same metric keys.
std::vector<DeltaRow> delta_report(const std::map<std::string, double>& ours,
                                   const std::map<std::string, double>& winners);

struct NamedReport {
    std::string name;
    MetricReport report;
};

/// Aligned plain-text table with one row per system and F1-macro / Accuracy columns.
std::string render_table(std::span<const NamedReport> rows);
/// "metric | winner - ours = delta" rows.
std::string render_deltas(std::span<const DeltaRow> rows);

}  // namespace tutoreval::eval
