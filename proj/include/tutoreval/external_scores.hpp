#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tutoreval/corpus.hpp"
#include "tutoreval/thresholds.hpp"

namespace tutoreval::scores {

/// Neural output for one response, produced offline.
struct ScoreRecord {
    std::string response_id;
    std::string source;
    std::optional<std::vector<double>> embedding;
    std::optional<thresholds::ClassProbabilities> probs;
    std::optional<double> logit;
};

enum class Payload { Embedding, Probs, Logit };

std::string_view to_string(Payload p);
Payload parse_payload(std::string_view s);

inline constexpr double kSimplexTolerance = 1e-4;

/// One JSON object per line; blank lines are skipped. Errors name the 1-based
/// line: malformed JSON, no payload, probabilities off the simplex (1e-4),
/// ragged embedding dims, duplicate response ids.
std::vector<ScoreRecord> parse_scores(std::istream& in, std::string_view origin = "<stream>");
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

std::string format_score_line(const ScoreRecord& record);
void write_scores(std::span<const ScoreRecord> records, const std::filesystem::path& path);

/// One response of a split together with its joined payloads.
struct AlignedRow {
    const corpus::Conversation* conversation = nullptr;
    const corpus::TutorResponse* response = nullptr;
    const ScoreRecord* record = nullptr;
};

/// Inner join on response id, in the dataset's response order. Fails with a
/// ValidationError listing responses without a record, or naming each required
/// payload missing from some matched record. The returned pointers refer into
/// `dataset` and `records`.
std::vector<AlignedRow> join_scores(const corpus::Dataset& dataset,
                                    std::span<const ScoreRecord> records,
                                    const std::set<Payload>& require);

/// Predictions file line: {"response_id", "track", "prediction"}.
struct Prediction {
    std::string response_id;
    int track = 1;
    std::string prediction;
};

std::vector<Prediction> parse_predictions(std::istream& in, std::string_view origin = "<stream>");
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(std::span<const Prediction> predictions, std::ostream& out);
void write_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path);

}  // namespace tutoreval::scores
