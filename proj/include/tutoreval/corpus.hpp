#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tutoreval/labels.hpp"

namespace tutoreval::corpus {

enum class Speaker { Tutor, Student };

std::string_view to_string(Speaker speaker);

struct Turn {
    Speaker speaker = Speaker::Tutor;
    std::string text;
};

struct TutorResponse {
    std::string id;
    std::string tutor_id;  // track-5 class label, or an anonymized tag on unlabeled data
    std::string text;
    std::map<Dimension, Ternary> annotations;  // may be empty on unlabeled data

    std::optional<Ternary> label(Dimension dim) const;
};

struct Conversation {
    std::string id;
    std::vector<Turn> history;
    std::vector<TutorResponse> responses;
};

struct Dataset {
    std::vector<Conversation> conversations;

    std::size_t response_count() const;
};

/// One side of a grouped split, with the parameters that produced it.
struct Split {
    Dataset data;
    std::uint64_t seed = 0;
    double ratio = 0.0;
};

struct SplitResult {
    Split train;
    Split dev;
    std::vector<std::string> warnings;
};

/// Parse and validate a dataset document. Errors carry the JSON path of the
/// offending field (e.g. conversations[2].responses[0].annotations.actionability).
Dataset parse_dataset(std::string_view json_text);
Dataset load_dataset(const std::filesystem::path& path);

/// Throws ValidationError on empty turns, empty conversations or duplicate ids.
void validate(const Dataset& dataset);

nlohmann::json to_json(const Dataset& dataset);
/// Writes the dataset plus a "split" metadata object (ignored on load).
void save_split(const Split& split, std::string_view side, const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Partition whole conversations into train/dev.
///
/// Conversations are shuffled with Rng(seed) and the first round(ratio * N)
/// go to train; with N >= 2 each side keeps at least one conversation. Both
/// sides preserve the input order of their conversations.
SplitResult grouped_split(const Dataset& dataset, double ratio, std::uint64_t seed);

struct LabelShare {
    std::size_t count = 0;
    double fraction = 0.0;
};

/// Counts and fractions of each label present for `dim`. Throws
/// ValidationError listing unlabeled response ids.
std::map<Ternary, LabelShare> class_distribution(const Dataset& dataset, Dimension dim);

enum class InputText { ResponseOnly, ResponseWithHistory };

inline constexpr std::string_view kHistorySeparator = "---";

/// ResponseOnly: the response text verbatim. ResponseWithHistory: one
/// "Speaker: text" line per turn, a "---" line, then the response text.
std::string build_input_text(const TutorResponse& response, const Conversation& conversation,
                             InputText mode);

}  // namespace tutoreval::corpus
