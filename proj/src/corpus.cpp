#include "tutoreval/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tutoreval/errors.hpp"
#include "tutoreval/rng.hpp"

namespace tutoreval::corpus {

using nlohmann::json;

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ValidationError(where + ": " + what);
}

const json& require_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) fail(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(where, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_string()) fail(where + "." + key, "expected a string");
    return v.get<std::string>();
}

const json& require_array(const json& obj, const char* key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_array()) fail(where + "." + key, "expected an array");
    return v;
}

Speaker parse_speaker(const json& v, const std::string& where) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "Tutor") return Speaker::Tutor;
        if (s == "Student") return Speaker::Student;
        fail(where, "unknown speaker \"" + s + "\" (expected \"Tutor\" or \"Student\")");
    }
    fail(where, "expected a string");
}

TutorResponse parse_response(const json& j, const std::string& where) {
    TutorResponse r;
    r.id = require_string(j, "id", where);
    r.tutor_id = require_string(j, "tutor_id", where);
    r.text = require_string(j, "text", where);
    if (auto it = j.find("annotations"); it != j.end() && !it->is_null()) {
        const std::string awhere = where + ".annotations";
        if (!it->is_object()) fail(awhere, "expected an object");
        for (const auto& [key, value] : it->items()) {
            const auto dim = parse_dimension(key);
            if (!dim) fail(awhere, "unknown dimension \"" + key + "\"");
            if (!value.is_string()) fail(awhere + "." + key, "expected a label string");
            try {
                r.annotations[*dim] = parse_ternary_or_throw(value.get<std::string>());
            } catch (const ValidationError& e) {
                fail(awhere + "." + key, e.what());
            }
        }
    }
    return r;
}

}  // namespace

std::string_view to_string(Speaker speaker) {
    return speaker == Speaker::Tutor ? "Tutor" : "Student";
}

std::optional<Ternary> TutorResponse::label(Dimension dim) const {
    auto it = annotations.find(dim);
    if (it == annotations.end()) return std::nullopt;
    return it->second;
}

std::size_t Dataset::response_count() const {
    std::size_t n = 0;
    for (const auto& c : conversations) n += c.responses.size();
    return n;
}

Dataset parse_dataset(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("dataset: ") + e.what());
    }
    Dataset out;
    const json& convs = require_array(doc, "conversations", "$");
    out.conversations.reserve(convs.size());
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const std::string where = "conversations[" + std::to_string(i) + "]";
        const json& cj = convs[i];
        Conversation c;
        c.id = require_string(cj, "id", where);
        const json& hist = require_array(cj, "history", where);
        for (std::size_t t = 0; t < hist.size(); ++t) {
            const std::string twhere = where + ".history[" + std::to_string(t) + "]";
            Turn turn;
            turn.speaker = parse_speaker(require_field(hist[t], "speaker", twhere), twhere + ".speaker");
            turn.text = require_string(hist[t], "text", twhere);
            if (is_blank(turn.text)) fail(twhere + ".text", "turn text is empty");
            c.history.push_back(std::move(turn));
        }
        const json& resps = require_array(cj, "responses", where);
        for (std::size_t r = 0; r < resps.size(); ++r) {
            c.responses.push_back(
                parse_response(resps[r], where + ".responses[" + std::to_string(r) + "]"));
        }
        out.conversations.push_back(std::move(c));
    }
    validate(out);
    return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_dataset(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void validate(const Dataset& dataset) {
    std::set<std::string_view> conv_ids;
    std::set<std::string_view> resp_ids;
    for (const auto& c : dataset.conversations) {
        if (!conv_ids.insert(c.id).second) {
            throw ValidationError("duplicate conversation id \"" + c.id + "\"");
        }
        if (c.history.empty()) {
            throw ValidationError("conversation \"" + c.id + "\" has no history turns");
        }
        for (const auto& t : c.history) {
            if (is_blank(t.text)) {
                throw ValidationError("conversation \"" + c.id + "\" has an empty turn");
            }
        }
        if (c.responses.empty()) {
            throw ValidationError("conversation \"" + c.id + "\" has no responses");
        }
        for (const auto& r : c.responses) {
            if (!resp_ids.insert(r.id).second) {
                throw ValidationError("duplicate response id \"" + r.id + "\"");
            }
        }
    }
}

json to_json(const Dataset& dataset) {
    json convs = json::array();
    for (const auto& c : dataset.conversations) {
        json hist = json::array();
        for (const auto& t : c.history) {
            hist.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
        }
        json resps = json::array();
        for (const auto& r : c.responses) {
            json rj = {{"id", r.id}, {"tutor_id", r.tutor_id}, {"text", r.text}};
            if (!r.annotations.empty()) {
                json ann = json::object();
                for (const auto& [dim, label] : r.annotations) {
                    ann[std::string(dimension_key(dim))] = to_string(label);
                }
                rj["annotations"] = std::move(ann);
            }
            resps.push_back(std::move(rj));
        }
        convs.push_back({{"id", c.id}, {"history", std::move(hist)}, {"responses", std::move(resps)}});
    }
    return json{{"conversations", std::move(convs)}};
}

namespace {

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    write_json(to_json(dataset), path);
}

void save_split(const Split& split, std::string_view side, const std::filesystem::path& path) {
    json doc = to_json(split.data);
    doc["split"] = {{"side", side}, {"seed", split.seed}, {"ratio", split.ratio}};
    write_json(doc, path);
}

SplitResult grouped_split(const Dataset& dataset, double ratio, std::uint64_t seed) {
    const std::size_t n = dataset.conversations.size();
    if (n == 0) throw ValidationError("cannot split an empty dataset");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ValidationError("split ratio must lie in (0, 1), got " + std::to_string(ratio));
    }

    SplitResult result;
    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (n >= 2) {
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    } else {
        n_train = 1;
        result.warnings.push_back(
            "dataset has a single conversation; it goes to train and dev is empty");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

    result.train.seed = result.dev.seed = seed;
    result.train.ratio = result.dev.ratio = ratio;
    for (std::size_t i = 0; i < n; ++i) {
        auto& side = in_train[i] ? result.train : result.dev;
        side.data.conversations.push_back(dataset.conversations[i]);
    }
    return result;
}

std::map<Ternary, LabelShare> class_distribution(const Dataset& dataset, Dimension dim) {
    std::map<Ternary, LabelShare> out;
    std::vector<std::string> missing;
    std::size_t total = 0;
    for (const auto& c : dataset.conversations) {
        for (const auto& r : c.responses) {
            if (auto label = r.label(dim)) {
                ++out[*label].count;
                ++total;
            } else {
                missing.push_back(r.id);
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "responses missing a " + std::string(dimension_key(dim)) + " label:";
        for (const auto& id : missing) msg += " " + id;
        throw ValidationError(msg);
    }
    for (auto& [label, share] : out) {
        share.fraction = static_cast<double>(share.count) / static_cast<double>(total);
    }
    return out;
}

std::string build_input_text(const TutorResponse& response, const Conversation& conversation,
                             InputText mode) {
    const bool member = std::any_of(conversation.responses.begin(), conversation.responses.end(),
                                    [&](const TutorResponse& r) { return r.id == response.id; });
    if (!member) {
        throw ValidationError("response \"" + response.id + "\" does not belong to conversation \"" +
                              conversation.id + "\"");
    }
    if (mode == InputText::ResponseOnly) return response.text;

    std::string out;
    for (const auto& t : conversation.history) {
        out += to_string(t.speaker);
        out += ": ";
        out += t.text;
        out += '\n';
    }
    out += kHistorySeparator;
    out += '\n';
    out += response.text;
    return out;
}

}  // namespace tutoreval::corpus
