#include "tutoreval/external_scores.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "tutoreval/errors.hpp"

namespace tutoreval::scores {

using nlohmann::json;

std::string_view to_string(Payload p) {
    switch (p) {
        case Payload::Embedding: return "embedding";
        case Payload::Probs: return "probs";
        case Payload::Logit: return "logit";
    }
    return "?";
}

Payload parse_payload(std::string_view s) {
    if (s == "embedding") return Payload::Embedding;
    if (s == "probs") return Payload::Probs;
    if (s == "logit") return Payload::Logit;
    throw ValidationError("unknown payload \"" + std::string(s) + "\"");
}

namespace {

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

[[noreturn]] void fail_line(std::string_view origin, std::size_t line, const std::string& what) {
    throw ValidationError(std::string(origin) + ":" + std::to_string(line) + ": " + what);
}

double finite_number(const json& v, std::string_view origin, std::size_t line, const char* field) {
    if (!v.is_number()) fail_line(origin, line, std::string(field) + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail_line(origin, line, std::string(field) + " must be finite");
    return x;
}

ScoreRecord parse_record(const json& j, std::string_view origin, std::size_t line) {
    if (!j.is_object()) fail_line(origin, line, "expected a JSON object");
    ScoreRecord r;
    auto id = j.find("response_id");
    if (id == j.end() || !id->is_string()) fail_line(origin, line, "missing string field response_id");
    r.response_id = id->get<std::string>();
    if (auto s = j.find("source"); s != j.end()) {
        if (!s->is_string()) fail_line(origin, line, "source must be a string");
        r.source = s->get<std::string>();
    }
    if (auto e = j.find("embedding"); e != j.end() && !e->is_null()) {
        if (!e->is_array()) fail_line(origin, line, "embedding must be an array");
        std::vector<double> v;
        v.reserve(e->size());
        for (const auto& x : *e) v.push_back(finite_number(x, origin, line, "embedding entry"));
        r.embedding = std::move(v);
    }
    if (auto p = j.find("probs"); p != j.end() && !p->is_null()) {
        if (!p->is_object()) fail_line(origin, line, "probs must be an object");
        thresholds::ClassProbabilities cp;
        for (auto [key, slot] : {std::pair{"yes", &cp.yes}, {"no", &cp.no}, {"tse", &cp.tse}}) {
            auto it = p->find(key);
            if (it == p->end()) fail_line(origin, line, std::string("probs missing \"") + key + "\"");
            *slot = finite_number(*it, origin, line, key);
        }
        if (!cp.on_simplex(kSimplexTolerance)) {
            fail_line(origin, line,
                      "probs do not lie on the simplex (sum = " + std::to_string(cp.yes + cp.no + cp.tse) + ")");
        }
        r.probs = cp;
    }
    if (auto l = j.find("logit"); l != j.end() && !l->is_null()) {
        r.logit = finite_number(*l, origin, line, "logit");
    }
    if (!r.embedding && !r.probs && !r.logit) {
        fail_line(origin, line, "record for " + r.response_id + " carries no embedding, probs or logit");
    }
    return r;
}

}  // namespace

std::vector<ScoreRecord> parse_scores(std::istream& in, std::string_view origin) {
    std::vector<ScoreRecord> out;
    std::unordered_map<std::string, std::size_t> first_line;
    std::optional<std::size_t> dim;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (blank(text)) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            fail_line(origin, line, std::string("malformed JSON: ") + e.what());
        }
        ScoreRecord r = parse_record(j, origin, line);
        if (auto [it, fresh] = first_line.emplace(r.response_id, line); !fresh) {
            fail_line(origin, line,
                      "duplicate response_id \"" + r.response_id + "\" (first seen on line " +
                          std::to_string(it->second) + ")");
        }
        if (r.embedding) {
            if (!dim) dim = r.embedding->size();
            if (r.embedding->size() != *dim) {
                fail_line(origin, line,
                          "embedding has " + std::to_string(r.embedding->size()) + " dims, expected " +
                              std::to_string(*dim));
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open score file " + path.string());
    return parse_scores(in, path.string());
}

std::string format_score_line(const ScoreRecord& r) {
    json j = {{"response_id", r.response_id}, {"source", r.source}};
    if (r.embedding) j["embedding"] = *r.embedding;
    if (r.probs) j["probs"] = {{"yes", r.probs->yes}, {"no", r.probs->no}, {"tse", r.probs->tse}};
    if (r.logit) j["logit"] = *r.logit;
    return j.dump();
}

void write_scores(std::span<const ScoreRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) out << format_score_line(r) << '\n';
}

std::vector<AlignedRow> join_scores(const corpus::Dataset& dataset,
                                    std::span<const ScoreRecord> records,
                                    const std::set<Payload>& require) {
    std::unordered_map<std::string_view, const ScoreRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.response_id, &r);

    std::vector<AlignedRow> rows;
    std::vector<std::string> unmatched;
    std::map<Payload, std::vector<std::string>> lacking;
    for (const auto& c : dataset.conversations) {
        for (const auto& resp : c.responses) {
            auto it = by_id.find(resp.id);
            if (it == by_id.end()) {
                unmatched.push_back(resp.id);
                continue;
            }
            const ScoreRecord* rec = it->second;
            for (Payload p : require) {
                const bool has = (p == Payload::Embedding && rec->embedding) ||
                                 (p == Payload::Probs && rec->probs) ||
                                 (p == Payload::Logit && rec->logit);
                if (!has) lacking[p].push_back(resp.id);
            }
            rows.push_back(AlignedRow{&c, &resp, rec});
        }
    }
    if (!unmatched.empty() || !lacking.empty()) {
        std::string msg = "cannot join scores:";
        if (!unmatched.empty()) {
            msg += "\n  " + std::to_string(unmatched.size()) + " response(s) without a score record:";
            for (const auto& id : unmatched) msg += " " + id;
        }
        for (const auto& [p, ids] : lacking) {
            msg += "\n  " + std::to_string(ids.size()) + " record(s) missing required payload \"" +
                   std::string(to_string(p)) + "\":";
            for (const auto& id : ids) msg += " " + id;
        }
        throw ValidationError(msg);
    }
    return rows;
}

std::vector<Prediction> parse_predictions(std::istream& in, std::string_view origin) {
    std::vector<Prediction> out;
    std::unordered_map<std::string, std::size_t> seen;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (blank(text)) continue;
        try {
            const json j = json::parse(text);
            Prediction p{j.at("response_id").get<std::string>(), j.at("track").get<int>(),
                         j.at("prediction").get<std::string>()};
            if (p.track < 1 || p.track > 5) fail_line(origin, line, "track must lie in 1..5");
            if (!seen.emplace(p.response_id, line).second) {
                fail_line(origin, line, "duplicate response_id \"" + p.response_id + "\"");
            }
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            fail_line(origin, line, std::string("malformed prediction: ") + e.what());
        }
    }
    return out;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open predictions file " + path.string());
    return parse_predictions(in, path.string());
}

void write_predictions(std::span<const Prediction> predictions, std::ostream& out) {
    for (const auto& p : predictions) {
        out << json{{"response_id", p.response_id}, {"track", p.track}, {"prediction", p.prediction}}.dump()
            << '\n';
    }
}

void write_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_predictions(predictions, out);
}

}  // namespace tutoreval::scores
