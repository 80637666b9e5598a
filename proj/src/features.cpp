#include "tutoreval/features.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tutoreval/errors.hpp"

namespace tutoreval::features {

namespace {

constexpr char32_t kInvalid = 0xFFFD;

// Decodes one code point starting at text[pos]; advances pos. Malformed input yields kInvalid.
char32_t decode_utf8(std::string_view text, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(text[pos++]);
    if (b0 < 0x80) return b0;
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        return kInvalid;
    }
    for (int i = 0; i < extra; ++i) {
        if (pos >= text.size()) return kInvalid;
        const auto b = static_cast<unsigned char>(text[pos]);
        if ((b & 0xC0) != 0x80) return kInvalid;
        cp = (cp << 6) | (b & 0x3F);
        ++pos;
    }
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    }
    if (cp >= 0x00C0 && cp <= 0x024F) return cp != 0x00D7 && cp != 0x00F7;
    return (cp >= 0x0370 && cp <= 0x03FF) || (cp >= 0x0400 && cp <= 0x04FF);
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0x00C0 && cp <= 0x00DE && cp != 0x00D7) return cp + 0x20;
    return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t current_len = 0;
    auto flush = [&] {
        if (current_len >= 2) tokens.push_back(current);
        current.clear();
        current_len = 0;
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = decode_utf8(text, pos);
        if (is_word_char(cp)) {
            encode_utf8(to_lower(cp), current);
            ++current_len;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::vector<std::string> ngrams(std::span<const std::string> tokens, int lo, int hi) {
    std::vector<std::string> out;
    for (int n = lo; n <= hi; ++n) {
        const auto order = static_cast<std::size_t>(n);
        if (order > tokens.size()) break;
        for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
            std::string gram = tokens[i];
            for (std::size_t k = 1; k < order; ++k) {
                gram += ' ';
                gram += tokens[i + k];
            }
            out.push_back(std::move(gram));
        }
    }
    return out;
}

double SparseVector::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

std::string_view to_string(Weighting w) { return w == Weighting::Bow ? "bow" : "tfidf"; }

Weighting parse_weighting(std::string_view s) {
    if (s == "bow") return Weighting::Bow;
    if (s == "tfidf") return Weighting::Tfidf;
    throw ValidationError("unknown weighting \"" + std::string(s) + "\" (expected bow or tfidf)");
}

namespace {

void check_range(NgramRange range) {
    if (range.lo < 1 || range.lo > range.hi || range.hi > kMaxNgramOrder) {
        throw ValidationError("invalid n-gram range (" + std::to_string(range.lo) + ", " +
                              std::to_string(range.hi) + "); need 1 <= lo <= hi <= " +
                              std::to_string(kMaxNgramOrder));
    }
}

}  // namespace

VectorizerModel::VectorizerModel(std::map<std::string, std::size_t> vocabulary,
                                 std::vector<double> idf, NgramRange range, Weighting weighting)
    : vocabulary_(std::move(vocabulary)), idf_(std::move(idf)), range_(range), weighting_(weighting) {
    check_range(range_);
    std::vector<bool> seen(vocabulary_.size(), false);
    for (const auto& [gram, col] : vocabulary_) {
        if (col >= seen.size() || seen[col]) {
            throw ValidationError("vocabulary columns are not a bijection onto 0..|vocab|-1");
        }
        seen[col] = true;
    }
    if (weighting_ == Weighting::Tfidf) {
        if (idf_.size() != vocabulary_.size()) {
            throw ValidationError("idf length does not match vocabulary size");
        }
        for (double v : idf_) {
            if (!(v >= 0.0)) throw ValidationError("idf values must be non-negative");
        }
    } else {
        idf_.clear();
    }
}

SparseVector VectorizerModel::transform(std::string_view text) const {
    const auto tokens = tokenize(text);
    std::map<std::size_t, double> counts;
    for (const auto& gram : ngrams(tokens, range_.lo, range_.hi)) {
        if (auto it = vocabulary_.find(gram); it != vocabulary_.end()) counts[it->second] += 1.0;
    }
    SparseVector out;
    out.dim = vocabulary_.size();
    out.indices.reserve(counts.size());
    out.values.reserve(counts.size());
    for (const auto& [col, count] : counts) {
        const double v = weighting_ == Weighting::Tfidf ? count * idf_[col] : count;
        if (v > 0.0) {
            out.indices.push_back(col);
            out.values.push_back(v);
        }
    }
    if (weighting_ == Weighting::Tfidf) {
        const double n = out.norm();
        if (n > 0.0) {
            for (double& v : out.values) v /= n;
        }
    }
    return out;
}

nlohmann::json VectorizerModel::to_json() const {
    // Vocabulary as an array ordered by column keeps the file compact and stable.
    std::vector<std::string> by_column(vocabulary_.size());
    for (const auto& [gram, col] : vocabulary_) by_column[col] = gram;
    nlohmann::json j = {{"format_version", kVectorizerFormatVersion},
                        {"weighting", to_string(weighting_)},
                        {"ngram_range", {range_.lo, range_.hi}},
                        {"vocabulary", by_column}};
    if (weighting_ == Weighting::Tfidf) j["idf"] = idf_;
    return j;
}

VectorizerModel VectorizerModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kVectorizerFormatVersion) {
            throw ValidationError("unsupported vectorizer format_version");
        }
        const auto weighting = parse_weighting(j.at("weighting").get<std::string>());
        const auto range_arr = j.at("ngram_range").get<std::vector<int>>();
        if (range_arr.size() != 2) throw ValidationError("ngram_range must have two entries");
        const auto by_column = j.at("vocabulary").get<std::vector<std::string>>();
        std::map<std::string, std::size_t> vocab;
        for (std::size_t i = 0; i < by_column.size(); ++i) {
            if (!vocab.emplace(by_column[i], i).second) {
                throw ValidationError("duplicate vocabulary entry \"" + by_column[i] + "\"");
            }
        }
        std::vector<double> idf;
        if (weighting == Weighting::Tfidf) idf = j.at("idf").get<std::vector<double>>();
        return VectorizerModel(std::move(vocab), std::move(idf), {range_arr[0], range_arr[1]},
                               weighting);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed vectorizer: ") + e.what());
    }
}

VectorizerModel fit_vectorizer(std::span<const std::string> corpus, NgramRange range,
                               Weighting weighting) {
    if (corpus.empty()) throw ValidationError("cannot fit a vectorizer on an empty corpus");
    check_range(range);

    std::map<std::string, std::size_t> doc_freq;
    for (const auto& doc : corpus) {
        const auto tokens = tokenize(doc);
        const auto grams = ngrams(tokens, range.lo, range.hi);
        const std::set<std::string> unique(grams.begin(), grams.end());
        for (const auto& g : unique) ++doc_freq[g];
    }

    std::map<std::string, std::size_t> vocab;
    std::vector<double> idf;
    idf.reserve(doc_freq.size());
    const auto n_docs = static_cast<double>(corpus.size());
    std::size_t col = 0;
    for (const auto& [gram, df] : doc_freq) {
        vocab.emplace(gram, col++);
        idf.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df))) + 1.0);
    }
    return VectorizerModel(std::move(vocab), std::move(idf), range, weighting);
}

void save_vectorizer(const VectorizerModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << model.to_json().dump() << '\n';
}

VectorizerModel load_vectorizer(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return VectorizerModel::from_json(j);
}

}  // namespace tutoreval::features
