#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tutoreval::features {

/// Lowercased maximal runs of at least two word characters.
///
/// Word characters are ASCII letters and digits plus Latin-1/Latin Extended
/// letters, Greek and Cyrillic (decoded from UTF-8). Length is counted in code
/// points. ASCII and Latin-1 capitals are lowercased; everything else is kept.
std::vector<std::string> tokenize(std::string_view text);

/// Word n-grams of orders lo..hi, joined by single spaces, in text order
/// (all order-lo grams first, then lo+1, ...).
std::vector<std::string> ngrams(std::span<const std::string> tokens, int lo, int hi);

/// Sparse row with strictly increasing indices and positive values.
struct SparseVector {
    std::vector<std::size_t> indices;
    std::vector<double> values;
    std::size_t dim = 0;

    double norm() const;
    bool empty() const { return indices.empty(); }
};

enum class Weighting { Bow, Tfidf };

std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view s);

struct NgramRange {
    int lo = 1;
    int hi = 1;
};

inline constexpr int kMaxNgramOrder = 8;

/// Fitted vocabulary. Columns are assigned in lexicographic byte order of the n-gram strings.
class VectorizerModel {
public:
    VectorizerModel(std::map<std::string, std::size_t> vocabulary, std::vector<double> idf,
                    NgramRange range, Weighting weighting);

    const std::map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
    const std::vector<double>& idf() const { return idf_; }
    NgramRange range() const { return range_; }
    Weighting weighting() const { return weighting_; }
    std::size_t size() const { return vocabulary_.size(); }

    /// Bow: raw n-gram counts. Tfidf: count * idf, then L2-normalized.
    /// Out-of-vocabulary n-grams are dropped.
    SparseVector transform(std::string_view text) const;

    nlohmann::json to_json() const;
    static VectorizerModel from_json(const nlohmann::json& j);

private:
    std::map<std::string, std::size_t> vocabulary_;
    std::vector<double> idf_;
    NgramRange range_;
    Weighting weighting_;
};

inline constexpr int kVectorizerFormatVersion = 1;

/// idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1 in Tfidf mode; no frequency cut-off.
VectorizerModel fit_vectorizer(std::span<const std::string> corpus, NgramRange range,
                               Weighting weighting);

void save_vectorizer(const VectorizerModel& model, const std::filesystem::path& path);
VectorizerModel load_vectorizer(const std::filesystem::path& path);

}  // namespace tutoreval::features
