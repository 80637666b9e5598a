#pragma once

// Exact split search over the rows of one tree node, shared by the forest and
// the boosting backends. Sparse rows only store non-zeros; the implicit zeros
// of a node are folded into a single block at value 0.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tutoreval/classifiers.hpp"

namespace tutoreval::classifiers::detail {

inline constexpr std::uint32_t kZeroBlock = std::numeric_limits<std::uint32_t>::max();

using Entry = std::pair<double, std::uint32_t>;  // (value, row id)

/// Features with at least one stored entry among `node_rows`, ascending.
inline std::vector<std::size_t> active_features(std::span<const FeatureVector> rows,
                                                std::span<const std::uint32_t> node_rows,
                                                std::size_t dim, std::vector<char>& mark) {
    std::vector<std::size_t> out;
    const bool any_dense = std::any_of(node_rows.begin(), node_rows.end(),
                                       [&](std::uint32_t r) { return rows[r].is_dense(); });
    if (any_dense) {
        out.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) out[j] = j;
        return out;
    }
    mark.assign(dim, 0);
    for (auto r : node_rows) {
        const auto& x = rows[r];
        for (std::size_t k = 0; k < x.stored(); ++k) {
            const auto j = x.index(k);
            if (!mark[j]) {
                mark[j] = 1;
                out.push_back(j);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Collects the stored values of a batch of features for the rows of a node.
class ColumnGather {
public:
    explicit ColumnGather(std::size_t dim) : slot_(dim, -1) {}

    void gather(std::span<const FeatureVector> rows, std::span<const std::uint32_t> node_rows,
                std::span<const std::size_t> features) {
        buckets_.resize(features.size());
        for (std::size_t s = 0; s < features.size(); ++s) {
            buckets_[s].clear();
            slot_[features[s]] = static_cast<int>(s);
        }
        for (auto r : node_rows) {
            const auto& x = rows[r];
            if (x.is_dense()) {
                for (std::size_t s = 0; s < features.size(); ++s) {
                    buckets_[s].emplace_back(x.value(features[s]), r);
                }
            } else {
                for (std::size_t k = 0; k < x.stored(); ++k) {
                    const int s = slot_[x.index(k)];
                    if (s >= 0) buckets_[static_cast<std::size_t>(s)].emplace_back(x.value(k), r);
                }
            }
        }
        for (auto f : features) slot_[f] = -1;
    }

    std::vector<Entry>& bucket(std::size_t slot) { return buckets_[slot]; }

private:
    std::vector<int> slot_;
    std::vector<std::vector<Entry>> buckets_;
};

struct SplitChoice {
    double gain = 0.0;
    double threshold = 0.0;
};

/// Best threshold for one feature. `add(stats, row)` accumulates a row;
/// `gain(left, total)` scores a candidate and returns nullopt when it is
/// inadmissible. `n_node` counts the node's distinct rows so implicit zeros can
/// be detected.
template <class Stats, class Add, class Gain>
std::optional<SplitChoice> best_threshold(std::vector<Entry>& entries, std::size_t n_node,
                                          const Stats& empty, const Stats& total, Add add,
                                          Gain gain) {
    Stats zero_block = total;
    if (entries.size() < n_node) {
        Stats stored = empty;
        for (const auto& e : entries) add(stored, e.second);
        zero_block -= stored;
        entries.emplace_back(0.0, kZeroBlock);
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.first < b.first; });

    std::optional<SplitChoice> best;
    Stats left = empty;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double v = entries[i].first;
        if (i > 0 && v > entries[i - 1].first) {
            if (auto g = gain(left, total); g && (!best || *g > best->gain)) {
                const double prev = entries[i - 1].first;
                double mid = prev + (v - prev) / 2.0;
                if (!(mid < v)) mid = prev;
                best = SplitChoice{*g, mid};
            }
        }
        if (entries[i].second == kZeroBlock) {
            left += zero_block;
        } else {
            add(left, entries[i].second);
        }
    }
    return best;
}

}  // namespace tutoreval::classifiers::detail
