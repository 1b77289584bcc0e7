#pragma once

#include "semlink/embedding_io.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace semlink {

struct Match {
    std::uint32_t image_id = 0;
    std::uint32_t label = 0;
    float distance = 0.0f;  ///< true L2 distance (not squared)

    friend bool operator==(const Match&, const Match&) = default;
};

/// Receiver-side store of labeled embeddings with exact L2 nearest-neighbor
/// search. Immutable after construction.
///
/// Every distance is accumulated sequentially over the vector index in single
/// precision, so the blocked search and the plain scan agree bit for bit.
/// Results are ordered by (squared distance, image_id).
class KnowledgeBase {
public:
    /// Entries are stored in ascending image_id order. Throws on an empty dataset.
    static KnowledgeBase build(const EmbeddingDataset& dataset);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return image_ids_.size(); }
    std::size_t num_classes() const noexcept { return num_classes_; }

    std::span<const float> entry(std::size_t i) const noexcept {
        return {entries_.data() + i * dim_, dim_};
    }
    std::span<const float> entries() const noexcept { return entries_; }
    std::span<const std::uint32_t> labels() const noexcept { return labels_; }
    std::span<const std::uint32_t> image_ids() const noexcept { return image_ids_; }

    /// The k closest entries, ascending. Requires query.size() == dim() and 1 <= k <= size().
    std::vector<Match> search(std::span<const float> query, std::size_t k) const;

    /// Nearest entry; same as search(query, 1).front().
    Match retrieve(std::span<const float> query) const;

    /// Row-major batch of queries (n × dim), each answered independently.
    std::vector<std::vector<Match>> search_batch(std::span<const float> queries, std::size_t k) const;
    std::vector<Match> retrieve_batch(std::span<const float> queries) const;

private:
    static constexpr std::size_t kLanes = 8;

    void check_query(std::span<const float> query, std::size_t k) const;
    void squared_distances(std::span<const float> query, std::span<float> out) const;
    Match make_match(std::size_t index, float squared) const;

    std::size_t dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<float> entries_;  // M × dim, row-major
    // Blocks of kLanes entries, each stored dimension-major so the kLanes
    // accumulators vectorize while every entry still sums in index order.
    std::vector<float> blocked_;
    std::vector<std::uint32_t> labels_;
    std::vector<std::uint32_t> image_ids_;
};

/// Oracle: the plainest full scan, one entry at a time, full sort.
std::vector<Match> brute_force_search(const KnowledgeBase& kb, std::span<const float> query,
                                      std::size_t k);

}  // namespace semlink
