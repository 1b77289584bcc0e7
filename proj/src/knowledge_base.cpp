#include "semlink/knowledge_base.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace semlink {

KnowledgeBase KnowledgeBase::build(const EmbeddingDataset& dataset) {
    if (dataset.empty()) throw std::invalid_argument("build_kb: dataset is empty");
    validate(dataset);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dataset.records[a].image_id < dataset.records[b].image_id;
    });

    KnowledgeBase kb;
    kb.dim_ = dataset.dim;
    kb.num_classes_ = dataset.class_names.size();
    const std::size_t m = dataset.size();
    kb.entries_.resize(m * kb.dim_);
    kb.labels_.reserve(m);
    kb.image_ids_.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& r = dataset.records[order[i]];
        std::copy(r.vector.begin(), r.vector.end(), kb.entries_.begin() + i * kb.dim_);
        kb.labels_.push_back(r.label);
        kb.image_ids_.push_back(r.image_id);
    }

    const std::size_t blocks = (m + kLanes - 1) / kLanes;
    kb.blocked_.assign(blocks * kb.dim_ * kLanes, 0.0f);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t b = i / kLanes, lane = i % kLanes;
        for (std::size_t d = 0; d < kb.dim_; ++d)
            kb.blocked_[(b * kb.dim_ + d) * kLanes + lane] = kb.entries_[i * kb.dim_ + d];
    }
    return kb;
}

void KnowledgeBase::check_query(std::span<const float> query, std::size_t k) const {
    if (query.size() != dim_)
        throw std::invalid_argument("search: query has dimension " + std::to_string(query.size()) +
                                    ", knowledge base has " + std::to_string(dim_));
    if (k < 1 || k > size())
        throw std::invalid_argument("search: k = " + std::to_string(k) + " outside [1, " +
                                    std::to_string(size()) + "]");
}

void KnowledgeBase::squared_distances(std::span<const float> query, std::span<float> out) const {
    const std::size_t m = size();
    const std::size_t blocks = (m + kLanes - 1) / kLanes;
    const float* q = query.data();
    for (std::size_t b = 0; b < blocks; ++b) {
        std::array<float, kLanes> acc{};
        const float* block = blocked_.data() + b * dim_ * kLanes;
        for (std::size_t d = 0; d < dim_; ++d) {
            const float qd = q[d];
            const float* lane = block + d * kLanes;
            for (std::size_t j = 0; j < kLanes; ++j) {
                const float diff = qd - lane[j];
                acc[j] += diff * diff;
            }
        }
        const std::size_t base = b * kLanes;
        const std::size_t n = std::min(kLanes, m - base);
        std::copy_n(acc.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(base));
    }
}

Match KnowledgeBase::make_match(std::size_t index, float squared) const {
    return Match{image_ids_[index], labels_[index], std::sqrt(squared)};
}

std::vector<Match> KnowledgeBase::search(std::span<const float> query, std::size_t k) const {
    check_query(query, k);
    std::vector<float> dist(size());
    squared_distances(query, dist);

    // Entries are in ascending image_id order, so index order breaks ties.
    auto closer = [&](std::size_t a, std::size_t b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    std::vector<Match> out;
    out.reserve(k);
    if (k == 1) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < dist.size(); ++i)
            if (closer(i, best)) best = i;
        out.push_back(make_match(best, dist[best]));
        return out;
    }
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
    for (std::size_t i = 0; i < k; ++i) out.push_back(make_match(idx[i], dist[idx[i]]));
    return out;
}

Match KnowledgeBase::retrieve(std::span<const float> query) const { return search(query, 1).front(); }

std::vector<std::vector<Match>> KnowledgeBase::search_batch(std::span<const float> queries,
                                                            std::size_t k) const {
    if (dim_ == 0 || queries.size() % dim_ != 0)
        throw std::invalid_argument("search_batch: query buffer is not a multiple of dim");
    const std::size_t n = queries.size() / dim_;
    std::vector<std::vector<Match>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(search(queries.subspan(i * dim_, dim_), k));
    return out;
}

std::vector<Match> KnowledgeBase::retrieve_batch(std::span<const float> queries) const {
    if (dim_ == 0 || queries.size() % dim_ != 0)
        throw std::invalid_argument("retrieve_batch: query buffer is not a multiple of dim");
    const std::size_t n = queries.size() / dim_;
    std::vector<Match> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(retrieve(queries.subspan(i * dim_, dim_)));
    return out;
}

std::vector<Match> brute_force_search(const KnowledgeBase& kb, std::span<const float> query,
                                      std::size_t k) {
    if (query.size() != kb.dim())
        throw std::invalid_argument("brute_force_search: dimension mismatch");
    if (k < 1 || k > kb.size()) throw std::invalid_argument("brute_force_search: k out of range");

    struct Scored {
        float squared;
        std::uint32_t image_id;
        std::uint32_t label;
    };
    std::vector<Scored> all;
    all.reserve(kb.size());
    for (std::size_t i = 0; i < kb.size(); ++i) {
        const auto e = kb.entry(i);
        float s = 0.0f;
        for (std::size_t d = 0; d < kb.dim(); ++d) {
            const float diff = query[d] - e[d];
            s += diff * diff;
        }
        all.push_back({s, kb.image_ids()[i], kb.labels()[i]});
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        return a.squared < b.squared || (a.squared == b.squared && a.image_id < b.image_id);
    });
    std::vector<Match> out;
    for (std::size_t i = 0; i < k; ++i)
        out.push_back({all[i].image_id, all[i].label, std::sqrt(all[i].squared)});
    return out;
}

}  // namespace semlink
