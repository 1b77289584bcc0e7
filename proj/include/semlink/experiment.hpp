#pragma once

#include "semlink/channel.hpp"
#include "semlink/codec.hpp"
#include "semlink/embedding_io.hpp"
#include "semlink/knowledge_base.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace semlink {

struct EvalConfig {
    ChannelKind channel = ChannelKind::awgn;
    double snr_db = 0.0;
    std::size_t trials_per_item = 10;  ///< independent channel draws per transmitted embedding
    std::uint64_t seed = 0;
};

struct EvalResult {
    double accuracy = 0.0;
    std::size_t successes = 0;
    std::size_t n_items = 0;
    std::size_t trials = 0;
    std::size_t clamped_gains = 0;
};

/// y -> encode -> normalize -> channel -> equalize -> decode -> retrieve,
/// counting retrievals whose label matches. Eval-mode batch norm. Each
/// (image_id, trial) pair has its own channel stream, so the result does not
/// depend on batching or thread count.
EvalResult evaluate_codec(const CodecParams& model, const EmbeddingDataset& transmit,
                          const KnowledgeBase& kb, const EvalConfig& cfg);

/// Uncompressed transmission: the embedding itself is the channel input
/// (dim / 2 symbols). The receiver undoes the per-vector power scaling.
EvalResult evaluate_baseline(const EmbeddingDataset& transmit, const KnowledgeBase& kb,
                             const EvalConfig& cfg);

double semantic_accuracy(const CodecParams& model, const EmbeddingDataset& transmit,
                         const KnowledgeBase& kb, const EvalConfig& cfg);
double baseline_uncompressed(const EmbeddingDataset& transmit, const KnowledgeBase& kb,
                             const EvalConfig& cfg);

struct SweepModel {
    std::string model_id;
    CodecParams params;
};

struct SweepConfig {
    std::vector<double> snr_list;
    std::vector<ChannelKind> channels{ChannelKind::awgn, ChannelKind::rayleigh};
    std::size_t trials_per_item = 10;
    std::uint64_t seed = 0;
    bool include_baseline = true;
    std::size_t threads = 1;
};

inline constexpr const char* kBaselineModelId = "baseline";

struct SweepRow {
    ChannelKind channel = ChannelKind::awgn;
    Rational cbr;
    std::size_t k = 0;
    double snr_db = 0.0;
    double accuracy = 0.0;
    std::size_t n_items = 0;
    std::size_t trials = 0;
    std::string model_id;
    std::uint64_t seed = 0;  ///< EvalConfig seed of this cell
};

struct SweepResult {
    std::vector<SweepRow> rows;  ///< sorted by (channel, cbr, snr, model_id)
};

/// Seed of the cell at `snr_db`. Shared by every model and channel kind at
/// that SNR, so cells are paired comparisons.
std::uint64_t sweep_cell_seed(std::uint64_t root_seed, double snr_db);

/// Full cross product of models (plus the baseline) × channels × SNRs.
/// Cells run on `threads` workers; output is identical for any thread count.
SweepResult run_sweep(const std::vector<SweepModel>& models, const EmbeddingDataset& transmit,
                      const KnowledgeBase& kb, const SweepConfig& cfg);

/// Header: channel,cbr_num,cbr_den,k,snr_db,accuracy,n_items,trials,model_id,seed
void write_sweep_csv(const SweepResult& result, std::ostream& out);

struct StageLatency {
    double median_ms = 0.0;
    double p95_ms = 0.0;
};

struct LatencyReport {
    std::size_t n_queries = 0;
    std::size_t kb_size = 0;
    std::size_t k = 0;
    StageLatency net;    ///< encode + decode of one embedding
    StageLatency kb;     ///< one exact nearest-neighbor retrieval
    StageLatency total;  ///< per-query net + kb
    double total_wall_ms = 0.0;  ///< sum over all timed queries
    bool clip_stage_present = false;  ///< embeddings are ingested, never computed here
};

/// Per-query timing of the codec and retrieval stages, single-threaded.
/// Queries are KB entries picked by `seed`, sent through AWGN at 10 dB.
LatencyReport bench_latency(const CodecParams& model, const KnowledgeBase& kb, std::size_t n_queries,
                            std::uint64_t seed);

/// Nearest-rank percentile of an unsorted sample, q in [0, 1].
double percentile(std::vector<double> samples, double q);

}  // namespace semlink
