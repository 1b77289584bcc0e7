#pragma once

#include "semlink/channel.hpp"
#include "semlink/codec.hpp"
#include "semlink/embedding_io.hpp"
#include "semlink/knowledge_base.hpp"

#include <cstdint>
#include <vector>

namespace semlink {

struct TrainConfig {
    std::size_t k = 128;
    std::vector<double> snr_grid_db{-7.0, -4.0, 0.0, 4.0, 7.0};
    ChannelKind channel_kind = ChannelKind::awgn;
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double bn_momentum = 0.1;
    std::uint64_t seed = 0;
    std::size_t val_trials = 1;  ///< channel draws per validation item
};

struct TrainReport {
    std::vector<double> train_loss;      ///< mean mini-batch loss per epoch
    std::vector<double> val_accuracy;    ///< per epoch
    std::vector<double> epoch_seconds;   ///< wall clock per epoch
    std::size_t selected_epoch = 0;      ///< 1-based; first epoch with the best val accuracy
    double validation_snr_db = 0.0;
    std::size_t steps = 0;
};

/// SNR used for model selection: the middle entry of the sorted grid.
double validation_snr(std::vector<double> grid);

/// Shuffled mini-batches with a per-batch SNR drawn uniformly from the grid;
/// after each epoch, semantic accuracy on the validation pair at the middle
/// grid SNR. Returns the parameters of the best epoch.
std::pair<CodecParams, TrainReport> train(const EmbeddingDataset& train_set,
                                          const EmbeddingDataset& val_transmit,
                                          const KnowledgeBase& val_kb, const TrainConfig& cfg);

}  // namespace semlink
