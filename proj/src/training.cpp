#include "semlink/training.hpp"

#include "semlink/experiment.hpp"
#include "semlink/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace semlink {

double validation_snr(std::vector<double> grid) {
    if (grid.empty()) throw std::invalid_argument("train: empty SNR grid");
    std::sort(grid.begin(), grid.end());
    return grid[(grid.size() - 1) / 2];
}

std::pair<CodecParams, TrainReport> train(const EmbeddingDataset& train_set, const EmbeddingDataset& val_transmit,
                                          const KnowledgeBase& val_kb, const TrainConfig& cfg) {
    if (train_set.empty() || val_transmit.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (train_set.dim != 512) throw std::invalid_argument("train: embeddings must be 512-dimensional");
    if (train_set.class_names.size() != val_transmit.class_names.size() ||
        val_transmit.class_names.size() != val_kb.num_classes())
        throw std::invalid_argument("train: training and validation sets have different class spaces");
    for (double snr : cfg.snr_grid_db)
        if (std::isnan(snr)) throw std::invalid_argument("train: NaN in SNR grid");

    TrainReport report;
    report.validation_snr_db = validation_snr(cfg.snr_grid_db);

    CodecParams params = init_params(cfg.k, derive_seed(cfg.seed, stream_id("train-init", {})));
    AdamState optimizer = make_adam_state(params);
    const AdamConfig adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
    const std::uint64_t channel_seed = derive_seed(cfg.seed, stream_id("train-channel", {}));
    const EvalConfig val_cfg{cfg.channel_kind, report.validation_snr_db, cfg.val_trials,
                             derive_seed(cfg.seed, stream_id("validation", {}))};

    const Matrix<float> all = to_matrix(train_set);
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);

    CodecParams best = params;
    double best_accuracy = -1.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = make_engine(cfg.seed, stream_id("train-shuffle", {epoch}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            if (end - begin < 2) break;  // batch norm needs two rows
            Matrix<float> batch(static_cast<Eigen::Index>(end - begin), all.cols());
            for (std::size_t i = begin; i < end; ++i)
                batch.row(static_cast<Eigen::Index>(i - begin)) = all.row(static_cast<Eigen::Index>(order[i]));

            auto snr_rng = make_engine(cfg.seed, stream_id("train-snr", {optimizer.step + 1}));
            std::uniform_int_distribution<std::size_t> pick(0, cfg.snr_grid_db.size() - 1);
            const double snr = cfg.snr_grid_db[pick(snr_rng)];

            loss_sum += train_step(params, optimizer, batch, cfg.channel_kind, snr, channel_seed, adam,
                                   cfg.bn_momentum);
            ++batches;
        }
        report.train_loss.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);

        const double accuracy = semantic_accuracy(params, val_transmit, val_kb, val_cfg);
        report.val_accuracy.push_back(accuracy);
        if (accuracy > best_accuracy) {
            best_accuracy = accuracy;
            best = params;
            report.selected_epoch = epoch;
        }
        report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
    }
    report.steps = optimizer.step;
    return {std::move(best), std::move(report)};
}

}  // namespace semlink
