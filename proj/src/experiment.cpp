#include "semlink/experiment.hpp"

#include "semlink/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace semlink {

namespace {

// Fixed so that Eigen's blocking, and hence every rounding, is independent
// of how work is split across threads.
constexpr std::size_t kEvalChunk = 256;

void check_compatible(const EmbeddingDataset& transmit, const KnowledgeBase& kb, const EvalConfig& cfg) {
    if (transmit.empty()) throw std::invalid_argument("evaluate: transmit set is empty");
    if (transmit.dim != kb.dim())
        throw std::invalid_argument("evaluate: transmit dim " + std::to_string(transmit.dim) +
                                    " differs from knowledge base dim " + std::to_string(kb.dim()));
    if (transmit.class_names.size() != kb.num_classes())
        throw std::invalid_argument("evaluate: transmit and knowledge base have different class spaces");
    if (cfg.trials_per_item < 1) throw std::invalid_argument("evaluate: trials_per_item must be >= 1");
    if (std::isnan(cfg.snr_db)) throw std::invalid_argument("evaluate: SNR is NaN");
}

Matrix<float> chunk_rows(const EmbeddingDataset& ds, std::size_t begin, std::size_t end) {
    Matrix<float> m(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(ds.dim));
    for (std::size_t i = begin; i < end; ++i)
        std::copy(ds.records[i].vector.begin(), ds.records[i].vector.end(),
                  m.row(static_cast<Eigen::Index>(i - begin)).data());
    return m;
}

// One channel use for each row of `sent`. Returns the equalized real rows
// and the per-row power scale applied at the transmitter.
struct ChannelPass {
    Matrix<float> received;
    std::vector<double> scales;
    std::size_t clamped = 0;
};

ChannelPass pass_channel(const Matrix<float>& sent, const EmbeddingDataset& ds, std::size_t begin,
                         std::size_t trial, const ChannelConfig& channel) {
    ChannelPass out{Matrix<float>(sent.rows(), sent.cols()), {}, 0};
    out.scales.reserve(static_cast<std::size_t>(sent.rows()));
    for (Eigen::Index r = 0; r < sent.rows(); ++r) {
        const std::span<const float> row(sent.row(r).data(), static_cast<std::size_t>(sent.cols()));
        const auto normalized = normalize_power(to_complex(row));
        const std::uint64_t item = ds.records[begin + static_cast<std::size_t>(r)].image_id;
        const auto tx = transmit(normalized.signal, channel, stream_id("eval-item", {item, trial}));
        const auto eq = equalize(tx.received, tx.realization);
        out.clamped += eq.clamped_gains;
        const auto real = to_real(eq.signal);
        for (Eigen::Index c = 0; c < sent.cols(); ++c)
            out.received(r, c) = static_cast<float>(real[static_cast<std::size_t>(c)]);
        out.scales.push_back(normalized.scale);
    }
    return out;
}

template <typename Encode, typename Decode>
EvalResult evaluate_impl(const EmbeddingDataset& transmit, const KnowledgeBase& kb, const EvalConfig& cfg,
                         Encode encode_chunk, Decode decode_chunk) {
    const ChannelConfig channel{cfg.channel, cfg.snr_db, cfg.seed};
    EvalResult result;
    result.n_items = transmit.size();
    result.trials = cfg.trials_per_item;
    for (std::size_t begin = 0; begin < transmit.size(); begin += kEvalChunk) {
        const std::size_t end = std::min(transmit.size(), begin + kEvalChunk);
        const Matrix<float> sent = encode_chunk(chunk_rows(transmit, begin, end));
        for (std::size_t trial = 0; trial < cfg.trials_per_item; ++trial) {
            auto pass = pass_channel(sent, transmit, begin, trial, channel);
            result.clamped_gains += pass.clamped;
            const Matrix<float> y_hat = decode_chunk(std::move(pass));
            for (Eigen::Index r = 0; r < y_hat.rows(); ++r) {
                const auto match =
                    kb.retrieve(std::span<const float>(y_hat.row(r).data(), static_cast<std::size_t>(y_hat.cols())));
                if (match.label == transmit.records[begin + static_cast<std::size_t>(r)].label) ++result.successes;
            }
        }
    }
    result.accuracy = static_cast<double>(result.successes) /
                      static_cast<double>(result.n_items * result.trials);
    return result;
}

}  // namespace

EvalResult evaluate_codec(const CodecParams& model, const EmbeddingDataset& transmit, const KnowledgeBase& kb,
                          const EvalConfig& cfg) {
    check_compatible(transmit, kb, cfg);
    if (static_cast<std::size_t>(model.enc_w1.rows()) != transmit.dim)
        throw std::invalid_argument("evaluate: model input dim differs from transmit dim");
    return evaluate_impl(
        transmit, kb, cfg, [&](const Matrix<float>& y) { return encode(model, y); },
        [&](ChannelPass pass) { return decode(model, pass.received); });
}

EvalResult evaluate_baseline(const EmbeddingDataset& transmit, const KnowledgeBase& kb, const EvalConfig& cfg) {
    check_compatible(transmit, kb, cfg);
    if (transmit.dim % 2 != 0) throw std::invalid_argument("baseline: dim must be even");
    return evaluate_impl(
        transmit, kb, cfg, [](Matrix<float> y) { return y; },
        [](ChannelPass pass) {
            for (Eigen::Index r = 0; r < pass.received.rows(); ++r)
                pass.received.row(r) /= static_cast<float>(pass.scales[static_cast<std::size_t>(r)]);
            return std::move(pass.received);
        });
}

double semantic_accuracy(const CodecParams& model, const EmbeddingDataset& transmit, const KnowledgeBase& kb,
                         const EvalConfig& cfg) {
    return evaluate_codec(model, transmit, kb, cfg).accuracy;
}

double baseline_uncompressed(const EmbeddingDataset& transmit, const KnowledgeBase& kb, const EvalConfig& cfg) {
    return evaluate_baseline(transmit, kb, cfg).accuracy;
}

std::uint64_t sweep_cell_seed(std::uint64_t root_seed, double snr_db) {
    return derive_seed(root_seed, stream_id("sweep-cell", {std::bit_cast<std::uint64_t>(snr_db)}));
}

SweepResult run_sweep(const std::vector<SweepModel>& models, const EmbeddingDataset& transmit,
                      const KnowledgeBase& kb, const SweepConfig& cfg) {
    if (models.empty() && !cfg.include_baseline) throw std::invalid_argument("sweep: no models");
    if (cfg.snr_list.empty()) throw std::invalid_argument("sweep: empty SNR list");
    if (cfg.channels.empty()) throw std::invalid_argument("sweep: no channel kinds");
    for (const auto& m : models)
        if (m.model_id == kBaselineModelId)
            throw std::invalid_argument("sweep: model id 'baseline' is reserved");

    struct Cell {
        SweepRow row;
        const CodecParams* model;  // null for the baseline
    };
    std::vector<Cell> cells;
    for (ChannelKind channel : cfg.channels) {
        for (double snr : cfg.snr_list) {
            const auto seed = sweep_cell_seed(cfg.seed, snr);
            for (const auto& m : models) {
                const std::size_t k = m.params.k();
                cells.push_back({{channel, cbr(static_cast<std::int64_t>(k), transmit.image_height,
                                               transmit.image_width, transmit.image_channels),
                                  k, snr, 0.0, transmit.size(), cfg.trials_per_item, m.model_id, seed},
                                 &m.params});
            }
            if (cfg.include_baseline)
                cells.push_back({{channel, cbr(transmit.dim, transmit.image_height, transmit.image_width,
                                               transmit.image_channels),
                                  transmit.dim, snr, 0.0, transmit.size(), cfg.trials_per_item,
                                  kBaselineModelId, seed},
                                 nullptr});
        }
    }

    const auto key = [](const SweepRow& r) {
        return std::tuple(static_cast<int>(r.channel), r.cbr, r.snr_db, r.model_id);
    };
    std::sort(cells.begin(), cells.end(), [&](const Cell& a, const Cell& b) { return key(a.row) < key(b.row); });
    for (std::size_t i = 1; i < cells.size(); ++i)
        if (key(cells[i - 1].row) == key(cells[i].row))
            throw std::invalid_argument("sweep: duplicate cell for model '" + cells[i].row.model_id + "'");

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                auto& cell = cells[i];
                const EvalConfig eval{cell.row.channel, cell.row.snr_db, cfg.trials_per_item, cell.row.seed};
                cell.row.accuracy = cell.model ? semantic_accuracy(*cell.model, transmit, kb, eval)
                                               : baseline_uncompressed(transmit, kb, eval);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = cells.size();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(cfg.threads, 1, std::max<std::size_t>(cells.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    SweepResult result;
    result.rows.reserve(cells.size());
    for (auto& c : cells) result.rows.push_back(std::move(c.row));
    return result;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
    out << "channel,cbr_num,cbr_den,k,snr_db,accuracy,n_items,trials,model_id,seed\n";
    char accuracy[32];
    for (const auto& r : result.rows) {
        std::snprintf(accuracy, sizeof accuracy, "%.6f", r.accuracy);
        out << to_string(r.channel) << ',' << r.cbr.num << ',' << r.cbr.den << ',' << r.k << ','
            << format_snr_db(r.snr_db) << ',' << accuracy << ',' << r.n_items << ',' << r.trials << ','
            << r.model_id << ',' << r.seed << '\n';
    }
}

double percentile(std::vector<double> samples, double q) {
    if (samples.empty()) throw std::invalid_argument("percentile: no samples");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q outside [0, 1]");
    std::sort(samples.begin(), samples.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return samples[rank == 0 ? 0 : rank - 1];
}

LatencyReport bench_latency(const CodecParams& model, const KnowledgeBase& kb, std::size_t n_queries,
                            std::uint64_t seed) {
    if (n_queries < 100) throw std::invalid_argument("bench: need at least 100 queries");
    if (static_cast<std::size_t>(model.enc_w1.rows()) != kb.dim())
        throw std::invalid_argument("bench: model input dim differs from knowledge base dim");

    using Clock = std::chrono::steady_clock;
    const auto ms = [](Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
    const ChannelConfig channel{ChannelKind::awgn, 10.0, seed};
    auto pick = make_engine(seed, stream_id("bench-query", {}));
    std::uniform_int_distribution<std::size_t> index(0, kb.size() - 1);

    constexpr std::size_t kWarmup = 10;
    std::vector<double> net, search, total;
    net.reserve(n_queries);
    search.reserve(n_queries);
    total.reserve(n_queries);
    double wall = 0.0;
    std::size_t sink = 0;  // keeps the retrieval observable

    for (std::size_t q = 0; q < kWarmup + n_queries; ++q) {
        const auto entry = kb.entry(index(pick));
        const Matrix<float> y = Eigen::Map<const Matrix<float>>(entry.data(), 1, static_cast<Eigen::Index>(entry.size()));

        const auto t0 = Clock::now();
        const Matrix<float> z = encode(model, y);
        const auto t1 = Clock::now();
        const auto normalized = normalize_power(to_complex(std::span<const float>(z.data(), static_cast<std::size_t>(z.size()))));
        const auto tx = transmit(normalized.signal, channel, stream_id("bench-channel", {q}));
        const auto real = to_real(equalize(tx.received, tx.realization).signal);
        Matrix<float> z_hat(1, z.cols());
        for (Eigen::Index c = 0; c < z.cols(); ++c) z_hat(0, c) = static_cast<float>(real[static_cast<std::size_t>(c)]);
        const auto t2 = Clock::now();
        const Matrix<float> y_hat = decode(model, z_hat);
        const auto t3 = Clock::now();
        const Match m = kb.retrieve(std::span<const float>(y_hat.data(), static_cast<std::size_t>(y_hat.size())));
        const auto t4 = Clock::now();
        sink += m.image_id;

        if (q < kWarmup) continue;
        const double net_ms = ms(t1 - t0) + ms(t3 - t2);
        const double kb_ms = ms(t4 - t3);
        net.push_back(net_ms);
        search.push_back(kb_ms);
        total.push_back(net_ms + kb_ms);
        wall += net_ms + kb_ms;
    }
    (void)sink;

    LatencyReport report;
    report.n_queries = n_queries;
    report.kb_size = kb.size();
    report.k = model.k();
    report.net = {percentile(net, 0.5), percentile(net, 0.95)};
    report.kb = {percentile(search, 0.5), percentile(search, 0.95)};
    report.total = {percentile(total, 0.5), percentile(total, 0.95)};
    report.total_wall_ms = wall;
    return report;
}

}  // namespace semlink
