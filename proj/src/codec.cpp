#include "semlink/codec.hpp"

#include "semlink/rng.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

namespace semlink {

namespace {

template <typename T>
Matrix<T> relu(const Matrix<T>& x) {
    return x.cwiseMax(T(0));
}

template <typename T>
Matrix<T> relu_mask(const Matrix<T>& pre) {
    return (pre.array() > T(0)).template cast<T>().matrix();
}

template <typename T>
Matrix<T> add_row(const Matrix<T>& x, const Matrix<T>& row) {
    return x.rowwise() + row.row(0);
}

template <typename T>
Matrix<T> column_sums(const Matrix<T>& x) {
    return x.colwise().sum();
}

template <typename T>
void require_cols(const Matrix<T>& x, Eigen::Index cols, const char* what) {
    if (x.cols() != cols)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(cols) +
                                    " columns, got " + std::to_string(x.cols()));
    if (x.rows() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

void check_k(std::size_t k) {
    if (k < 2 || k > 4096 || k % 2 != 0)
        throw std::invalid_argument("codec: k must be even with 2 <= k <= 4096, got " + std::to_string(k));
}

template <typename T>
Matrix<T> glorot(std::size_t fan_in, std::size_t fan_out, SplitMix64 engine) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Matrix<T> w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(uniform(engine));
    return w;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>(v >> 24)};
    out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const char* field) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw CodecFileError(CodecFileErrc::truncated, std::string("truncated codec file at ") + field);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

template <typename T>
BasicCodecParams<T> init_params(const CodecShape& shape, std::uint64_t seed) {
    check_k(shape.k);
    if (shape.input_dim == 0 || shape.hidden == 0)
        throw std::invalid_argument("codec: layer widths must be positive");
    const auto engine = [seed](std::uint64_t tensor) {
        return make_engine(seed, stream_id("codec-init", {tensor}));
    };
    const auto n_in = static_cast<Eigen::Index>(shape.input_dim);
    const auto n_hidden = static_cast<Eigen::Index>(shape.hidden);
    const auto k = static_cast<Eigen::Index>(shape.k);

    BasicCodecParams<T> p;
    p.enc_w1 = glorot<T>(shape.input_dim, shape.hidden, engine(0));
    p.enc_b1 = Matrix<T>::Zero(1, n_hidden);
    p.enc_w2 = glorot<T>(shape.hidden, shape.k, engine(2));
    p.enc_b2 = Matrix<T>::Zero(1, k);
    p.bn_gamma = Matrix<T>::Ones(1, k);
    p.bn_beta = Matrix<T>::Zero(1, k);
    p.bn_running_mean = Matrix<T>::Zero(1, k);
    p.bn_running_var = Matrix<T>::Ones(1, k);
    p.dec_w1 = glorot<T>(shape.k, shape.hidden, engine(8));
    p.dec_b1 = Matrix<T>::Zero(1, n_hidden);
    p.dec_w2 = glorot<T>(shape.hidden, shape.input_dim, engine(10));
    p.dec_b2 = Matrix<T>::Zero(1, n_in);
    return p;
}

CodecParams init_params(std::size_t k, std::uint64_t seed) {
    return init_params<float>(CodecShape{512, 512, k}, seed);
}

template <typename T>
Matrix<T> encoder_forward(const BasicCodecParams<T>& params, const Matrix<T>& y, BnMode mode,
                          EncoderCache<T>* cache) {
    require_cols(y, params.enc_w1.rows(), "encode");
    if (mode == BnMode::train && y.rows() < 2)
        throw std::invalid_argument("encode: train-mode batch norm needs at least 2 rows");

    Matrix<T> h1 = add_row<T>(y * params.enc_w1, params.enc_b1);
    Matrix<T> h2 = add_row<T>(relu(h1) * params.enc_w2, params.enc_b2);

    Matrix<T> mean, var;
    if (mode == BnMode::train) {
        mean = h2.colwise().mean();
        var = (h2.rowwise() - mean.row(0)).array().square().matrix().colwise().mean();
    } else {
        mean = params.bn_running_mean;
        var = params.bn_running_var;
    }
    const Matrix<T> inv_std = (var.array() + T(kBatchNormEpsilon)).rsqrt().matrix();
    Matrix<T> xhat = ((h2.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array()).matrix();
    Matrix<T> z = add_row<T>(
        (xhat.array().rowwise() * params.bn_gamma.row(0).array()).matrix(), params.bn_beta);

    if (cache) {
        cache->input = y;
        cache->h1 = std::move(h1);
        cache->h2 = std::move(h2);
        cache->xhat = std::move(xhat);
        cache->batch_mean = std::move(mean);
        cache->batch_var = std::move(var);
        cache->inv_std = inv_std;
    }
    return z;
}

template <typename T>
Matrix<T> encode(const BasicCodecParams<T>& params, const Matrix<T>& y) {
    return encoder_forward(params, y, BnMode::eval);
}

template <typename T>
void update_running_stats(BasicCodecParams<T>& params, const EncoderCache<T>& cache, double momentum) {
    const auto n = static_cast<T>(cache.h2.rows());
    const T m = static_cast<T>(momentum);
    const Matrix<T> unbiased = cache.batch_var * (n / (n - T(1)));
    params.bn_running_mean = (T(1) - m) * params.bn_running_mean + m * cache.batch_mean;
    params.bn_running_var = (T(1) - m) * params.bn_running_var + m * unbiased;
}

template <typename T>
Matrix<T> encode_train(BasicCodecParams<T>& params, const Matrix<T>& y, double momentum) {
    EncoderCache<T> cache;
    Matrix<T> z = encoder_forward(params, y, BnMode::train, &cache);
    update_running_stats(params, cache, momentum);
    return z;
}

template <typename T>
Matrix<T> decode(const BasicCodecParams<T>& params, const Matrix<T>& z_hat, DecoderCache<T>* cache) {
    require_cols(z_hat, params.dec_w1.rows(), "decode");
    Matrix<T> d1 = add_row<T>(z_hat * params.dec_w1, params.dec_b1);
    Matrix<T> y_hat = add_row<T>(relu(d1) * params.dec_w2, params.dec_b2);
    if (cache) {
        cache->input = z_hat;
        cache->d1 = std::move(d1);
    }
    return y_hat;
}

template <typename T>
double mse_loss(const Matrix<T>& y_hat, const Matrix<T>& y) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols())
        throw std::invalid_argument("loss: shape mismatch");
    if (y.size() == 0) throw std::invalid_argument("loss: empty batch");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y_hat.data()[i]) - static_cast<double>(y.data()[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

template <typename T>
double pipeline_forward(const BasicCodecParams<T>& params, const Matrix<T>& y, PipelineChannel channel,
                        PipelineCache<T>& cache) {
    cache.z = encoder_forward(params, y, BnMode::train, &cache.encoder);
    const auto rows = cache.z.rows();
    if (!channel.rows.empty() && channel.rows.size() != static_cast<std::size_t>(rows))
        throw std::invalid_argument("pipeline: need one channel realization per row");

    Matrix<T> z_hat(rows, cache.z.cols());
    cache.scales.assign(static_cast<std::size_t>(rows), T(1));
    cache.gains.clear();
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::span<const T> row(cache.z.row(r).data(), static_cast<std::size_t>(cache.z.cols()));
        auto normalized = normalize_power(to_complex(row));
        cache.scales[static_cast<std::size_t>(r)] = static_cast<T>(normalized.scale);
        ComplexSignal received = std::move(normalized.signal);
        if (!channel.rows.empty()) {
            const auto& realization = channel.rows[static_cast<std::size_t>(r)];
            received = equalize(apply_channel(received, realization), realization).signal;
            cache.gains.push_back(effective_gain(realization));
        }
        const auto real = to_real(received);
        for (Eigen::Index c = 0; c < z_hat.cols(); ++c) z_hat(r, c) = static_cast<T>(real[static_cast<std::size_t>(c)]);
    }
    cache.y_hat = decode(params, z_hat, &cache.decoder);
    return mse_loss(cache.y_hat, y);
}

template <typename T>
CodecGrads<T> pipeline_backward(const BasicCodecParams<T>& params, const Matrix<T>& y,
                                const PipelineCache<T>& cache) {
    const auto batch = static_cast<T>(y.rows());
    CodecGrads<T> g;
    auto& [g_enc_w1, g_enc_b1, g_enc_w2, g_enc_b2, g_gamma, g_beta, g_dec_w1, g_dec_b1, g_dec_w2,
           g_dec_b2] = g;

    // Decoder.
    const Matrix<T> d_yhat = (cache.y_hat - y) * (T(2) / static_cast<T>(y.size()));
    g_dec_w2 = relu(cache.decoder.d1).transpose() * d_yhat;
    g_dec_b2 = column_sums(d_yhat);
    const Matrix<T> d_d1 = ((d_yhat * params.dec_w2.transpose()).array() *
                            relu_mask(cache.decoder.d1).array()).matrix();
    g_dec_w1 = cache.decoder.input.transpose() * d_d1;
    g_dec_b1 = column_sums(d_d1);
    Matrix<T> d_zhat = d_d1 * params.dec_w1.transpose();

    // Channel: z_hat = g ⊙ u + e per complex symbol, so du = conj(g) dz_hat.
    if (!cache.gains.empty()) {
        for (Eigen::Index r = 0; r < d_zhat.rows(); ++r) {
            const auto& gains = cache.gains[static_cast<std::size_t>(r)];
            for (std::size_t s = 0; s < gains.size(); ++s) {
                const auto c = static_cast<Eigen::Index>(2 * s);
                const Symbol d(d_zhat(r, c), d_zhat(r, c + 1));
                const Symbol du = std::conj(gains[s]) * d;
                d_zhat(r, c) = static_cast<T>(du.real());
                d_zhat(r, c + 1) = static_cast<T>(du.imag());
            }
        }
    }

    // Power normalization u = c z with c = sqrt(L) / |z|:
    // dz = c (du - z (z·du) / |z|²).
    Matrix<T> d_z(d_zhat.rows(), d_zhat.cols());
    for (Eigen::Index r = 0; r < d_z.rows(); ++r) {
        const auto z = cache.z.row(r);
        const auto du = d_zhat.row(r);
        const T scale = cache.scales[static_cast<std::size_t>(r)];
        d_z.row(r) = scale * (du - z * (z.dot(du) / z.squaredNorm()));
    }

    // Batch norm with batch statistics.
    const Matrix<T>& xhat = cache.encoder.xhat;
    g_gamma = column_sums<T>((d_z.array() * xhat.array()).matrix());
    g_beta = column_sums(d_z);
    const Matrix<T> d_xhat = (d_z.array().rowwise() * params.bn_gamma.row(0).array()).matrix();
    const Matrix<T> sum_dxhat = column_sums(d_xhat);
    const Matrix<T> sum_dxhat_xhat = column_sums<T>((d_xhat.array() * xhat.array()).matrix());
    const Matrix<T> d_h2 =
        (((d_xhat * batch).rowwise() - sum_dxhat.row(0)).array() -
         xhat.array().rowwise() * sum_dxhat_xhat.row(0).array())
            .rowwise() *
        (cache.encoder.inv_std.row(0).array() / batch);

    // Encoder layers.
    g_enc_w2 = relu(cache.encoder.h1).transpose() * d_h2;
    g_enc_b2 = column_sums(d_h2);
    const Matrix<T> d_h1 =
        ((d_h2 * params.enc_w2.transpose()).array() * relu_mask(cache.encoder.h1).array()).matrix();
    g_enc_w1 = cache.encoder.input.transpose() * d_h1;
    g_enc_b1 = column_sums(d_h1);
    return g;
}

AdamState make_adam_state(const CodecParams& params) {
    AdamState s;
    const auto t = params.trainable();
    for (std::size_t i = 0; i < t.size(); ++i) {
        s.m[i] = Matrix<float>::Zero(t[i]->rows(), t[i]->cols());
        s.v[i] = Matrix<float>::Zero(t[i]->rows(), t[i]->cols());
    }
    return s;
}

void adam_update(CodecParams& params, AdamState& state, const CodecGrads<float>& grads,
                 const AdamConfig& cfg) {
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    const float correction1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
    const float correction2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));
    const float lr = static_cast<float>(cfg.learning_rate);
    const float eps = static_cast<float>(cfg.epsilon);

    auto tensors = params.trainable();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        const auto g = grads[i].array();
        m = b1 * m + (1.0f - b1) * g;
        v = b2 * v + (1.0f - b2) * g.square();
        tensors[i]->array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
    }
}

double train_step(CodecParams& params, AdamState& optimizer, const Matrix<float>& batch, ChannelKind kind,
                  double snr_db, std::uint64_t channel_seed, const AdamConfig& adam, double bn_momentum) {
    const std::uint64_t step = optimizer.step + 1;
    if (batch.rows() < 2) throw std::invalid_argument("train_step: batch needs at least 2 rows");
    if (batch.cols() != params.enc_w1.rows())
        throw std::invalid_argument("train_step: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                                    std::to_string(params.enc_w1.rows()));
    if (!batch.allFinite()) throw std::invalid_argument("train_step: batch has a non-finite component");

    const ChannelConfig cfg{kind, snr_db, channel_seed};
    const std::size_t symbols = params.k() / 2;
    std::vector<ChannelRealization> rows;
    rows.reserve(static_cast<std::size_t>(batch.rows()));
    for (Eigen::Index r = 0; r < batch.rows(); ++r)
        rows.push_back(draw_realization(cfg, symbols, stream_id("train-row", {step, static_cast<std::uint64_t>(r)})));

    // The batch is valid, so a failure past this point comes from the parameters
    // (for instance an encoder row that collapsed to zero power).
    PipelineCache<float> cache;
    double loss = 0.0;
    try {
        loss = pipeline_forward(params, batch, PipelineChannel{rows}, cache);
    } catch (const std::invalid_argument& e) {
        throw NumericError(step, e.what());
    }
    if (!std::isfinite(loss)) throw NumericError(step, "non-finite training loss");

    const auto grads = pipeline_backward(params, batch, cache);
    adam_update(params, optimizer, grads, adam);
    update_running_stats(params, cache.encoder, bn_momentum);
    return loss;
}

void save_params(const CodecParams& params, std::ostream& out) {
    const auto shape = params.shape();
    if (shape.input_dim != 512 || shape.hidden != 512)
        throw CodecFileError(CodecFileErrc::invalid, "only 512-wide codecs can be saved");
    check_k(shape.k);
    out.write(kCodecMagic, 4);
    put_u32(out, kCodecVersion);
    put_u32(out, static_cast<std::uint32_t>(shape.k));
    for (const auto* t : params.tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t->data()[i]));
    if (!out) throw CodecFileError(CodecFileErrc::io, "codec write failed");
}

void save_params(const CodecParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CodecFileError(CodecFileErrc::io, "cannot open " + path.string() + " for writing");
    save_params(params, out);
    out.flush();
    if (!out) throw CodecFileError(CodecFileErrc::io, "write to " + path.string() + " failed");
}

CodecParams load_params(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4) throw CodecFileError(CodecFileErrc::truncated, "truncated codec file at magic");
    if (!std::equal(magic, magic + 4, kCodecMagic))
        throw CodecFileError(CodecFileErrc::bad_magic, "bad magic: expected \"SCDC\"");
    const auto version = get_u32(in, "version");
    if (version != kCodecVersion)
        throw CodecFileError(CodecFileErrc::version_mismatch,
                             "codec file version " + std::to_string(version) + " not supported");
    const auto k = get_u32(in, "k");
    if (k < 2 || k > 4096 || k % 2 != 0)
        throw CodecFileError(CodecFileErrc::invalid, "invalid k " + std::to_string(k));

    // Shapes follow from k; init_params gives correctly sized tensors to fill.
    CodecParams p = init_params(k, 0);
    for (auto* t : p.tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = std::bit_cast<float>(get_u32(in, "tensor data"));
    if (in.peek() != std::char_traits<char>::eof())
        throw CodecFileError(CodecFileErrc::invalid, "trailing bytes after codec tensors");
    for (const auto* t : p.tensors())
        if (!t->allFinite()) throw CodecFileError(CodecFileErrc::invalid, "non-finite codec parameter");
    if ((p.bn_running_var.array() < 0.0f).any())
        throw CodecFileError(CodecFileErrc::invalid, "negative running variance");
    return p;
}

CodecParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodecFileError(CodecFileErrc::io, "cannot open " + path.string());
    return load_params(in);
}

Matrix<float> to_matrix(const EmbeddingDataset& dataset) {
    Matrix<float> m(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(dataset.dim));
    for (std::size_t i = 0; i < dataset.size(); ++i)
        for (std::size_t d = 0; d < dataset.dim; ++d)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = dataset.records[i].vector[d];
    return m;
}

#define SEMLINK_INSTANTIATE_CODEC(T)                                                                  \
    template BasicCodecParams<T> init_params<T>(const CodecShape&, std::uint64_t);                    \
    template Matrix<T> encoder_forward<T>(const BasicCodecParams<T>&, const Matrix<T>&, BnMode,       \
                                          EncoderCache<T>*);                                          \
    template Matrix<T> encode<T>(const BasicCodecParams<T>&, const Matrix<T>&);                       \
    template Matrix<T> encode_train<T>(BasicCodecParams<T>&, const Matrix<T>&, double);               \
    template Matrix<T> decode<T>(const BasicCodecParams<T>&, const Matrix<T>&, DecoderCache<T>*);     \
    template void update_running_stats<T>(BasicCodecParams<T>&, const EncoderCache<T>&, double);      \
    template double mse_loss<T>(const Matrix<T>&, const Matrix<T>&);                                  \
    template double pipeline_forward<T>(const BasicCodecParams<T>&, const Matrix<T>&, PipelineChannel, \
                                        PipelineCache<T>&);                                           \
    template CodecGrads<T> pipeline_backward<T>(const BasicCodecParams<T>&, const Matrix<T>&,         \
                                                const PipelineCache<T>&);

SEMLINK_INSTANTIATE_CODEC(float)
SEMLINK_INSTANTIATE_CODEC(double)

#undef SEMLINK_INSTANTIATE_CODEC

}  // namespace semlink
