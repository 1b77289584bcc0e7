#pragma once

#include "semlink/channel.hpp"
#include "semlink/embedding_io.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semlink {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Layer widths. Only the 512/512 shape can be persisted; smaller shapes
/// exist for in-memory tests.
struct CodecShape {
    std::size_t input_dim = 512;
    std::size_t hidden = 512;
    std::size_t k = 128;

    friend bool operator==(const CodecShape&, const CodecShape&) = default;
};

inline constexpr double kBatchNormEpsilon = 1e-8;

/// Encoder y -> BN(ReLU(y W1 + b1) W2 + b2) and decoder
/// z -> ReLU(z V1 + c1) V2 + c2. Row vectors multiply from the left, so a
/// weight matrix is (fan_in × fan_out). Vectors are stored as 1 × n matrices.
template <typename T>
struct BasicCodecParams {
    Matrix<T> enc_w1, enc_b1, enc_w2, enc_b2;
    Matrix<T> bn_gamma, bn_beta, bn_running_mean, bn_running_var;
    Matrix<T> dec_w1, dec_b1, dec_w2, dec_b2;

    static constexpr std::size_t kTensorCount = 12;
    static constexpr std::size_t kTrainableCount = 10;
    static constexpr std::array<std::string_view, kTensorCount> kTensorNames{
        "enc_w1", "enc_b1", "enc_w2", "enc_b2", "bn_gamma", "bn_beta",
        "bn_running_mean", "bn_running_var", "dec_w1", "dec_b1", "dec_w2", "dec_b2"};

    /// All tensors in file order.
    std::array<Matrix<T>*, kTensorCount> tensors() {
        return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &bn_gamma, &bn_beta,
                &bn_running_mean, &bn_running_var, &dec_w1, &dec_b1, &dec_w2, &dec_b2};
    }
    std::array<const Matrix<T>*, kTensorCount> tensors() const {
        return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &bn_gamma, &bn_beta,
                &bn_running_mean, &bn_running_var, &dec_w1, &dec_b1, &dec_w2, &dec_b2};
    }
    /// The tensors the optimizer updates (running statistics excluded).
    std::array<Matrix<T>*, kTrainableCount> trainable() {
        return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &bn_gamma, &bn_beta,
                &dec_w1, &dec_b1, &dec_w2, &dec_b2};
    }
    std::array<const Matrix<T>*, kTrainableCount> trainable() const {
        return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &bn_gamma, &bn_beta,
                &dec_w1, &dec_b1, &dec_w2, &dec_b2};
    }

    CodecShape shape() const {
        return {static_cast<std::size_t>(enc_w1.rows()), static_cast<std::size_t>(enc_w1.cols()),
                static_cast<std::size_t>(enc_w2.cols())};
    }
    std::size_t k() const { return static_cast<std::size_t>(enc_w2.cols()); }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
        return n;
    }

    template <typename U>
    BasicCodecParams<U> cast() const {
        BasicCodecParams<U> out;
        auto dst = out.tensors();
        auto src = tensors();
        for (std::size_t i = 0; i < kTensorCount; ++i) *dst[i] = src[i]->template cast<U>();
        return out;
    }

    friend bool operator==(const BasicCodecParams& a, const BasicCodecParams& b) {
        auto ta = a.tensors();
        auto tb = b.tensors();
        for (std::size_t i = 0; i < kTensorCount; ++i) {
            if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols()) return false;
            if (*ta[i] != *tb[i]) return false;
        }
        return true;
    }
};

using CodecParams = BasicCodecParams<float>;

/// Gradient of the loss for every trainable tensor, in trainable() order.
template <typename T>
using CodecGrads = std::array<Matrix<T>, BasicCodecParams<T>::kTrainableCount>;

enum class BnMode { train, eval };

/// Glorot-uniform weights, zero biases, identity batch norm. Requires k even
/// with 2 <= k <= 4096.
CodecParams init_params(std::size_t k, std::uint64_t seed);
template <typename T>
BasicCodecParams<T> init_params(const CodecShape& shape, std::uint64_t seed);

/// Intermediate activations kept for the backward pass.
template <typename T>
struct EncoderCache {
    Matrix<T> input, h1, h2, xhat;
    Matrix<T> batch_mean, batch_var, inv_std;
};

template <typename T>
struct DecoderCache {
    Matrix<T> input, d1;
};

/// Forward through the encoder. Train mode normalizes with batch statistics
/// (and stores them in the cache); eval mode uses the running statistics.
/// Never mutates params.
template <typename T>
Matrix<T> encoder_forward(const BasicCodecParams<T>& params, const Matrix<T>& y, BnMode mode,
                          EncoderCache<T>* cache = nullptr);

/// Eval-mode encode: pure.
template <typename T>
Matrix<T> encode(const BasicCodecParams<T>& params, const Matrix<T>& y);

/// Train-mode encode: batch statistics, then a momentum update of the running statistics.
template <typename T>
Matrix<T> encode_train(BasicCodecParams<T>& params, const Matrix<T>& y, double momentum);

template <typename T>
Matrix<T> decode(const BasicCodecParams<T>& params, const Matrix<T>& z_hat,
                 DecoderCache<T>* cache = nullptr);

/// running <- (1 - momentum) running + momentum batch; the variance update
/// uses the unbiased batch variance.
template <typename T>
void update_running_stats(BasicCodecParams<T>& params, const EncoderCache<T>& cache,
                          double momentum);

/// Mean squared error over all components, accumulated in double.
template <typename T>
double mse_loss(const Matrix<T>& y_hat, const Matrix<T>& y);

/// Per-row channel use: one realization per batch row. An empty span means
/// the noiseless identity channel.
struct PipelineChannel {
    std::span<const ChannelRealization> rows;
};

template <typename T>
struct PipelineCache {
    EncoderCache<T> encoder;
    DecoderCache<T> decoder;
    Matrix<T> z;              // encoder output
    std::vector<T> scales;    // per-row power normalization factor
    std::vector<ComplexSignal> gains;  // per-row effective end-to-end gains
    Matrix<T> y_hat;
};

/// encode(train) -> normalize_power -> channel -> equalize -> decode -> MSE.
template <typename T>
double pipeline_forward(const BasicCodecParams<T>& params, const Matrix<T>& y,
                        PipelineChannel channel, PipelineCache<T>& cache);

/// Exact gradient of pipeline_forward's loss. The channel realization is a
/// constant; normalization contributes its full Jacobian.
template <typename T>
CodecGrads<T> pipeline_backward(const BasicCodecParams<T>& params, const Matrix<T>& y,
                                const PipelineCache<T>& cache);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    CodecGrads<float> m, v;
};

AdamState make_adam_state(const CodecParams& params);
void adam_update(CodecParams& params, AdamState& state, const CodecGrads<float>& grads,
                 const AdamConfig& cfg);

/// Raised when a training step produces a non-finite loss.
class NumericError : public std::runtime_error {
public:
    NumericError(std::uint64_t step, const std::string& what)
        : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

/// One optimizer step on `batch` through a channel of `kind` at `snr_db`.
/// Channel draws come from (channel_seed, step, row). Returns the pre-update loss.
double train_step(CodecParams& params, AdamState& optimizer, const Matrix<float>& batch,
                  ChannelKind kind, double snr_db, std::uint64_t channel_seed,
                  const AdamConfig& adam, double bn_momentum);

// Persistence: "SCDC", u32 version, u32 k, then every tensor in tensors()
// order as row-major little-endian f32. Only the 512/512 shape is storable.
inline constexpr char kCodecMagic[4] = {'S', 'C', 'D', 'C'};
inline constexpr std::uint32_t kCodecVersion = 1;

enum class CodecFileErrc { io, bad_magic, version_mismatch, truncated, invalid };

class CodecFileError : public std::runtime_error {
public:
    CodecFileError(CodecFileErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    CodecFileErrc code() const noexcept { return code_; }

private:
    CodecFileErrc code_;
};

void save_params(const CodecParams& params, std::ostream& out);
void save_params(const CodecParams& params, const std::filesystem::path& path);
CodecParams load_params(std::istream& in);
CodecParams load_params(const std::filesystem::path& path);

/// Rows of a dataset as a (records × dim) matrix.
Matrix<float> to_matrix(const EmbeddingDataset& dataset);

}  // namespace semlink
