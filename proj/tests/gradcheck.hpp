#pragma once

#include "semlink/codec.hpp"
#include "semlink/embedding_io.hpp"
#include "semlink/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace semlink::test_support {

struct TensorCheck {
    std::string name;
    std::size_t checked = 0;
    std::size_t skipped = 0;  ///< entries whose perturbation crossed a ReLU kink
    double relative_error = 0.0;  ///< ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
};

/// Below this gradient norm a tensor counts as having zero gradient and the
/// comparison becomes absolute (the shift-invariant bias before batch norm).
inline constexpr double kGradientNormFloor = 1e-8;

/// A double-precision codec away from its symmetric initial state, so every
/// tensor, including biases and batch-norm affine terms, has a generic gradient.
inline BasicCodecParams<double> gradcheck_params(std::size_t k, std::uint64_t seed) {
    auto p = init_params(k, seed).cast<double>();
    SplitMix64 rng(seed ^ 0x5EED);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (auto* t : {&p.enc_b1, &p.enc_b2, &p.bn_beta, &p.dec_b1, &p.dec_b2})
        for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += normal(rng);
    for (Eigen::Index i = 0; i < p.bn_gamma.size(); ++i) p.bn_gamma.data()[i] += normal(rng);
    return p;
}

inline Matrix<double> gradcheck_batch(std::size_t rows, std::uint64_t seed) {
    const auto ds = generate_synthetic({4, 2, 512, 0.05, seed});
    Matrix<double> y(static_cast<Eigen::Index>(rows), 512);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t d = 0; d < 512; ++d)
            y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = ds.records[r % ds.size()].vector[d];
    return y;
}

inline bool same_activation_pattern(const PipelineCache<double>& a, const PipelineCache<double>& b) {
    return ((a.encoder.h1.array() > 0.0) == (b.encoder.h1.array() > 0.0)).all() &&
           ((a.decoder.d1.array() > 0.0) == (b.decoder.d1.array() > 0.0)).all();
}

/// Central differences with step `h` on `samples` randomly chosen entries of
/// every trainable tensor (all entries when the tensor is smaller). The loss is only
/// piecewise smooth, so an entry whose +h or -h evaluation switches any ReLU
/// is not a valid difference quotient; it is skipped and counted.
inline std::vector<TensorCheck> gradient_check(BasicCodecParams<double> params, const Matrix<double>& y,
                                               PipelineChannel channel, std::size_t samples,
                                               std::uint64_t seed, double h = 1e-3) {
    PipelineCache<double> cache;
    pipeline_forward(params, y, channel, cache);
    const auto analytic = pipeline_backward(params, y, cache);

    static constexpr std::array<std::string_view, 10> kNames{
        "enc_w1", "enc_b1", "enc_w2", "enc_b2", "bn_gamma", "bn_beta", "dec_w1", "dec_b1", "dec_w2", "dec_b2"};
    std::vector<TensorCheck> out;
    auto tensors = params.trainable();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& w = *tensors[t];
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(w.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
        SplitMix64 rng(derive_seed(seed, stream_id("gradcheck", {t})));
        std::shuffle(idx.begin(), idx.end(), rng);
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        std::size_t skipped = 0;
        std::size_t checked = 0;
        for (auto i : idx) {
            if (checked == samples) break;
            const double original = w.data()[i];
            PipelineCache<double> c_up, c_down;
            w.data()[i] = original + h;
            const double up = pipeline_forward(params, y, channel, c_up);
            w.data()[i] = original - h;
            const double down = pipeline_forward(params, y, channel, c_down);
            w.data()[i] = original;
            if (!same_activation_pattern(cache, c_up) || !same_activation_pattern(cache, c_down)) {
                ++skipped;
                continue;
            }
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[t].data()[i];
            ++checked;
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        const double denom = std::max({std::sqrt(a2), std::sqrt(n2), kGradientNormFloor});
        out.push_back({std::string(kNames[t]), checked, skipped, std::sqrt(diff2) / denom});
    }
    return out;
}

}  // namespace semlink::test_support
