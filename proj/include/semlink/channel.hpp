#pragma once

#include <compare>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semlink {

using Symbol = std::complex<double>;
using ComplexSignal = std::vector<Symbol>;

enum class ChannelKind { awgn, rayleigh };

std::string_view to_string(ChannelKind kind) noexcept;
/// Accepts "awgn" or "rayleigh"; throws std::invalid_argument otherwise.
ChannelKind parse_channel_kind(std::string_view text);

/// SNR is per complex symbol under unit average signal power. +infinity
/// (spelled "inf" on the command line) is the noiseless channel.
struct ChannelConfig {
    ChannelKind kind = ChannelKind::awgn;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
};

/// Per-symbol gains H_i and additive noise n_i of one channel use.
struct ChannelRealization {
    ComplexSignal gains;
    ComplexSignal noise;
};

struct Transmission {
    ComplexSignal received;
    ChannelRealization realization;
};

struct PowerNormalized {
    ComplexSignal signal;
    double scale = 1.0;  ///< multiplier that was applied
};

struct Equalized {
    ComplexSignal signal;
    std::size_t clamped_gains = 0;  ///< symbols whose |H| fell below kMinGainMagnitude
};

inline constexpr double kMinGainMagnitude = 1e-6;
inline constexpr double kPowerTolerance = 1e-3;

/// Pairs consecutive components: symbol i = v[2i] + j v[2i+1]. Throws on odd length.
ComplexSignal to_complex(std::span<const float> v);
ComplexSignal to_complex(std::span<const double> v);
std::vector<double> to_real(const ComplexSignal& s);

double mean_power(const ComplexSignal& s) noexcept;

/// Scales to mean per-symbol power exactly 1. Throws on an all-zero signal.
PowerNormalized normalize_power(const ComplexSignal& s);

/// Complex noise variance 10^(-snr_db/10); each real component gets half.
double snr_to_noise_variance(double snr_db);

/// Draws H and n for a signal of `length` symbols. A pure function of
/// (cfg.seed, stream, length, cfg.kind, cfg.snr_db). Gains and noise come
/// from separate sub-streams, so AWGN and Rayleigh with the same seed see
/// the same noise samples.
ChannelRealization draw_realization(const ChannelConfig& cfg, std::size_t length, std::uint64_t stream);

/// H ⊙ s + n.
ComplexSignal apply_channel(const ComplexSignal& s, const ChannelRealization& realization);

/// Requires unit mean power within kPowerTolerance (std::invalid_argument otherwise).
Transmission transmit(const ComplexSignal& s, const ChannelConfig& cfg, std::uint64_t stream);

/// Zero-forcing with perfect CSI. Gains below kMinGainMagnitude are clamped
/// to that magnitude, keeping their phase.
Equalized equalize(const ComplexSignal& received, const ChannelRealization& realization);

/// H_i / clamp(H_i): the end-to-end multiplier that equalize∘apply_channel
/// puts on the signal. 1 everywhere unless a gain was clamped.
ComplexSignal effective_gain(const ChannelRealization& realization);

/// Exact non-negative rational, always in lowest terms.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational make(std::int64_t num, std::int64_t den);
    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;

    friend bool operator==(const Rational&, const Rational&) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) noexcept {
        return static_cast<__int128>(a.num) * b.den <=> static_cast<__int128>(b.num) * a.den;
    }
};

/// Channel bandwidth ratio (k/2) / (height · width · channels).
Rational cbr(std::int64_t k, std::int64_t height, std::int64_t width, std::int64_t channels);

/// Parses a dB value; "inf" / "+inf" give +infinity.
double parse_snr_db(std::string_view text);
std::string format_snr_db(double snr_db);

}  // namespace semlink
