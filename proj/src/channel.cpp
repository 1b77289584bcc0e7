#include "semlink/channel.hpp"

#include "semlink/rng.hpp"

#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace semlink {

namespace {

template <typename T>
ComplexSignal pair_up(std::span<const T> v) {
    if (v.size() % 2 != 0)
        throw std::invalid_argument("to_complex: odd length " + std::to_string(v.size()));
    ComplexSignal s(v.size() / 2);
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = Symbol(static_cast<double>(v[2 * i]), static_cast<double>(v[2 * i + 1]));
    return s;
}

// CN(0, variance): real and imaginary parts each N(0, variance / 2).
void fill_complex_gaussian(ComplexSignal& out, double variance, SplitMix64 engine) {
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    for (auto& x : out) {
        const double re = normal(engine);
        const double im = normal(engine);
        x = Symbol(re, im);
    }
}

Symbol clamp_gain(Symbol h) noexcept {
    const double mag = std::abs(h);
    if (mag >= kMinGainMagnitude) return h;
    if (mag == 0.0) return Symbol(kMinGainMagnitude, 0.0);
    return h * (kMinGainMagnitude / mag);
}

}  // namespace

std::string_view to_string(ChannelKind kind) noexcept {
    return kind == ChannelKind::awgn ? "awgn" : "rayleigh";
}

ChannelKind parse_channel_kind(std::string_view text) {
    if (text == "awgn") return ChannelKind::awgn;
    if (text == "rayleigh") return ChannelKind::rayleigh;
    throw std::invalid_argument("unknown channel kind '" + std::string(text) +
                                "' (expected awgn or rayleigh)");
}

ComplexSignal to_complex(std::span<const float> v) { return pair_up(v); }
ComplexSignal to_complex(std::span<const double> v) { return pair_up(v); }

std::vector<double> to_real(const ComplexSignal& s) {
    std::vector<double> v(2 * s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        v[2 * i] = s[i].real();
        v[2 * i + 1] = s[i].imag();
    }
    return v;
}

double mean_power(const ComplexSignal& s) noexcept {
    if (s.empty()) return 0.0;
    double p = 0.0;
    for (const auto& x : s) p += std::norm(x);
    return p / static_cast<double>(s.size());
}

PowerNormalized normalize_power(const ComplexSignal& s) {
    const double p = mean_power(s);
    if (!(p > 0.0)) throw std::invalid_argument("normalize_power: signal has no nonzero symbol");
    if (!std::isfinite(p)) throw std::invalid_argument("normalize_power: non-finite signal");
    PowerNormalized out{s, 1.0 / std::sqrt(p)};
    for (auto& x : out.signal) x *= out.scale;
    return out;
}

double snr_to_noise_variance(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

ChannelRealization draw_realization(const ChannelConfig& cfg, std::size_t length, std::uint64_t stream) {
    ChannelRealization r{ComplexSignal(length, Symbol(1.0, 0.0)), ComplexSignal(length, Symbol(0.0, 0.0))};
    if (cfg.kind == ChannelKind::rayleigh)
        fill_complex_gaussian(r.gains, 1.0, make_engine(cfg.seed, stream_id("channel-gain", {stream})));
    const double variance = snr_to_noise_variance(cfg.snr_db);
    if (variance > 0.0)
        fill_complex_gaussian(r.noise, variance, make_engine(cfg.seed, stream_id("channel-noise", {stream})));
    return r;
}

ComplexSignal apply_channel(const ComplexSignal& s, const ChannelRealization& realization) {
    if (realization.gains.size() != s.size() || realization.noise.size() != s.size())
        throw std::invalid_argument("apply_channel: realization length mismatch");
    ComplexSignal out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = realization.gains[i] * s[i] + realization.noise[i];
    return out;
}

Transmission transmit(const ComplexSignal& s, const ChannelConfig& cfg, std::uint64_t stream) {
    if (std::isnan(cfg.snr_db)) throw std::invalid_argument("transmit: SNR is NaN");
    const double p = mean_power(s);
    if (!(std::abs(p - 1.0) <= kPowerTolerance))
        throw std::invalid_argument("transmit: input mean power " + std::to_string(p) +
                                    " is not normalized to 1");
    Transmission t;
    t.realization = draw_realization(cfg, s.size(), stream);
    t.received = apply_channel(s, t.realization);
    return t;
}

Equalized equalize(const ComplexSignal& received, const ChannelRealization& realization) {
    if (realization.gains.size() != received.size())
        throw std::invalid_argument("equalize: realization length mismatch");
    Equalized out{ComplexSignal(received.size()), 0};
    for (std::size_t i = 0; i < received.size(); ++i) {
        const Symbol h = clamp_gain(realization.gains[i]);
        if (h != realization.gains[i]) ++out.clamped_gains;
        out.signal[i] = received[i] / h;
    }
    return out;
}

ComplexSignal effective_gain(const ChannelRealization& realization) {
    ComplexSignal g(realization.gains.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Symbol h = realization.gains[i];
        const Symbol c = clamp_gain(h);
        g[i] = (c == h) ? Symbol(1.0, 0.0) : h / c;
    }
    return g;
}

Rational Rational::make(std::int64_t num, std::int64_t den) {
    if (den <= 0 || num < 0) throw std::invalid_argument("Rational: need num >= 0 and den > 0");
    const auto g = std::gcd(num, den);
    return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

std::string Rational::str() const { return std::to_string(num) + "/" + std::to_string(den); }

Rational cbr(std::int64_t k, std::int64_t height, std::int64_t width, std::int64_t channels) {
    if (k < 2 || k % 2 != 0) throw std::invalid_argument("cbr: k must be even and >= 2");
    if (height <= 0 || width <= 0 || channels <= 0)
        throw std::invalid_argument("cbr: image geometry must be positive");
    return Rational::make(k / 2, height * width * channels);
}

double parse_snr_db(std::string_view text) {
    if (text == "inf" || text == "+inf" || text == "Inf") return std::numeric_limits<double>::infinity();
    std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid SNR '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("invalid SNR '" + s + "'");
    return v;
}

std::string format_snr_db(double snr_db) {
    if (std::isinf(snr_db)) return snr_db > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << snr_db;
    return os.str();
}

}  // namespace semlink
