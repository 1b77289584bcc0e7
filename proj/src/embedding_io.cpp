#include "semlink/embedding_io.hpp"

#include "semlink/rng.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <unordered_set>

namespace semlink {

namespace {

void put_u16(std::ostream& out, std::uint16_t v) {
    const std::array<char, 2> b{static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(b.data(), b.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                static_cast<char>((v >> 16) & 0xFF), static_cast<char>(v >> 24)};
    out.write(b.data(), b.size());
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n, const char* field) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw DatasetError(DatasetErrc::truncated, std::string("stream ended inside ") + field);
    }

    std::uint16_t u16(const char* field) {
        std::array<unsigned char, 2> b{};
        bytes(reinterpret_cast<char*>(b.data()), b.size(), field);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32(const char* field) {
        std::array<unsigned char, 4> b{};
        bytes(reinterpret_cast<char*>(b.data()), b.size(), field);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

void require_min_per_class(const EmbeddingDataset& dataset, const char* op) {
    const auto counts = dataset.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < 2)
            throw std::invalid_argument(std::string(op) + ": class " + std::to_string(c) + " ('" +
                                        dataset.class_names[c] + "') has " +
                                        std::to_string(counts[c]) + " records, need at least 2");
    }
}

// Seeded per-class shuffle; `first_count(n)` records of each class go to the first output.
template <typename FirstCount>
std::pair<EmbeddingDataset, EmbeddingDataset> stratified_split(const EmbeddingDataset& dataset,
                                                               std::uint64_t seed,
                                                               std::string_view purpose,
                                                               FirstCount first_count) {
    validate(dataset);
    std::vector<std::vector<std::size_t>> by_class(dataset.class_names.size());
    for (std::size_t i = 0; i < dataset.records.size(); ++i)
        by_class[dataset.records[i].label].push_back(i);

    std::vector<bool> to_first(dataset.records.size(), false);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        auto engine = make_engine(seed, stream_id(purpose, {c}));
        std::shuffle(members.begin(), members.end(), engine);
        const std::size_t n_first = first_count(members.size());
        for (std::size_t j = 0; j < n_first; ++j) to_first[members[j]] = true;
    }

    auto first = dataset.empty_like();
    auto second = dataset.empty_like();
    for (std::size_t i = 0; i < dataset.records.size(); ++i)
        (to_first[i] ? first : second).records.push_back(dataset.records[i]);
    return {std::move(first), std::move(second)};
}

}  // namespace

const char* to_string(DatasetErrc code) noexcept {
    switch (code) {
        case DatasetErrc::io: return "i/o error";
        case DatasetErrc::bad_magic: return "bad magic";
        case DatasetErrc::version_mismatch: return "version mismatch";
        case DatasetErrc::truncated: return "truncated";
        case DatasetErrc::label_out_of_range: return "label out of range";
        case DatasetErrc::invalid: return "invalid dataset";
    }
    return "unknown";
}

EmbeddingDataset EmbeddingDataset::empty_like() const {
    EmbeddingDataset out;
    out.dim = dim;
    out.image_height = image_height;
    out.image_width = image_width;
    out.image_channels = image_channels;
    out.class_names = class_names;
    return out;
}

std::vector<std::size_t> EmbeddingDataset::class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& r : records)
        if (r.label < counts.size()) ++counts[r.label];
    return counts;
}

void validate(const EmbeddingDataset& dataset) {
    if (dataset.dim == 0) throw DatasetError(DatasetErrc::invalid, "dim must be positive");
    if (dataset.image_height == 0 || dataset.image_width == 0 || dataset.image_channels == 0)
        throw DatasetError(DatasetErrc::invalid, "image geometry must be positive");
    for (const auto& name : dataset.class_names)
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw DatasetError(DatasetErrc::invalid, "class name longer than 65535 bytes");
    if (dataset.records.size() > std::numeric_limits<std::uint32_t>::max())
        throw DatasetError(DatasetErrc::invalid, "too many records");

    std::unordered_set<std::uint32_t> ids;
    ids.reserve(dataset.records.size());
    for (const auto& r : dataset.records) {
        if (r.label >= dataset.class_names.size())
            throw DatasetError(DatasetErrc::label_out_of_range,
                               "record " + std::to_string(r.image_id) + " has label " +
                                   std::to_string(r.label) + " with " +
                                   std::to_string(dataset.class_names.size()) + " classes");
        if (r.vector.size() != dataset.dim)
            throw DatasetError(DatasetErrc::invalid, "record " + std::to_string(r.image_id) +
                                                         " has length " +
                                                         std::to_string(r.vector.size()) +
                                                         ", expected " + std::to_string(dataset.dim));
        if (!std::all_of(r.vector.begin(), r.vector.end(), [](float x) { return std::isfinite(x); }))
            throw DatasetError(DatasetErrc::invalid,
                               "record " + std::to_string(r.image_id) + " has a non-finite component");
        if (!ids.insert(r.image_id).second)
            throw DatasetError(DatasetErrc::invalid,
                               "duplicate image_id " + std::to_string(r.image_id));
    }
}

void save_dataset(const EmbeddingDataset& dataset, std::ostream& out) {
    validate(dataset);
    out.write(kDatasetMagic, sizeof kDatasetMagic);
    put_u32(out, kDatasetVersion);
    put_u32(out, dataset.dim);
    put_u32(out, dataset.image_height);
    put_u32(out, dataset.image_width);
    put_u32(out, dataset.image_channels);
    put_u32(out, static_cast<std::uint32_t>(dataset.class_names.size()));
    for (const auto& name : dataset.class_names) {
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    put_u32(out, static_cast<std::uint32_t>(dataset.records.size()));
    for (const auto& r : dataset.records) {
        put_u32(out, r.image_id);
        put_u32(out, r.label);
        for (float x : r.vector) put_f32(out, x);
    }
    if (!out) throw DatasetError(DatasetErrc::io, "write failed");
}

void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError(DatasetErrc::io, "cannot open " + path.string() + " for writing");
    save_dataset(dataset, out);
    out.flush();
    if (!out) throw DatasetError(DatasetErrc::io, "write to " + path.string() + " failed");
}

EmbeddingDataset load_dataset(std::istream& in) {
    Reader rd(in);
    char magic[4];
    rd.bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kDatasetMagic))
        throw DatasetError(DatasetErrc::bad_magic, "expected \"SEMB\"");
    const auto version = rd.u32("version");
    if (version != kDatasetVersion)
        throw DatasetError(DatasetErrc::version_mismatch,
                           "file version " + std::to_string(version) + ", supported " +
                               std::to_string(kDatasetVersion));

    EmbeddingDataset ds;
    ds.dim = rd.u32("dim");
    ds.image_height = rd.u32("image_height");
    ds.image_width = rd.u32("image_width");
    ds.image_channels = rd.u32("image_channels");
    if (ds.dim == 0) throw DatasetError(DatasetErrc::invalid, "dim must be positive");

    const auto class_count = rd.u32("class_count");
    for (std::uint32_t c = 0; c < class_count; ++c) {
        const auto len = rd.u16("class name length");
        std::string name(len, '\0');
        rd.bytes(name.data(), len, "class name");
        ds.class_names.push_back(std::move(name));
    }

    const auto record_count = rd.u32("record_count");
    // Do not trust record_count for a large up-front allocation.
    ds.records.reserve(std::min<std::uint32_t>(record_count, 1u << 16));
    for (std::uint32_t i = 0; i < record_count; ++i) {
        EmbeddingRecord r;
        r.image_id = rd.u32("record image_id");
        r.label = rd.u32("record label");
        if (r.label >= class_count)
            throw DatasetError(DatasetErrc::label_out_of_range,
                               "record " + std::to_string(r.image_id) + " has label " +
                                   std::to_string(r.label) + " with " +
                                   std::to_string(class_count) + " classes");
        r.vector.resize(ds.dim);
        for (auto& x : r.vector) x = rd.f32("record vector");
        ds.records.push_back(std::move(r));
    }
    if (!rd.at_end()) throw DatasetError(DatasetErrc::invalid, "trailing bytes after last record");
    validate(ds);
    return ds;
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(DatasetErrc::io, "cannot open " + path.string());
    return load_dataset(in);
}

std::pair<EmbeddingDataset, EmbeddingDataset> split_train_val(const EmbeddingDataset& dataset,
                                                              const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw std::invalid_argument("split_train_val: train_fraction must lie strictly in (0, 1)");
    require_min_per_class(dataset, "split_train_val");
    const double fraction = spec.train_fraction;
    return stratified_split(dataset, spec.seed, "split-train-val", [fraction](std::size_t n) {
        return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    });
}

std::pair<EmbeddingDataset, EmbeddingDataset> split_transmit_kb(const EmbeddingDataset& dataset,
                                                                std::uint64_t seed) {
    require_min_per_class(dataset, "split_transmit_kb");
    return stratified_split(dataset, seed, "split-transmit-kb",
                            [](std::size_t n) { return (n + 1) / 2; });
}

EmbeddingDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("generate_synthetic: num_classes < 2");
    if (spec.per_class < 2) throw std::invalid_argument("generate_synthetic: per_class < 2");
    if (spec.dim < 2) throw std::invalid_argument("generate_synthetic: dim < 2");
    if (!(spec.intra_spread >= 0.0) || !std::isfinite(spec.intra_spread))
        throw std::invalid_argument("generate_synthetic: intra_spread must be finite and >= 0");
    if (static_cast<std::uint64_t>(spec.num_classes) * spec.per_class >
        std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("generate_synthetic: too many records");

    EmbeddingDataset ds;
    ds.dim = spec.dim;

    for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
        ds.class_names.push_back("class_" + std::to_string(c));

        auto centroid_rng = make_engine(spec.seed, stream_id("synthetic-centroid", {c}));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> centroid(spec.dim);
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& x : centroid) {
                x = normal(centroid_rng);
                norm2 += x * x;
            }
        } while (norm2 == 0.0);
        const double inv_norm = 1.0 / std::sqrt(norm2);
        for (auto& x : centroid) x *= inv_norm;

        for (std::uint32_t j = 0; j < spec.per_class; ++j) {
            const std::uint32_t id = c * spec.per_class + j;
            auto noise_rng = make_engine(spec.seed, stream_id("synthetic-record", {id}));
            normal.reset();
            EmbeddingRecord r{id, c, std::vector<float>(spec.dim)};
            for (std::uint32_t d = 0; d < spec.dim; ++d) {
                const double noise = spec.intra_spread > 0.0 ? spec.intra_spread * normal(noise_rng) : 0.0;
                r.vector[d] = static_cast<float>(centroid[d] + noise);
            }
            ds.records.push_back(std::move(r));
        }
    }
    return ds;
}

}  // namespace semlink
