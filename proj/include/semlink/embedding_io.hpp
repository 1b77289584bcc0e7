#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semlink {

/// One embedded image: the source image is referenced by id, never by pixels.
struct EmbeddingRecord {
    std::uint32_t image_id = 0;
    std::uint32_t label = 0;
    std::vector<float> vector;

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

/// A labeled set of embeddings plus the geometry of the source images, which
/// the bandwidth-ratio accounting needs.
struct EmbeddingDataset {
    std::uint32_t dim = 512;
    std::uint32_t image_height = 32;
    std::uint32_t image_width = 32;
    std::uint32_t image_channels = 3;
    std::vector<std::string> class_names;
    std::vector<EmbeddingRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }

    /// Same header (dim, geometry, classes) and no records.
    EmbeddingDataset empty_like() const;

    /// Record count per label, indexed by label.
    std::vector<std::size_t> class_counts() const;

    friend bool operator==(const EmbeddingDataset&, const EmbeddingDataset&) = default;
};

enum class DatasetErrc {
    io,
    bad_magic,
    version_mismatch,
    truncated,
    label_out_of_range,
    invalid,
};

const char* to_string(DatasetErrc code) noexcept;

class DatasetError : public std::runtime_error {
public:
    DatasetError(DatasetErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    DatasetErrc code() const noexcept { return code_; }

private:
    DatasetErrc code_;
};

inline constexpr char kDatasetMagic[4] = {'S', 'E', 'M', 'B'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Throws DatasetError(invalid | label_out_of_range) on the first violated invariant.
void validate(const EmbeddingDataset& dataset);

void save_dataset(const EmbeddingDataset& dataset, std::ostream& out);
void save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path);
EmbeddingDataset load_dataset(std::istream& in);
EmbeddingDataset load_dataset(const std::filesystem::path& path);

struct SplitSpec {
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

/// Per class, floor(train_fraction * n_c) records go to the first set.
/// Both outputs keep the input's record order.
std::pair<EmbeddingDataset, EmbeddingDataset> split_train_val(const EmbeddingDataset& dataset,
                                                              const SplitSpec& spec);

/// Per class, ceil(n_c / 2) records to the transmit set and the rest to the KB set.
std::pair<EmbeddingDataset, EmbeddingDataset> split_transmit_kb(const EmbeddingDataset& dataset,
                                                                std::uint64_t seed);

struct SyntheticSpec {
    std::uint32_t num_classes = 20;
    std::uint32_t per_class = 50;
    std::uint32_t dim = 512;
    double intra_spread = 0.05;
    std::uint64_t seed = 0;
};

/// Unit-norm class centroids drawn uniformly on the sphere, each record the
/// centroid plus isotropic Gaussian noise. Image ids are class-major.
EmbeddingDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace semlink
