#include "semlink/embedding_io.hpp"
#include "semlink/knowledge_base.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

using namespace semlink;

namespace {

std::string bytes_of(const EmbeddingDataset& ds) {
    std::ostringstream out(std::ios::binary);
    save_dataset(ds, out);
    return out.str();
}

EmbeddingDataset from_bytes(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return load_dataset(in);
}

DatasetErrc error_code_of(const std::string& bytes) {
    try {
        from_bytes(bytes);
    } catch (const DatasetError& e) {
        return e.code();
    }
    ADD_FAILURE() << "load succeeded";
    return DatasetErrc::io;
}

void le32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::set<std::uint32_t> ids_of(const EmbeddingDataset& ds) {
    std::set<std::uint32_t> ids;
    for (const auto& r : ds.records) ids.insert(r.image_id);
    return ids;
}

}  // namespace

TEST(EmbeddingIo, EmptyDatasetIsHeaderOnly) {
    EmbeddingDataset ds;
    const auto bytes = bytes_of(ds);
    // magic, version, dim, h, w, c, class count, record count
    ASSERT_EQ(bytes.size(), 4u + 4 * 6 + 4);
    EXPECT_EQ(bytes.substr(0, 4), "SEMB");
    EXPECT_EQ(bytes.substr(bytes.size() - 4), std::string(4, '\0'));
    EXPECT_EQ(from_bytes(bytes), ds);
}

TEST(EmbeddingIo, HandBuiltSingleRecordFile) {
    std::string file = "SEMB";
    le32(file, 1);   // version
    le32(file, 2);   // dim
    le32(file, 32);
    le32(file, 32);
    le32(file, 3);
    le32(file, 2);   // classes
    file += std::string("\x03\x00", 2) + "cat";
    file += std::string("\x03\x00", 2) + "dog";
    le32(file, 1);   // records
    le32(file, 7);   // image_id
    le32(file, 1);   // label
    le32(file, 0x3F800000u);  // 1.0f
    le32(file, 0xC0000000u);  // -2.0f

    const auto ds = from_bytes(file);
    EXPECT_EQ(ds.dim, 2u);
    EXPECT_EQ(ds.image_height, 32u);
    EXPECT_EQ(ds.image_channels, 3u);
    ASSERT_EQ(ds.class_names, (std::vector<std::string>{"cat", "dog"}));
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.records[0].image_id, 7u);
    EXPECT_EQ(ds.records[0].label, 1u);
    EXPECT_EQ(ds.records[0].vector, (std::vector<float>{1.0f, -2.0f}));
    EXPECT_EQ(bytes_of(ds), file);
}

TEST(EmbeddingIo, RoundTripIsBitExact) {
    auto ds = generate_synthetic({5, 7, 64, 0.3, 11});
    ds.records[3].vector[5] = -0.0f;
    ds.records[4].vector[0] = 1e-40f;  // subnormal
    const auto back = from_bytes(bytes_of(ds));
    ASSERT_EQ(back, ds);
    EXPECT_TRUE(std::signbit(back.records[3].vector[5]));
}

TEST(EmbeddingIo, RoundTripThroughFile) {
    test_support::TempDir dir("io");
    const auto ds = test_support::tiny_dataset(8, 3, 4);
    save_dataset(ds, dir / "a.semb");
    EXPECT_EQ(load_dataset(dir / "a.semb"), ds);
}

TEST(EmbeddingIo, SavingIsDeterministic) {
    const auto ds = generate_synthetic({4, 5, 32, 0.1, 3});
    EXPECT_EQ(bytes_of(ds), bytes_of(ds));
}

TEST(EmbeddingIo, BadMagic) {
    auto bytes = bytes_of(test_support::tiny_dataset(4, 2, 2));
    bytes[0] = 'X';
    EXPECT_EQ(error_code_of(bytes), DatasetErrc::bad_magic);
}

TEST(EmbeddingIo, VersionMismatch) {
    auto bytes = bytes_of(test_support::tiny_dataset(4, 2, 2));
    bytes[4] = 2;
    EXPECT_EQ(error_code_of(bytes), DatasetErrc::version_mismatch);
}

TEST(EmbeddingIo, TruncatedMidRecord) {
    const auto bytes = bytes_of(test_support::tiny_dataset(4, 2, 2));
    EXPECT_EQ(error_code_of(bytes.substr(0, bytes.size() - 6)), DatasetErrc::truncated);
    EXPECT_EQ(error_code_of(bytes.substr(0, 10)), DatasetErrc::truncated);
}

TEST(EmbeddingIo, LabelOutOfRangeOnLoad) {
    auto ds = test_support::tiny_dataset(4, 2, 2);
    auto bytes = bytes_of(ds);
    // the label of the last record sits right before its 4 floats
    const std::size_t label_at = bytes.size() - 4 * 4 - 4;
    bytes[label_at] = 2;
    EXPECT_EQ(error_code_of(bytes), DatasetErrc::label_out_of_range);
}

TEST(EmbeddingIo, TrailingBytesRejected) {
    auto bytes = bytes_of(test_support::tiny_dataset(4, 2, 2));
    bytes.push_back('\0');
    EXPECT_EQ(error_code_of(bytes), DatasetErrc::invalid);
}

TEST(EmbeddingIo, SaveValidatesInvariants) {
    auto ds = test_support::tiny_dataset(4, 2, 2);
    ds.records[1].image_id = ds.records[0].image_id;
    EXPECT_THROW(bytes_of(ds), DatasetError);

    ds = test_support::tiny_dataset(4, 2, 2);
    ds.records[0].vector[1] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(bytes_of(ds), DatasetError);

    ds = test_support::tiny_dataset(4, 2, 2);
    ds.records[0].vector.pop_back();
    EXPECT_THROW(bytes_of(ds), DatasetError);

    ds = test_support::tiny_dataset(4, 2, 2);
    ds.records[0].label = 5;
    try {
        bytes_of(ds);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.code(), DatasetErrc::label_out_of_range);
    }
}

TEST(EmbeddingIo, MissingFileIsIoError) {
    try {
        load_dataset(std::filesystem::path("/nonexistent/x.semb"));
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.code(), DatasetErrc::io);
    }
}

TEST(Split, EightTwentyPerClass) {
    const auto ds = generate_synthetic({5, 100, 16, 0.1, 1});
    const auto [train, val] = split_train_val(ds, {9, 0.8});
    for (auto n : train.class_counts()) EXPECT_EQ(n, 80u);
    for (auto n : val.class_counts()) EXPECT_EQ(n, 20u);
}

TEST(Split, TransmitKbHalves) {
    const auto ds = generate_synthetic({5, 100, 16, 0.1, 1});
    const auto [transmit, kb] = split_transmit_kb(ds, 4);
    for (auto n : transmit.class_counts()) EXPECT_EQ(n, 50u);
    for (auto n : kb.class_counts()) EXPECT_EQ(n, 50u);
}

TEST(Split, OddClassRoundsTowardTransmit) {
    const auto ds = generate_synthetic({2, 3, 4, 0.1, 1});
    const auto [transmit, kb] = split_transmit_kb(ds, 4);
    EXPECT_EQ(transmit.class_counts(), (std::vector<std::size_t>{2, 2}));
    EXPECT_EQ(kb.class_counts(), (std::vector<std::size_t>{1, 1}));
}

TEST(Split, ExactPartitionKeepingOrder) {
    const auto ds = generate_synthetic({7, 13, 8, 0.1, 2});
    for (std::uint64_t seed : {0u, 1u, 77u}) {
        for (const auto& [a, b] : {split_train_val(ds, {seed, 0.8}), split_transmit_kb(ds, seed)}) {
            EXPECT_EQ(a.size() + b.size(), ds.size());
            auto ia = ids_of(a), ib = ids_of(b);
            std::vector<std::uint32_t> common;
            std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(common));
            EXPECT_TRUE(common.empty());
            ia.insert(ib.begin(), ib.end());
            EXPECT_EQ(ia, ids_of(ds));
            EXPECT_EQ(a.class_names, ds.class_names);
            // each output is a subsequence of the input
            for (const auto* part : {&a, &b}) {
                std::size_t at = 0;
                for (const auto& r : part->records) {
                    while (at < ds.size() && ds.records[at].image_id != r.image_id) ++at;
                    ASSERT_LT(at, ds.size());
                    EXPECT_EQ(ds.records[at], r);
                }
            }
        }
    }
}

TEST(Split, SeededAndReproducible) {
    const auto ds = generate_synthetic({4, 20, 8, 0.1, 2});
    EXPECT_EQ(split_train_val(ds, {5, 0.8}), split_train_val(ds, {5, 0.8}));
    EXPECT_EQ(split_transmit_kb(ds, 5), split_transmit_kb(ds, 5));
    EXPECT_NE(split_train_val(ds, {5, 0.8}).first, split_train_val(ds, {6, 0.8}).first);
}

TEST(Split, RejectsTinyClassesAndBadFractions) {
    auto ds = generate_synthetic({3, 4, 8, 0.1, 2});
    ds.class_names.push_back("empty");
    EXPECT_THROW(split_transmit_kb(ds, 1), std::invalid_argument);
    const auto ok = generate_synthetic({3, 4, 8, 0.1, 2});
    EXPECT_THROW(split_train_val(ok, {1, 1.5}), std::invalid_argument);
    EXPECT_THROW(split_train_val(ok, {1, -0.1}), std::invalid_argument);
}

TEST(Synthetic, ZeroSpreadGivesCentroids) {
    const auto ds = generate_synthetic({6, 5, 32, 0.0, 8});
    for (const auto& r : ds.records) {
        const auto& first = ds.records[r.label * 5].vector;
        EXPECT_EQ(r.vector, first);
        double norm = 0;
        for (float x : r.vector) norm += double(x) * x;
        EXPECT_NEAR(norm, 1.0, 1e-5);
    }
}

TEST(Synthetic, ShapeAndIds) {
    const auto ds = generate_synthetic({20, 50, 512, 0.05, 1});
    EXPECT_EQ(ds.size(), 1000u);
    EXPECT_EQ(ds.class_names.size(), 20u);
    EXPECT_EQ(ds.class_names[3], "class_3");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(ds.records[i].image_id, i);
        EXPECT_EQ(ds.records[i].label, i / 50);
    }
    EXPECT_NO_THROW(validate(ds));
}

TEST(Synthetic, Deterministic) {
    EXPECT_EQ(generate_synthetic({4, 6, 16, 0.2, 3}), generate_synthetic({4, 6, 16, 0.2, 3}));
    EXPECT_NE(generate_synthetic({4, 6, 16, 0.2, 3}), generate_synthetic({4, 6, 16, 0.2, 4}));
}

TEST(Synthetic, DisjointSelfRetrievalAtLeast99Percent) {
    const auto ds = generate_synthetic({20, 50, 512, 0.05, 1});
    const auto [transmit, kb_set] = split_transmit_kb(ds, 2);
    const auto kb = KnowledgeBase::build(kb_set);
    std::size_t hits = 0;
    for (const auto& r : transmit.records) hits += brute_force_search(kb, r.vector, 1)[0].label == r.label;
    EXPECT_GE(static_cast<double>(hits) / transmit.size(), 0.99);
}
