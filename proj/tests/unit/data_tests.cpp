#include <doctest.h>

#include <cstdio>
#include <set>
#include <string>

#include "tdcd/data.hpp"
#include "tdcd/errors.hpp"
#include "tdcd/prng.hpp"

using namespace tdcd;

namespace {

Dataset random_dataset(std::size_t m, std::size_t d, std::uint64_t seed) {
    Dataset ds;
    ds.features = Matrix(m, d);
    ds.labels.resize(m);
    Stream g(seed, kTagProbe, 77);
    for (double& v : ds.features.data()) v = g.normal();
    for (double& y : ds.labels) y = g.normal();
    return ds;
}

std::string temp_path(const char* name) {
    return std::string("unit_tmp_") + name;
}

} // namespace

TEST_CASE("split_vertical produces contiguous near-equal ranges") {
    const auto even = split_vertical(76, {19, 19, 19, 19});
    REQUIRE(even.size() == 4);
    CHECK(even[0].columns.front() == 0);
    CHECK(even[0].columns.back() == 18);
    CHECK(even[3].columns.front() == 57);
    CHECK(even[3].columns.back() == 75);
    validate_partitions(even, 76);

    const auto uneven = split_vertical(10, {4, 3, 3});
    CHECK(uneven[1].columns == std::vector<int>{4, 5, 6});
    CHECK(uneven[2].columns == std::vector<int>{7, 8, 9});

    CHECK_THROWS_AS(split_vertical(10, {4, 4}), ConfigError);
    CHECK_THROWS_AS(split_vertical(10, {10, 0}), ConfigError);
    CHECK_THROWS_AS(split_vertical(10, {}), ConfigError);
}

TEST_CASE("validate_partitions rejects overlap and gaps") {
    std::vector<VerticalPartition> parts{{0, {0, 1}}, {1, {2, 3}}};
    CHECK_NOTHROW(validate_partitions(parts, 4));

    std::vector<VerticalPartition> overlap{{0, {0, 1}}, {1, {1, 2, 3}}};
    CHECK_THROWS_AS(validate_partitions(overlap, 4), ConfigError);

    std::vector<VerticalPartition> gap{{0, {0, 1}}, {1, {3}}};
    CHECK_THROWS_AS(validate_partitions(gap, 4), ConfigError);
}

TEST_CASE("shard_horizontal partitions the IDs deterministically") {
    const Dataset ds = random_dataset(10, 2, 3);
    const auto shards = shard_horizontal(ds, 0, 3, 99);
    REQUIRE(shards.size() == 3);
    CHECK(shards[0].owned_ids.size() == 4); // remainder goes to the lowest clients
    CHECK(shards[1].owned_ids.size() == 3);
    CHECK(shards[2].owned_ids.size() == 3);

    std::set<long> all;
    for (const auto& s : shards) {
        for (std::size_t i = 0; i < s.owned_ids.size(); ++i) {
            CHECK(all.insert(s.owned_ids[i]).second); // disjoint
            CHECK(s.labels[i] == ds.labels[static_cast<std::size_t>(s.owned_ids[i])]);
        }
    }
    CHECK(all.size() == 10); // covering

    const auto again = shard_horizontal(ds, 0, 3, 99);
    CHECK(again[1].owned_ids == shards[1].owned_ids);
    const auto other_silo = shard_horizontal(ds, 1, 3, 99);
    CHECK(other_silo[0].owned_ids != shards[0].owned_ids); // per-silo permutation

    CHECK_THROWS_AS(shard_horizontal(ds, 0, 0, 99), ConfigError);
    CHECK_THROWS_AS(shard_horizontal(ds, 0, 11, 99), ConfigError);
}

TEST_CASE("a 50k-sample silo with 50 clients gets 1000 IDs each") {
    Dataset ds;
    ds.features = Matrix(50000, 1);
    ds.labels.assign(50000, 0.0);
    const auto shards = shard_horizontal(ds, 0, 50, 1);
    REQUIRE(shards.size() == 50);
    for (const auto& s : shards) CHECK(s.owned_ids.size() == 1000);
}

TEST_CASE("owns and label_of follow the shard") {
    Dataset ds = random_dataset(6, 1, 4);
    const auto shards = shard_horizontal(ds, 0, 2, 5);
    const auto& s = shards[0];
    for (long id : s.owned_ids) {
        CHECK(s.owns(id));
        CHECK(s.label_of(id) == ds.labels[static_cast<std::size_t>(id)]);
    }
    for (long id : shards[1].owned_ids) {
        CHECK_FALSE(s.owns(id));
        CHECK_THROWS_AS(s.label_of(id), ConfigError);
    }
}

TEST_CASE("project keeps owned rows in batch order") {
    Dataset ds = random_dataset(8, 1, 6);
    const auto shards = shard_horizontal(ds, 0, 2, 7);
    EmbeddingBatch batch;
    batch.ids = {7, 0, 3, 5, 1};
    batch.values = Matrix(5, 2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            batch.values(i, c) = 10.0 * static_cast<double>(i) + static_cast<double>(c);

    const EmbeddingBatch mine = project(batch, shards[0]);
    REQUIRE(mine.size() <= batch.size());
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        if (!shards[0].owns(batch.ids[i])) continue;
        REQUIRE(cursor < mine.size());
        CHECK(mine.ids[cursor] == batch.ids[i]);
        CHECK(mine.values(cursor, 0) == batch.values(i, 0));
        CHECK(mine.values(cursor, 1) == batch.values(i, 1));
        ++cursor;
    }
    CHECK(cursor == mine.size());
}

TEST_CASE("csv round trip preserves every value exactly") {
    const Dataset ds = random_dataset(12, 3, 8);
    const std::string path = temp_path("roundtrip.csv");
    save_csv(path, ds, "label");
    const Dataset back = load_csv(path, "label");
    REQUIRE(back.sample_count() == 12);
    REQUIRE(back.feature_count() == 3);
    CHECK(back.features == ds.features);
    CHECK(back.labels == ds.labels);
    std::remove(path.c_str());
}

TEST_CASE("csv loader resolves the label column by name") {
    const std::string path = temp_path("labeled.csv");
    {
        FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("a,target,b\n1.5,9,2.5\n-0.5,8,0.25\n", f);
        std::fclose(f);
    }
    const Dataset ds = load_csv(path, "target");
    REQUIRE(ds.sample_count() == 2);
    REQUIRE(ds.feature_count() == 2);
    CHECK(ds.labels == std::vector<double>{9.0, 8.0});
    CHECK(ds.features(1, 0) == -0.5);
    CHECK(ds.features(1, 1) == 0.25);

    CHECK_THROWS_AS(load_csv(path, "missing"), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("csv loader reports malformed rows") {
    const std::string path = temp_path("bad.csv");
    {
        FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("a,label\n1.0,2.0\n3.0\n", f); // short row
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_csv(path, "label"), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("binary round trip is bitwise") {
    const Dataset ds = random_dataset(9, 4, 10);
    const std::string path = temp_path("roundtrip.bin");
    save_binary(path, ds);
    const Dataset back = load_binary(path);
    CHECK(back.features == ds.features);
    CHECK(back.labels == ds.labels);
    std::remove(path.c_str());
}

TEST_CASE("validate_dataset enforces label conventions") {
    Dataset ds = random_dataset(4, 2, 11);
    CHECK_NOTHROW(validate_dataset(ds, {LossKind::SquaredError, 1}));

    Dataset nan_ds = ds;
    nan_ds.features(2, 1) = std::nan("");
    CHECK_THROWS_AS(validate_dataset(nan_ds, {LossKind::SquaredError, 1}), NumericError);

    Dataset bin = ds;
    bin.labels = {0.0, 1.0, 1.0, 0.0};
    CHECK_NOTHROW(validate_dataset(bin, {LossKind::BinaryCrossEntropyWithLogit, 1}));
    bin.labels[2] = 0.5;
    CHECK_THROWS_AS(validate_dataset(bin, {LossKind::BinaryCrossEntropyWithLogit, 1}),
                    ConfigError);

    Dataset multi = ds;
    multi.labels = {0.0, 2.0, 1.0, 2.0};
    CHECK_NOTHROW(validate_dataset(multi, {LossKind::SoftmaxCrossEntropy, 3}));
    multi.labels[0] = 3.0;
    CHECK_THROWS_AS(validate_dataset(multi, {LossKind::SoftmaxCrossEntropy, 3}), ConfigError);
    multi.labels[0] = 1.5;
    CHECK_THROWS_AS(validate_dataset(multi, {LossKind::SoftmaxCrossEntropy, 3}), ConfigError);
}
