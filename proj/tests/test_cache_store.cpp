// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "edgetune/adapters_core.hpp"
#include "edgetune/cache_store.hpp"
#include "edgetune/hash.hpp"
#include "edgetune/model_cost.hpp"
#include "edgetune/rng.hpp"
#include "test_paths.hpp"

using namespace edgetune;

namespace {

std::string fresh_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("edgetune_cs_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

CacheEntry make_entry(std::uint64_t id, int tensors, std::int64_t n, std::int64_t d,
                      std::uint64_t seed) {
    Rng rng(seed);
    CacheEntry e;
    e.sample_id = id;
    e.seq_len = n;
    for (int t = 0; t < tensors; ++t) {
        Tensor x(n, d);
        for (auto& v : x.data) v = rng.gaussian();
        e.tensors.push_back(std::move(x));
    }
    return e;
}

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string two_blocks =
        "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
    CHECK(sha256_hex(two_blocks) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("put then get round-trips tensors bit for bit") {
    const auto dir = fresh_dir("roundtrip");
    CacheStore cache(dir, "fp-test", 3, 16, 8);
    const auto e = make_entry(42, 3, 8, 16, 1);
    cache.put(e);
    const auto back = cache.get(42);
    REQUIRE(back.has_value());
    REQUIRE(back->tensors.size() == 3);
    for (int t = 0; t < 3; ++t) CHECK(bitwise_equal(back->tensors[t], e.tensors[t]));
    std::filesystem::remove_all(dir);
}

TEST_CASE("getting an unknown id is a typed miss") {
    const auto dir = fresh_dir("miss");
    CacheStore cache(dir, "fp-test", 2, 8, 4);
    CHECK_FALSE(cache.get(999).has_value());
    CHECK_FALSE(cache.contains(999));
    std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted payload fails its checksum on read") {
    const auto dir = fresh_dir("corrupt");
    {
        CacheStore cache(dir, "fp-test", 2, 8, 4);
        cache.put(make_entry(7, 2, 4, 8, 2));
    }
    // flip one payload byte on disk
    {
        std::fstream f(dir + "/entries.bin",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(64);
        char c;
        f.seekg(64);
        f.get(c);
        f.seekp(64);
        f.put(static_cast<char>(c ^ 0x5a));
    }
    CacheStore cache(dir, "fp-test", 2, 8, 4);
    CHECK_THROWS_AS(cache.get(7), CacheError);
    CHECK_FALSE(cache.verify());
    std::filesystem::remove_all(dir);
}

TEST_CASE("clear removes entries and is idempotent") {
    const auto dir = fresh_dir("clear");
    CacheStore cache(dir, "fp-test", 2, 8, 4);
    cache.put(make_entry(1, 2, 4, 8, 3));
    CHECK(cache.entry_count() == 1);
    cache.clear();
    CHECK(cache.entry_count() == 0);
    CHECK_FALSE(cache.get(1).has_value());
    cache.clear();  // second clear is fine
    CHECK(cache.entry_count() == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("populate, clear and repopulate lands on the same file size") {
    const auto dir = fresh_dir("repop");
    CacheStore cache(dir, "fp-test", 2, 8, 4);
    for (int i = 0; i < 5; ++i) cache.put(make_entry(100 + i, 2, 4, 8, i));
    const auto first = cache.file_bytes();
    cache.clear();
    for (int i = 0; i < 5; ++i) cache.put(make_entry(100 + i, 2, 4, 8, i));
    CHECK(cache.file_bytes() == first);
    std::filesystem::remove_all(dir);
}

TEST_CASE("fingerprint mismatch refuses to serve any tensor") {
    const auto dir = fresh_dir("fp");
    {
        CacheStore cache(dir, "backbone-A", 2, 8, 4);
        cache.put(make_entry(5, 2, 4, 8, 9));
    }
    CHECK_THROWS_AS(CacheStore(dir, "backbone-B", 2, 8, 4), CacheMismatchError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("shape mismatches against the header are rejected") {
    const auto dir = fresh_dir("shape");
    CacheStore cache(dir, "fp-test", 3, 8, 4);
    CHECK_THROWS_AS(cache.put(make_entry(1, 2, 4, 8, 1)), CacheError);   // tensor count
    CHECK_THROWS_AS(cache.put(make_entry(1, 3, 4, 16, 1)), CacheError);  // width
    std::filesystem::remove_all(dir);
}

TEST_CASE("payload bytes follow the exact size law") {
    const auto spec = load_model_spec(data_path("toy_spec.json"));
    const auto bb = build_backbone(spec, 7);
    const auto dir = fresh_dir("sizelaw");
    CacheStore cache(dir, bb.fingerprint(), spec.num_layers + 1, spec.hidden_size, 4);
    Rng rng(5);
    const int samples = 3;
    for (int i = 0; i < samples; ++i) {
        std::vector<int> tokens;
        for (int t = 0; t < 4; ++t) tokens.push_back(static_cast<int>(rng.below(32)));
        CacheEntry e;
        e.sample_id = sample_id_for_tokens(tokens);
        e.seq_len = 4;
        e.tensors = backbone_forward(bb, tokens);
        cache.put(e);
    }
    // sum over samples of (L+1) * n * d * 8, exactly
    const std::int64_t want = cache_storage_bytes(spec, samples, 4, spec.num_layers + 1);
    CHECK(cache.header().payload_bytes == want);
    CHECK(want == samples * 3ll * 4 * 16 * 8);
    // and the files add only per-record headers plus the json header
    CHECK(cache.file_bytes() >= want);
    CHECK(cache.file_bytes() <= want + samples * 20 + 512);
    std::filesystem::remove_all(dir);
}

TEST_CASE("a production-sized spec keeps the file within 5% of the formula") {
    // Footprint-table dims (d=768, 25 tensor stack), a dozen 30-token entries.
    const auto dir = fresh_dir("prod");
    ModelSpec spec = load_model_spec(data_path("t5_base.json"));
    spec.bytes_per_scalar = 8;  // the store serializes 64-bit scalars
    CacheStore cache(dir, "fp-prod", spec.num_layers + 1, spec.hidden_size, 30);
    for (int i = 0; i < 12; ++i) cache.put(make_entry(i, spec.num_layers + 1, 30, 768, i));
    const double formula =
        static_cast<double>(cache_storage_bytes(spec, 12, 30, spec.num_layers + 1));
    const double actual = static_cast<double>(cache.file_bytes());
    CHECK(std::abs(actual - formula) / formula < 0.05);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reopening a cache restores the index from disk") {
    const auto dir = fresh_dir("reopen");
    {
        CacheStore cache(dir, "fp-test", 2, 8, 4);
        cache.put(make_entry(11, 2, 4, 8, 1));
        cache.put(make_entry(22, 2, 4, 8, 2));
    }
    CacheStore cache(dir, "fp-test", 2, 8, 4);
    CHECK(cache.entry_count() == 2);
    CHECK(cache.contains(11));
    CHECK(cache.contains(22));
    CHECK(cache.verify());
    std::filesystem::remove_all(dir);
}

TEST_CASE("sample ids key on token content") {
    const std::vector<int> a{1, 2, 3}, b{1, 2, 3}, c{3, 2, 1};
    CHECK(sample_id_for_tokens(a) == sample_id_for_tokens(b));
    CHECK(sample_id_for_tokens(a) != sample_id_for_tokens(c));
}
