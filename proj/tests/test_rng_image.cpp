#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

#include "helpers.hpp"
#include "pseudoscene/image.hpp"
#include "pseudoscene/rng.hpp"

namespace rng = pseudoscene::rng;
namespace img = pseudoscene::image;

TEST_CASE("splitmix64 known answers", "[rng]") {
    // Reference outputs for the widely published seed-0 sequence.
    rng::SplitMix64 gen{0};
    CHECK(gen.next() == 0xE220A8397B1DCDAFull);
    CHECK(gen.next() == 0x6E789E6AA1B965F4ull);
    CHECK(gen.next() == 0x06C45D188009454Full);
}

TEST_CASE("bounded draws are in range and deterministic", "[rng]") {
    rng::SplitMix64 a{987654321};
    rng::SplitMix64 b{987654321};
    for (int i = 0; i < 10000; ++i) {
        const std::uint64_t bound = 1 + (i % 97);
        const std::uint64_t v = a.next_below(bound);
        CHECK(v < bound);
        CHECK(v == b.next_below(bound));
    }
}

TEST_CASE("bounded draws are roughly uniform", "[rng]") {
    rng::SplitMix64 gen{2024};
    const int buckets = 10;
    const int draws = 100000;
    std::vector<int> counts(buckets, 0);
    for (int i = 0; i < draws; ++i) {
        ++counts[gen.next_below(buckets)];
    }
    const double expected = static_cast<double>(draws) / buckets;
    const double sigma = std::sqrt(expected * (1.0 - 1.0 / buckets));
    for (int count : counts) {
        CHECK(std::abs(count - expected) < 4.0 * sigma);
    }
}

TEST_CASE("substreams are reproducible and distinct", "[rng]") {
    auto s0 = rng::stream_for(99, 0);
    auto s0_again = rng::stream_for(99, 0);
    auto s1 = rng::stream_for(99, 1);
    bool any_diff = false;
    for (int i = 0; i < 16; ++i) {
        const auto a = s0.next();
        CHECK(a == s0_again.next());
        if (a != s1.next()) {
            any_diff = true;
        }
    }
    CHECK(any_diff);
}

TEST_CASE("consecutive substreams do not share a shifted prefix", "[rng]") {
    // Draw 8 values from stream i and stream i+1; no window of one may
    // reproduce the other shifted by one draw.
    auto a = rng::stream_for(7, 3);
    auto b = rng::stream_for(7, 4);
    std::vector<std::uint64_t> va, vb;
    for (int i = 0; i < 8; ++i) {
        va.push_back(a.next());
        vb.push_back(b.next());
    }
    int matches = 0;
    for (int i = 0; i + 1 < 8; ++i) {
        if (va[i + 1] == vb[i]) {
            ++matches;
        }
    }
    CHECK(matches == 0);
}

TEST_CASE("identity resize copies pixels exactly", "[image]") {
    std::mt19937_64 gen(77);
    img::Image src;
    src.width = 37;
    src.height = 23;
    src.rgb.resize(3u * 37 * 23);
    for (auto& byte : src.rgb) {
        byte = static_cast<std::uint8_t>(gen());
    }
    CHECK(img::bilinear_resize(src, 37, 23) == src);
}

TEST_CASE("solid images stay solid at any size", "[image]") {
    const auto src = img::Image::solid(50, 40, 12, 200, 99);
    for (auto [w, h] : {std::pair{25, 20}, {100, 80}, {33, 77}, {1, 1}}) {
        const auto dst = img::bilinear_resize(src, w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                REQUIRE(dst.at(x, y, 0) == 12);
                REQUIRE(dst.at(x, y, 1) == 200);
                REQUIRE(dst.at(x, y, 2) == 99);
            }
        }
    }
}

TEST_CASE("resize matches an independent bilinear reference", "[image]") {
    std::mt19937_64 gen(3);
    img::Image src;
    src.width = 100;
    src.height = 80;
    src.rgb.resize(3u * 100 * 80);
    for (auto& byte : src.rgb) {
        byte = static_cast<std::uint8_t>(gen());
    }
    for (auto [w, h] : {std::pair{50, 50}, {64, 64}, {200, 160}, {13, 57}}) {
        const auto dst = img::bilinear_resize(src, w, h);
        const auto ref = testutil::reference_resize(src, w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    REQUIRE(std::abs(int(dst.at(x, y, c)) - int(ref.at(x, y, c))) <= 1);
                }
            }
        }
    }
}

TEST_CASE("resize rejects bad arguments", "[image]") {
    img::Image empty;
    CHECK_THROWS_AS(img::bilinear_resize(empty, 10, 10), pseudoscene::InvalidArgument);
    const auto src = img::Image::solid(4, 4, 0, 0, 0);
    CHECK_THROWS_AS(img::bilinear_resize(src, 0, 10), pseudoscene::InvalidArgument);
}

TEST_CASE("memory loader returns registered images and rejects unknown ids", "[image]") {
    img::MemoryLoader loader;
    loader.put(5, img::Image::solid(8, 8, 1, 2, 3));
    CHECK(loader.load(5).at(0, 0, 1) == 2);
    CHECK_THROWS_AS(loader.load(6), pseudoscene::IoError);
}
