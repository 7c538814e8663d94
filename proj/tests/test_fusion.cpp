#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "openrgbt/error.hpp"
#include "openrgbt/fusion.hpp"
#include "openrgbt/image_io.hpp"
#include "support.hpp"

using namespace openrgbt;

namespace {

ImagePair random_pair(std::mt19937_64& rng, int w, int h) {
    return ImagePair(testing::random_raster(rng, w, h, 3), testing::random_raster(rng, w, h, 1), "p");
}

// Two-pass variance over the clipped window, in floating point.
double brute_variance(const std::vector<double>& plane, int w, int h, int x, int y, int window) {
    const int half = window / 2;
    double sum = 0.0;
    int n = 0;
    for (int yy = std::max(0, y - half); yy <= std::min(h - 1, y + half); ++yy) {
        for (int xx = std::max(0, x - half); xx <= std::min(w - 1, x + half); ++xx) {
            sum += plane[static_cast<std::size_t>(yy) * w + xx];
            ++n;
        }
    }
    const double mean = sum / n;
    double acc = 0.0;
    for (int yy = std::max(0, y - half); yy <= std::min(h - 1, y + half); ++yy) {
        for (int xx = std::max(0, x - half); xx <= std::min(w - 1, x + half); ++xx) {
            const double d = plane[static_cast<std::size_t>(yy) * w + xx] - mean;
            acc += d * d;
        }
    }
    return acc / n;
}

// Independent evaluation of the reference weight heuristic.
std::vector<double> oracle_weights(const ImagePair& pair, int window, double blend) {
    const int w = pair.width();
    const int h = pair.height();
    std::vector<double> luma(pair.rgb().pixel_count());
    std::vector<double> thermal(luma.size());
    double mean = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto p = static_cast<std::size_t>(y) * w + x;
            luma[p] = 0.299 * pair.rgb().at(x, y, 0) + 0.587 * pair.rgb().at(x, y, 1) + 0.114 * pair.rgb().at(x, y, 2);
            thermal[p] = pair.thermal().at(x, y);
            mean += luma[p];
        }
    }
    mean /= static_cast<double>(luma.size());
    const double global = 1.0 - std::abs(mean - 127.5) / 127.5;
    std::vector<double> out(luma.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double vr = brute_variance(luma, w, h, x, y, window);
            const double vt = brute_variance(thermal, w, h, x, y, window);
            const double local = (vr + vt) > 1e-12 ? vr / (vr + vt) : 0.5;
            out[static_cast<std::size_t>(y) * w + x] = (1.0 - blend) * local + blend * global;
        }
    }
    return out;
}

} // namespace

TEST_CASE("image pair validation") {
    CHECK_THROWS_AS(ImagePair(Raster(4, 4, 1), Raster(4, 4, 1)), InvalidInput);
    CHECK_THROWS_AS(ImagePair(Raster(4, 4, 3), Raster(4, 4, 3)), InvalidInput);
    CHECK_THROWS_AS(ImagePair(Raster(4, 4, 3), Raster(4, 5, 1)), DimensionMismatch);
    CHECK_THROWS_AS(WeightMap(2, 1, std::vector<double>{0.5, 1.5}), InvalidInput);
}

TEST_CASE("fuse examples") {
    Raster rgb(1, 1, 3);
    rgb.at(0, 0, 0) = 200;
    rgb.at(0, 0, 1) = 100;
    rgb.at(0, 0, 2) = 0;
    const ImagePair pair(rgb, Raster(1, 1, 1, 100));
    const Raster f = fuse(pair, WeightMap(1, 1, 0.5));
    CHECK(f.at(0, 0, 0) == 150);
    CHECK(f.at(0, 0, 1) == 100);
    CHECK(f.at(0, 0, 2) == 50);

    std::mt19937_64 rng(4);
    const ImagePair p = random_pair(rng, 13, 7);
    CHECK(fuse(p, WeightMap(13, 7, 1.0)) == p.rgb());
    const Raster gray = fuse(p, WeightMap(13, 7, 0.0));
    for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 13; ++x) {
            for (int c = 0; c < 3; ++c) {
                REQUIRE(gray.at(x, y, c) == p.thermal().at(x, y));
            }
        }
    }
    CHECK_THROWS_AS(fuse(p, WeightMap(12, 7, 0.5)), DimensionMismatch);
}

TEST_CASE("fusion convexity on random pairs") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const int w = 1 + static_cast<int>(rng() % 20);
        const int h = 1 + static_cast<int>(rng() % 20);
        const ImagePair p = random_pair(rng, w, h);
        std::vector<double> weights(static_cast<std::size_t>(w) * h);
        for (auto& v : weights) {
            v = u(rng);
        }
        const WeightMap wm(w, h, weights);
        const Raster f = fuse(p, wm);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int t = p.thermal().at(x, y);
                for (int c = 0; c < 3; ++c) {
                    const int r = p.rgb().at(x, y, c);
                    REQUIRE(f.at(x, y, c) >= std::min(r, t) - 1);
                    REQUIRE(f.at(x, y, c) <= std::max(r, t) + 1);
                }
            }
        }
    }
}

TEST_CASE("fuse is monotone in the weight where rgb >= thermal") {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 200; ++i) {
        Raster rgb(1, 1, 3);
        const int t = static_cast<int>(rng() % 256);
        for (int c = 0; c < 3; ++c) {
            rgb.at(0, 0, c) = static_cast<std::uint8_t>(t + static_cast<int>(rng() % (256 - t)));
        }
        const ImagePair p(rgb, Raster(1, 1, 1, static_cast<std::uint8_t>(t)));
        int previous[3] = {-1, -1, -1};
        for (int k = 0; k <= 20; ++k) {
            const Raster f = fuse(p, WeightMap(1, 1, k / 20.0));
            for (int c = 0; c < 3; ++c) {
                REQUIRE(f.at(0, 0, c) >= previous[c]);
                previous[c] = f.at(0, 0, c);
            }
        }
    }
}

TEST_CASE("windowed variance matches a brute-force sliding window") {
    std::mt19937_64 rng(29);
    for (int window : {3, 5, 9}) {
        const int w = 23;
        const int h = 17;
        std::vector<std::int64_t> plane(static_cast<std::size_t>(w) * h);
        std::vector<double> as_double(plane.size());
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane[i] = static_cast<std::int64_t>(rng() % 255000);
            as_double[i] = static_cast<double>(plane[i]);
        }
        const auto fast = windowed_variance(plane, w, h, window);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double expected = brute_variance(as_double, w, h, x, y, window);
                REQUIRE(fast[static_cast<std::size_t>(y) * w + x] == doctest::Approx(expected).epsilon(1e-9));
            }
        }
    }
    const std::vector<std::int64_t> plane(4, 0);
    CHECK_THROWS_AS(windowed_variance(plane, 2, 2, 4), InvalidInput);
    CHECK_THROWS_AS(windowed_variance(plane, 2, 2, 1), InvalidInput);
}

TEST_CASE("reference weights on a checkerboard rgb and flat thermal match the oracle") {
    Raster rgb(20, 16, 3);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 20; ++x) {
            const std::uint8_t v = ((x / 2 + y / 2) % 2) ? 220 : 30;
            for (int c = 0; c < 3; ++c) {
                rgb.at(x, y, c) = v;
            }
        }
    }
    const ImagePair pair(rgb, Raster(20, 16, 1, 90));
    const WeightMap wm = reference_weights(pair, {9, 0.5});
    const auto oracle = oracle_weights(pair, 9, 0.5);
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        REQUIRE(wm.weights()[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
    }
}

TEST_CASE("reference weights match the oracle on random pairs") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 10; ++i) {
        const ImagePair pair = random_pair(rng, 15, 11);
        const WeightMap wm = reference_weights(pair, {5, 0.3});
        const auto oracle = oracle_weights(pair, 5, 0.3);
        for (std::size_t p = 0; p < oracle.size(); ++p) {
            REQUIRE(std::abs(wm.weights()[p] - oracle[p]) < 1e-6);
        }
    }
}

TEST_CASE("reference weight examples and invariants") {
    std::mt19937_64 rng(37);
    SUBCASE("black rgb, textured thermal keeps weights at or below one half") {
        const ImagePair pair(Raster(16, 16, 3, 0), testing::random_raster(rng, 16, 16, 1));
        for (double v : reference_weights(pair).weights()) {
            REQUIRE(v <= 0.5);
        }
    }
    SUBCASE("identical content gives a local term of exactly one half") {
        const Raster t = testing::random_raster(rng, 16, 12, 1);
        Raster rgb(16, 12, 3);
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 16; ++x) {
                for (int c = 0; c < 3; ++c) {
                    rgb.at(x, y, c) = t.at(x, y);
                }
            }
        }
        for (double v : reference_weights(ImagePair(rgb, t), {9, 0.0}).weights()) {
            REQUIRE(v == 0.5);
        }
    }
    SUBCASE("range and offset invariance of the local term") {
        for (int i = 0; i < 20; ++i) {
            Raster rgb = testing::random_raster(rng, 12, 12, 3, 200);
            Raster t = testing::random_raster(rng, 12, 12, 1, 200);
            const WeightMap before = reference_weights(ImagePair(rgb, t), {7, 0.0});
            const auto shift = static_cast<std::uint8_t>(rng() % 56);
            for (auto& v : rgb.samples()) {
                v = static_cast<std::uint8_t>(v + shift);
            }
            for (auto& v : t.samples()) {
                v = static_cast<std::uint8_t>(v + shift);
            }
            const WeightMap after = reference_weights(ImagePair(rgb, t), {7, 0.0});
            for (std::size_t p = 0; p < before.weights().size(); ++p) {
                REQUIRE(before.weights()[p] >= 0.0);
                REQUIRE(before.weights()[p] <= 1.0);
                REQUIRE(after.weights()[p] == doctest::Approx(before.weights()[p]).epsilon(1e-12));
            }
        }
    }
    CHECK_THROWS_AS(reference_weights(random_pair(rng, 4, 4), {4, 0.5}), InvalidInput);
}

TEST_CASE("external fused images") {
    testing::TempDir dir("fused");
    std::mt19937_64 rng(41);
    const Raster fused = testing::random_raster(rng, 9, 6, 3);
    write_png(dir / "ok.png", fused);
    const Raster loaded = load_external_fused(dir / "ok.png");
    CHECK(loaded == fused);
    // Ingest then emit is byte-identical.
    write_png(dir / "again.png", loaded);
    CHECK(read_file_bytes(dir / "again.png") == read_file_bytes(dir / "ok.png"));

    write_png(dir / "gray.png", testing::random_raster(rng, 9, 6, 1));
    try {
        load_external_fused(dir / "gray.png");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("wrong channel count") != std::string::npos);
    }
    CHECK_THROWS_AS(load_external_fused(dir / "none.png"), IoError);
}

TEST_CASE("weight map files") {
    testing::TempDir dir("weights");
    Raster r(2, 1, 1);
    r.at(0, 0) = 0;
    r.at(1, 0) = 255;
    write_png(dir / "w.png", r);
    const WeightMap w = load_weight_map(dir / "w.png");
    CHECK(w.at(0, 0) == 0.0);
    CHECK(w.at(1, 0) == 1.0);
}
