#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"
#include "openrgbt/mock.hpp"
#include "openrgbt/segmentation.hpp"
#include "support.hpp"

using namespace openrgbt;

namespace {

InstanceResult instance(int w, int h, const PixelRect& rect, std::size_t cls, double score, std::uint32_t serial) {
    InstanceResult r;
    r.proposal.class_id = cls;
    r.proposal.initial_class_id = cls;
    r.proposal.score = score;
    r.proposal.serial = serial;
    r.mask = rle_encode(BinaryMask::from_rect(w, h, rect));
    return r;
}

InstanceResult random_instance(std::mt19937_64& rng, int w, int h, std::uint32_t serial) {
    InstanceResult r;
    r.proposal.class_id = 1 + rng() % 6;
    r.proposal.initial_class_id = r.proposal.class_id;
    // Few distinct scores so ties get exercised.
    r.proposal.score = static_cast<double>(rng() % 4) / 4.0;
    r.proposal.serial = serial;
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            m.set(x, y, rng() % 3 == 0);
        }
    }
    r.mask = rle_encode(m);
    return r;
}

struct FixedSegmenter : Segmenter {
    int width = 0;
    int height = 0;
    std::vector<MaskResult> segment(const std::string&, const Raster&, std::span<const Box> boxes) override {
        std::vector<MaskResult> out;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            out.push_back(MaskResult{rle_encode(BinaryMask::from_rect(width, height, to_pixel_rect(boxes[i], width, height))),
                                     "tag " + std::to_string(i)});
        }
        return out;
    }
};

} // namespace

TEST_CASE("composite examples") {
    SUBCASE("single instance") {
        const auto map = composite({instance(8, 8, {1, 2, 3, 4}, 2, 0.5, 0)}, 8, 8);
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const bool in = x >= 1 && x < 4 && y >= 2 && y < 6;
                REQUIRE(map.labels.at(x, y) == (in ? 2 : kUnlabeled));
            }
        }
    }
    SUBCASE("disjoint instances stay verbatim") {
        const auto map = composite({instance(8, 8, {0, 0, 2, 2}, 1, 0.5, 0), instance(8, 8, {5, 5, 3, 3}, 3, 0.9, 1)}, 8, 8);
        CHECK(map.labels.at(1, 1) == 1);
        CHECK(map.labels.at(7, 7) == 3);
        CHECK(map.labels.at(3, 3) == kUnlabeled);
    }
    SUBCASE("overlap goes to the higher score; 8x8 fixture") {
        // A (class 1, 0.9) covers columns 0..4 rows 0..4; B (class 2, 0.6) covers 3..7 x 3..7.
        const char* expected[8] = {
            "11111...", "11111...", "11111...", "11111222", "11111222", "...22222", "...22222", "...22222",
        };
        for (int flip = 0; flip < 2; ++flip) {
            std::vector<InstanceResult> list{instance(8, 8, {0, 0, 5, 5}, 1, 0.9, 0),
                                             instance(8, 8, {3, 3, 5, 5}, 2, 0.6, 1)};
            if (flip) {
                std::swap(list[0], list[1]);
            }
            const auto map = composite(list, 8, 8);
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 8; ++x) {
                    const char c = expected[y][x];
                    REQUIRE(map.labels.at(x, y) == (c == '.' ? kUnlabeled : c - '0'));
                }
            }
            CHECK(map.instances[0].proposal.serial == 0);
        }
    }
    SUBCASE("equal scores go to the lower serial") {
        const auto map = composite({instance(4, 4, {0, 0, 4, 4}, 3, 0.5, 1), instance(4, 4, {0, 0, 4, 4}, 2, 0.5, 0)}, 4, 4);
        CHECK(map.labels.at(0, 0) == 2);
    }
    SUBCASE("empty instance list") {
        const auto map = composite({}, 3, 2);
        CHECK(map.labels == Raster(3, 2, 1, kUnlabeled));
    }
    CHECK_THROWS_AS(composite({instance(8, 8, {0, 0, 1, 1}, 1, 0.5, 0)}, 8, 7), DimensionMismatch);
}

TEST_CASE("composite properties on random instances") {
    std::mt19937_64 rng(211);
    for (int iter = 0; iter < 200; ++iter) {
        const int w = 1 + static_cast<int>(rng() % 12);
        const int h = 1 + static_cast<int>(rng() % 12);
        std::vector<InstanceResult> list;
        const std::size_t n = rng() % 6;
        for (std::size_t i = 0; i < n; ++i) {
            list.push_back(random_instance(rng, w, h, static_cast<std::uint32_t>(i)));
        }
        const auto map = composite(list, w, h);
        auto shuffled = list;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        REQUIRE(composite(shuffled, w, h).labels == map.labels);
        REQUIRE(composite(list, w, h).labels == map.labels);

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                // Oracle: the best (score desc, serial asc) instance covering the pixel.
                const InstanceResult* best = nullptr;
                for (const auto& inst : list) {
                    if (!rle_decode(inst.mask).get(x, y)) {
                        continue;
                    }
                    if (best == nullptr || inst.proposal.score > best->proposal.score ||
                        (inst.proposal.score == best->proposal.score && inst.proposal.serial < best->proposal.serial)) {
                        best = &inst;
                    }
                }
                const int expected = best == nullptr ? kUnlabeled : static_cast<int>(best->proposal.class_id);
                REQUIRE(map.labels.at(x, y) == expected);
            }
        }
    }
}

TEST_CASE("segment_proposals") {
    FixedSegmenter seg;
    seg.width = 40;
    seg.height = 20;
    const Raster image(40, 20, 3);
    CHECK(segment_proposals(image, "x", {}, seg).empty());

    std::vector<DetectionProposal> props(3);
    for (int i = 0; i < 3; ++i) {
        props[i].box = Box(0.25 * i, 0.0, 0.1 * (i + 1), 0.5);
        props[i].class_id = props[i].initial_class_id = static_cast<std::size_t>(i + 1);
        props[i].serial = static_cast<std::uint32_t>(i);
    }
    const auto out = segment_proposals(image, "x", props, seg, SegmentOptions{0});
    REQUIRE(out.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(out[i].caption == "tag " + std::to_string(i));
        CHECK(out[i].proposal == props[i]);
        CHECK(rle_decode(out[i].mask) == BinaryMask::from_rect(40, 20, to_pixel_rect(props[i].box, 40, 20)));
    }

    seg.width = 39;
    CHECK_THROWS_AS(segment_proposals(image, "x", props, seg), DimensionMismatch);

    struct Leaky : Segmenter {
        std::vector<MaskResult> segment(const std::string&, const Raster&, std::span<const Box> boxes) override {
            return std::vector<MaskResult>(boxes.size(), MaskResult{RleMask(40, 20, {0, 800}), ""});
        }
    } leaky;
    CHECK_NOTHROW(segment_proposals(image, "x", props, leaky));
    CHECK_THROWS_AS(segment_proposals(image, "x", props, leaky, SegmentOptions{5}), InvalidInput);

    struct Short : Segmenter {
        std::vector<MaskResult> segment(const std::string&, const Raster&, std::span<const Box>) override { return {}; }
    } short_reply;
    CHECK_THROWS_AS(segment_proposals(image, "x", props, short_reply), BackendError);
}

TEST_CASE("mock segmenter returns planted geometry") {
    MockScene scene;
    scene.id = "seg";
    scene.width = 50;
    scene.height = 40;
    scene.objects = {{Box(0.2, 0.25, 0.4, 0.5), "car", {200, 20, 20}, 200}};
    auto set = std::make_shared<const MockSceneSet>(std::vector<MockScene>{scene});
    MockBackend mock(set, {"unlabeled", "car"});
    const Raster image = scene.render().rgb();
    const PixelRect planted = scene.object_rect(0);

    DetectionProposal exact;
    exact.box = scene.objects[0].box;
    exact.class_id = exact.initial_class_id = 1;
    DetectionProposal partial = exact;
    partial.box = Box(0.4, 0.25, 0.5, 0.5);
    DetectionProposal empty = exact;
    empty.box = Box(0.0, 0.0, 0.1, 0.1);

    SegmentStats stats;
    const auto out = segment_proposals(image, scene.id, {exact, partial, empty}, mock, SegmentOptions{5}, &stats);
    REQUIRE(out.size() == 3);
    CHECK(rle_decode(out[0].mask) == BinaryMask::from_rect(50, 40, planted));
    CHECK(out[0].caption == "a car");
    const PixelRect clipped = intersect(planted, to_pixel_rect(partial.box, 50, 40));
    CHECK(rle_decode(out[1].mask) == BinaryMask::from_rect(50, 40, clipped));
    CHECK(out[2].mask.foreground_count() == 0);
    CHECK(out[2].caption.empty());
    CHECK(stats.empty_masks == 1);
    CHECK_THROWS_AS(mock.segment(scene.id, Raster(10, 10, 3), std::vector<Box>{exact.box}), DimensionMismatch);
}

TEST_CASE("output bundle") {
    testing::TempDir dir("bundle");
    const Vocabulary vocab({"unlabeled", "car", "person"}, 0);
    auto a = instance(6, 4, {0, 0, 3, 4}, 1, 0.8, 0);
    a.caption = "a car";
    auto b = instance(6, 4, {3, 0, 3, 4}, 2, 0.7, 1);
    b.proposal.initial_class_id = 1;
    b.proposal.source = ProposalSource::visual;
    const auto map = composite({a, b}, 6, 4);
    write_bundle(dir / "s1", map, vocab);

    CHECK(read_png(dir / "s1/label.png") == map.labels);
    std::ifstream in(dir / "s1/instances.json");
    const auto doc = nlohmann::json::parse(in);
    REQUIRE(doc.size() == 2);
    CHECK(doc[0]["class"] == "car");
    CHECK(doc[0]["caption"] == "a car");
    CHECK(doc[0]["corrected"] == false);
    CHECK(doc[1]["class"] == "person");
    CHECK(doc[1]["initial_class"] == "car");
    CHECK(doc[1]["corrected"] == true);
    CHECK(doc[1]["source"] == "visual");
    CHECK(doc[1]["rle"]["runs"].get<std::vector<std::uint32_t>>() == b.mask.runs());
}
