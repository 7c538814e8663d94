#include "openrgbt/segmentation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"

namespace openrgbt {

namespace {

bool within_dilated_box(const BinaryMask& mask, const PixelRect& box, int dilation) {
    const PixelRect grown{box.x - dilation, box.y - dilation, box.width + 2 * dilation, box.height + 2 * dilation};
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.get(x, y) && !grown.contains(x, y)) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

std::vector<InstanceResult> segment_proposals(const Raster& fused, const std::string& image_id,
                                              const std::vector<DetectionProposal>& proposals, Segmenter& backend,
                                              const SegmentOptions& options, SegmentStats* stats) {
    if (proposals.empty()) {
        return {};
    }
    std::vector<Box> boxes;
    boxes.reserve(proposals.size());
    for (const auto& p : proposals) {
        boxes.push_back(p.box);
    }
    auto masks = backend.segment(image_id, fused, boxes);
    if (masks.size() != proposals.size()) {
        throw BackendError({}, "segmenter returned " + std::to_string(masks.size()) + " masks for " +
                                   std::to_string(proposals.size()) + " boxes", false);
    }
    std::vector<InstanceResult> out;
    out.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        auto& m = masks[i];
        if (m.mask.width() != fused.width() || m.mask.height() != fused.height()) {
            throw DimensionMismatch("segmenter mask " + std::to_string(m.mask.width()) + "x" +
                                    std::to_string(m.mask.height()) + " does not match image " +
                                    std::to_string(fused.width()) + "x" + std::to_string(fused.height()));
        }
        if (m.mask.foreground_count() == 0 && stats != nullptr) {
            ++stats->empty_masks;
        }
        if (options.max_mask_dilation) {
            const PixelRect rect = to_pixel_rect(proposals[i].box, fused.width(), fused.height());
            if (!within_dilated_box(rle_decode(m.mask), rect, *options.max_mask_dilation)) {
                throw InvalidInput("mask of proposal " + std::to_string(i) + " leaves its box");
            }
        }
        out.push_back(InstanceResult{proposals[i], std::move(m.mask), std::move(m.caption)});
    }
    return out;
}

SemanticMap composite(std::vector<InstanceResult> instances, int width, int height) {
    for (const auto& inst : instances) {
        if (inst.mask.width() != width || inst.mask.height() != height) {
            throw DimensionMismatch("instance mask does not match the label map size");
        }
    }
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Highest priority first; a pixel keeps the first label it receives.
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = instances[a].proposal;
        const auto& pb = instances[b].proposal;
        if (pa.score != pb.score) {
            return pa.score > pb.score;
        }
        if (pa.serial != pb.serial) {
            return pa.serial < pb.serial;
        }
        return pa.class_id < pb.class_id;
    });

    SemanticMap map{Raster(width, height, 1, kUnlabeled), {}};
    auto labels = map.labels.samples();
    for (const std::size_t i : order) {
        const auto& inst = instances[i];
        const auto label = static_cast<std::uint8_t>(inst.proposal.class_id);
        std::size_t pos = 0;
        bool foreground = false;
        for (const std::uint32_t run : inst.mask.runs()) {
            if (foreground) {
                for (std::size_t p = pos; p < pos + run; ++p) {
                    if (labels[p] == kUnlabeled) {
                        labels[p] = label;
                    }
                }
            }
            pos += run;
            foreground = !foreground;
        }
    }
    std::sort(instances.begin(), instances.end(),
              [](const auto& a, const auto& b) { return a.proposal.serial < b.proposal.serial; });
    map.instances = std::move(instances);
    return map;
}

nlohmann::json instances_to_json(const std::vector<InstanceResult>& instances, const Vocabulary& vocab) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& inst : instances) {
        const auto& p = inst.proposal;
        out.push_back({
            {"box", {p.box.x(), p.box.y(), p.box.w(), p.box.h()}},
            {"class", vocab.name(p.class_id)},
            {"initial_class", vocab.name(p.initial_class_id)},
            {"score", p.score},
            {"source", to_string(p.source)},
            {"corrected", p.corrected()},
            {"rle", {{"width", inst.mask.width()}, {"height", inst.mask.height()}, {"runs", inst.mask.runs()}}},
            {"caption", inst.caption},
        });
    }
    return out;
}

void write_bundle(const std::filesystem::path& dir, const SemanticMap& map, const Vocabulary& vocab) {
    std::filesystem::create_directories(dir);
    write_png(dir / "label.png", map.labels);
    std::ofstream out(dir / "instances.json");
    if (!out) {
        throw IoError("cannot write " + (dir / "instances.json").string());
    }
    out << instances_to_json(map.instances, vocab).dump(2) << '\n';
}

} // namespace openrgbt
