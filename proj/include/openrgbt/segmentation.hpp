#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "openrgbt/backend.hpp"
#include "openrgbt/core.hpp"
#include "openrgbt/prompting.hpp"

namespace openrgbt {

inline constexpr std::uint8_t kUnlabeled = 255;

struct InstanceResult {
    DetectionProposal proposal;
    RleMask mask;
    std::string caption;
};

struct SemanticMap {
    /// Single channel; class index per pixel or kUnlabeled.
    Raster labels;
    std::vector<InstanceResult> instances;
};

struct SegmentOptions {
    /// When set, every mask must stay within the proposal box grown by this
    /// many pixels. Only meaningful against geometric mock backends.
    std::optional<int> max_mask_dilation;
};

struct SegmentStats {
    std::size_t empty_masks = 0;
};

/// One mask and caption per proposal, in proposal order. Masks must match the
/// image size.
std::vector<InstanceResult> segment_proposals(const Raster& fused, const std::string& image_id,
                                              const std::vector<DetectionProposal>& proposals, Segmenter& backend,
                                              const SegmentOptions& options = {}, SegmentStats* stats = nullptr);

/// Paints every mask with its class. Higher scores win overlaps; equal scores
/// go to the lower serial, then the lower class id. Independent of the order
/// of `instances`.
SemanticMap composite(std::vector<InstanceResult> instances, int width, int height);

nlohmann::json instances_to_json(const std::vector<InstanceResult>& instances, const Vocabulary& vocab);

/// Writes `<dir>/label.png` and `<dir>/instances.json`.
void write_bundle(const std::filesystem::path& dir, const SemanticMap& map, const Vocabulary& vocab);

} // namespace openrgbt
