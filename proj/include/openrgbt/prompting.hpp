#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "openrgbt/backend.hpp"
#include "openrgbt/core.hpp"

namespace openrgbt {

enum class ProposalSource { text, visual };

const char* to_string(ProposalSource source) noexcept;

struct DetectionProposal {
    Box box;
    std::size_t class_id = 0;
    double score = 0.0;
    ProposalSource source = ProposalSource::text;
    /// Label assigned by the detector; kept when SCCM rewrites class_id.
    std::size_t initial_class_id = 0;
    /// Position in the merged proposal list; breaks compositing ties.
    std::uint32_t serial = 0;

    bool corrected() const noexcept { return class_id != initial_class_id; }

    friend bool operator==(const DetectionProposal&, const DetectionProposal&) = default;
};

struct Exemplar {
    std::string class_name;
    std::filesystem::path image_path;
    Box box;
};

/// Visual prompts grouped by class. Persisted as
/// `[{"class": ..., "image_path": ..., "box": [x, y, w, h]}, ...]`.
class ExemplarLibrary {
  public:
    ExemplarLibrary() = default;
    explicit ExemplarLibrary(std::vector<Exemplar> exemplars);

    /// Relative image paths resolve against the JSON file's directory. With
    /// `load_images` every referenced image is decoded once up front.
    static ExemplarLibrary load(const std::filesystem::path& path, bool load_images = true);
    void save(const std::filesystem::path& path) const;

    bool empty() const noexcept { return exemplars_.empty(); }
    const std::vector<Exemplar>& exemplars() const noexcept { return exemplars_; }

    /// Exemplars as prompts, images shared between prompts of the same file.
    std::vector<VisualPrompt> prompts() const;

  private:
    std::vector<Exemplar> exemplars_;
    std::map<std::filesystem::path, std::shared_ptr<const Raster>> images_;
};

struct DetectionStats {
    std::size_t returned = 0;
    std::size_t below_floor = 0;
    /// Labels that matched no vocabulary class (or only the background one).
    std::size_t unknown_label = 0;
};

inline constexpr double kDefaultTextScoreFloor = 0.35;
inline constexpr double kDefaultVisualScoreFloor = 0.4;
inline constexpr double kDefaultDedupIou = 0.7;

std::vector<DetectionProposal> detect_text(const Raster& fused, const std::string& image_id,
                                           const Vocabulary& vocab, TextDetector& backend,
                                           double score_floor = kDefaultTextScoreFloor,
                                           DetectionStats* stats = nullptr);

/// Runs only when the library holds exemplars; class ids come from the
/// exemplar classes echoed by the backend.
std::vector<DetectionProposal> detect_visual(const Raster& fused, const std::string& image_id,
                                             const Vocabulary& vocab, const ExemplarLibrary& library,
                                             VisualDetector& backend,
                                             double score_floor = kDefaultVisualScoreFloor,
                                             DetectionStats* stats = nullptr);

/// Concatenates both sets, orders by descending score (stable), then drops
/// any proposal whose IoU with an already kept proposal of the same class is
/// at least `dedup_iou`. Different classes never suppress each other. A
/// threshold above 1 disables suppression. Serials are reassigned.
std::vector<DetectionProposal> union_proposals(const std::vector<DetectionProposal>& text,
                                               const std::vector<DetectionProposal>& visual,
                                               double dedup_iou = kDefaultDedupIou);

} // namespace openrgbt
