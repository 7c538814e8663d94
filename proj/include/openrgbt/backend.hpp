#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "openrgbt/core.hpp"
#include "openrgbt/fusion.hpp"

namespace openrgbt {

/// A box as reported by a detector, label still in the detector's words.
struct RawDetection {
    Box box;
    std::string label;
    double score = 0.0;

    friend bool operator==(const RawDetection&, const RawDetection&) = default;
};

/// One exemplar box on a reference image, defining `class_name` in context.
struct VisualPrompt {
    std::string class_name;
    Box box;
    std::shared_ptr<const Raster> image;
};

struct CropInput {
    Box box;
    Raster crop;
};

struct MaskResult {
    RleMask mask;
    std::string caption;

    friend bool operator==(const MaskResult&, const MaskResult&) = default;
};

/// Model calls the engine depends on. `image_id` identifies the sample and
/// lets scene-aware backends (the mocks) find their ground truth; real models
/// ignore it. Implementations throw BackendError on failure.
class TextDetector {
  public:
    virtual ~TextDetector() = default;
    virtual std::vector<RawDetection> detect_text(const std::string& image_id, const Raster& image,
                                                  const std::vector<std::string>& classes) = 0;
};

class VisualDetector {
  public:
    virtual ~VisualDetector() = default;
    virtual std::vector<RawDetection> detect_visual(const std::string& image_id, const Raster& image,
                                                    std::span<const VisualPrompt> prompts) = 0;
};

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::size_t embedding_dim() = 0;
    virtual std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) = 0;
    virtual std::vector<std::vector<double>> embed_crops(const std::string& image_id,
                                                         std::span<const CropInput> crops) = 0;
};

class Segmenter {
  public:
    virtual ~Segmenter() = default;
    virtual std::vector<MaskResult> segment(const std::string& image_id, const Raster& image,
                                            std::span<const Box> boxes) = 0;
};

class FusionWeighter {
  public:
    virtual ~FusionWeighter() = default;
    virtual WeightMap fusion_weights(const ImagePair& pair) = 0;
};

namespace capability {
inline constexpr const char* detect_text = "detect_text";
inline constexpr const char* detect_visual = "detect_visual";
inline constexpr const char* embed_texts = "embed_texts";
inline constexpr const char* embed_crops = "embed_crops";
inline constexpr const char* segment = "segment";
inline constexpr const char* fusion_weights = "fusion_weights";
} // namespace capability

/// Everything a single backend process may provide.
class ModelBackend : public TextDetector,
                     public VisualDetector,
                     public Embedder,
                     public Segmenter,
                     public FusionWeighter {
  public:
    virtual std::vector<std::string> capabilities() = 0;
    bool supports(const std::string& capability);
};

} // namespace openrgbt
