#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "openrgbt/backend.hpp"
#include "openrgbt/core.hpp"
#include "openrgbt/fusion.hpp"

namespace openrgbt {

/// DETR-style sinusoidal embedding of four box coordinates: for each
/// coordinate (in order) `dim` values sin/cos-interleaved at geometric
/// frequencies 10000^(2 floor(i/2) / dim), coordinates scaled by 2*pi.
/// Output length is 4 * dim. `dim` must be a positive multiple of 8.
std::vector<double> sine_cosine_pe(const std::array<double, 4>& coords, std::size_t dim);
/// Embeds the box in center form (cx, cy, w, h).
std::vector<double> sine_cosine_pe(const Box& box, std::size_t dim);

/// Center-form coordinates of the whole frame.
inline constexpr std::array<double, 4> kGlobalBox{0.5, 0.5, 1.0, 1.0};

/// Fixed random linear map 4*dim -> dim, seeded; stands in for a learned
/// projection of box embeddings.
class PeProjection {
  public:
    PeProjection(std::size_t dim, std::uint64_t seed);

    std::size_t dim() const noexcept { return dim_; }
    std::vector<double> apply(const std::vector<double>& pe) const;
    std::vector<double> embed(const std::array<double, 4>& coords) const {
        return apply(sine_cosine_pe(coords, dim_));
    }
    std::vector<double> embed(const Box& box) const { return apply(sine_cosine_pe(box, dim_)); }

  private:
    std::size_t dim_;
    std::vector<double> weights_;
};

/// SplitMix64 stream; the only randomness source of the mocks.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() noexcept;
    /// Uniform in [0, 1) with 53 bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  private:
    std::uint64_t state_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_string(const std::string& text) noexcept;

struct PlantedObject {
    Box box;
    std::string class_name;
    std::array<std::uint8_t, 3> color{200, 200, 200};
    std::uint8_t thermal = 200;
};

/// Synthetic scene with ground truth geometry and detector corruption knobs.
struct MockScene {
    std::string id;
    int width = 64;
    int height = 48;
    std::vector<PlantedObject> objects;
    std::array<std::uint8_t, 3> background_color{60, 70, 80};
    std::uint8_t background_thermal = 40;
    /// Amplitude of deterministic per-pixel texture on the background.
    int noise = 10;
    double miss_rate = 0.0;
    double label_flip_rate = 0.0;
    std::uint64_t seed = 0;
    /// Classes the text detector never reports (reachable only by visual prompts).
    std::vector<std::string> text_blind_classes;

    static MockScene from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    static MockScene load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    ImagePair render() const;
    /// Objects painted in list order with their vocabulary index; the rest
    /// gets `background_label`.
    Raster render_labels(const Vocabulary& vocab, std::uint8_t background_label) const;

    PixelRect object_rect(std::size_t index) const;
    /// Object with the largest pixel overlap with `rect`; ties go to the lower
    /// index. nullopt when nothing overlaps.
    std::optional<std::size_t> majority_object(const PixelRect& rect) const;
    bool text_blind(const std::string& class_name) const;
};

class MockSceneSet {
  public:
    MockSceneSet() = default;
    explicit MockSceneSet(std::vector<MockScene> scenes);
    /// Every `*.json` file of `dir`.
    static MockSceneSet load_dir(const std::filesystem::path& dir);

    const MockScene* find(const std::string& id) const;
    std::size_t size() const noexcept { return scenes_.size(); }

  private:
    std::map<std::string, MockScene> scenes_;
};

struct MockOptions {
    /// Text embeddings of distinct classes have dot product 1 - margin.
    double margin = 0.3;
    std::uint64_t seed = 0;
    std::size_t pe_dim = 32;
};

/// Deterministic stand-in for every model backend, driven by scene ground
/// truth. Stateless after construction; safe to share between threads.
class MockBackend : public ModelBackend {
  public:
    MockBackend(std::shared_ptr<const MockSceneSet> scenes, std::vector<std::string> classes,
                MockOptions options = {});

    std::vector<std::string> capabilities() override;
    std::size_t embedding_dim() override { return classes_.size() + 1; }

    /// Planted objects of requested, non-blind classes. Each may be dropped
    /// (miss_rate) or relabelled to another requested class (label_flip_rate).
    std::vector<RawDetection> detect_text(const std::string& image_id, const Raster& image,
                                          const std::vector<std::string>& classes) override;
    /// Planted objects of every class that has at least one prompt. Scores
    /// lie in [0.45, 0.85) and grow with the cosine between the projected box
    /// embedding of the object and the mean over that class's prompts.
    std::vector<RawDetection> detect_visual(const std::string& image_id, const Raster& image,
                                            std::span<const VisualPrompt> prompts) override;
    /// Class k maps to sqrt(1 - margin) * u + sqrt(margin) * e_k, u a shared
    /// axis; a text selects the longest class name it contains.
    std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts) override;
    /// A crop takes the text embedding of its majority object, or u alone
    /// when it covers no object.
    std::vector<std::vector<double>> embed_crops(const std::string& image_id,
                                                 std::span<const CropInput> crops) override;
    /// Mask = majority object rectangle intersected with the box.
    std::vector<MaskResult> segment(const std::string& image_id, const Raster& image,
                                    std::span<const Box> boxes) override;
    WeightMap fusion_weights(const ImagePair& pair) override;

    std::vector<double> class_embedding(std::size_t class_index) const;
    std::vector<double> background_embedding() const;

  private:
    const MockScene& scene(const std::string& image_id) const;
    std::optional<std::size_t> class_index(const std::string& text) const;

    std::shared_ptr<const MockSceneSet> scenes_;
    std::vector<std::string> classes_;
    MockOptions options_;
    PeProjection projection_;
};

struct MockSuiteOptions {
    std::filesystem::path out_dir;
    std::size_t count = 25;
    int width = 96;
    int height = 72;
    std::uint64_t seed = 7;
    /// Index 0 is the background/ignore class.
    std::vector<std::string> classes{"unlabeled", "car", "person", "bike", "cone"};
    std::vector<std::string> text_blind_classes{"cone"};
    int min_objects = 2;
    int max_objects = 5;
    double miss_rate = 0.0;
    double label_flip_rate = 0.0;
};

/// Writes a self-contained synthetic benchmark:
///   vocab.txt, scenes/<id>.json, data/test/{rgb,thermal,labels}/<id>.png,
///   data/test.txt, conditions.csv, exemplars.json and config.json
/// (a pipeline config using the mock backend). Every scene holds at least
/// one object of each text-blind class. Returns the config path.
std::filesystem::path generate_mock_suite(const MockSuiteOptions& options);

} // namespace openrgbt
