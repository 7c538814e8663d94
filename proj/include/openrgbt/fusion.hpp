#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "openrgbt/core.hpp"

namespace openrgbt {

/// Registered visible (3-channel) and thermal (1-channel) rasters of one scene.
class ImagePair {
  public:
    ImagePair() = default;
    /// Throws InvalidInput on wrong channel counts and DimensionMismatch when
    /// the modalities differ in size.
    ImagePair(Raster rgb, Raster thermal, std::string id = {});

    const Raster& rgb() const noexcept { return rgb_; }
    const Raster& thermal() const noexcept { return thermal_; }
    const std::string& id() const noexcept { return id_; }
    int width() const noexcept { return rgb_.width(); }
    int height() const noexcept { return rgb_.height(); }

  private:
    Raster rgb_;
    Raster thermal_;
    std::string id_;
};

/// Per-pixel weight on the visible modality, each in [0, 1].
class WeightMap {
  public:
    WeightMap() = default;
    WeightMap(int width, int height, double fill);
    WeightMap(int width, int height, std::vector<double> weights);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    double at(int x, int y) const noexcept { return weights_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const double> weights() const noexcept { return weights_; }

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> weights_;
};

/// I_f[p, c] = W[p] * rgb[p, c] + (1 - W[p]) * thermal[p], rounded to 8 bits.
Raster fuse(const ImagePair& pair, const WeightMap& weights);

struct ReferenceWeightOptions {
    int window = 9;
    /// Share of the global brightness term in the final weight; 0 leaves
    /// only the local contrast term.
    double global_blend = 0.5;
};

/// Heuristic stand-in for learned fusion attention: local luminance variance
/// of the visible image relative to the summed variance of both modalities,
/// blended with how close the mean visible luminance is to mid-gray.
WeightMap reference_weights(const ImagePair& pair, const ReferenceWeightOptions& options = {});

/// Variance of `plane` inside a window x window neighbourhood of each pixel,
/// the window clipped at the image border.
std::vector<double> windowed_variance(std::span<const std::int64_t> plane, int width, int height, int window);

/// Visible luminance scaled by 1000: 299 R + 587 G + 114 B.
std::vector<std::int64_t> luminance_milli(const Raster& rgb);

/// Single-channel PNG whose value / 255 is the visible weight.
WeightMap load_weight_map(const std::filesystem::path& path);

/// Accepts a fused image produced elsewhere. Must be a 3-channel PNG.
Raster load_external_fused(const std::filesystem::path& path);

using WeightProvider = std::function<WeightMap(const ImagePair&)>;

} // namespace openrgbt
