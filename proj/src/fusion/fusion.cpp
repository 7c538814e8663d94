#include "openrgbt/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "openrgbt/error.hpp"
#include "openrgbt/image_io.hpp"

namespace openrgbt {

ImagePair::ImagePair(Raster rgb, Raster thermal, std::string id)
    : rgb_(std::move(rgb)), thermal_(std::move(thermal)), id_(std::move(id)) {
    if (rgb_.channels() != 3) {
        throw InvalidInput("visible image must have 3 channels");
    }
    if (thermal_.channels() != 1) {
        throw InvalidInput("thermal image must have 1 channel");
    }
    if (!same_dims(rgb_, thermal_)) {
        throw DimensionMismatch("visible and thermal images differ in size");
    }
}

WeightMap::WeightMap(int width, int height, double fill)
    : WeightMap(width, height, std::vector<double>(static_cast<std::size_t>(width) * height, fill)) {}

WeightMap::WeightMap(int width, int height, std::vector<double> weights)
    : width_(width), height_(height), weights_(std::move(weights)) {
    if (width <= 0 || height <= 0 || weights_.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionMismatch("weight map size does not match its dimensions");
    }
    for (double w : weights_) {
        if (!(w >= 0.0 && w <= 1.0)) {
            throw InvalidInput("fusion weights must lie in [0, 1]");
        }
    }
}

Raster fuse(const ImagePair& pair, const WeightMap& weights) {
    if (weights.width() != pair.width() || weights.height() != pair.height()) {
        throw DimensionMismatch("weight map does not match the image pair");
    }
    Raster out(pair.width(), pair.height(), 3);
    const auto rgb = pair.rgb().samples();
    const auto thermal = pair.thermal().samples();
    const auto w = weights.weights();
    auto dst = out.samples();
    for (std::size_t p = 0; p < w.size(); ++p) {
        const double t = thermal[p];
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = w[p] * rgb[3 * p + c] + (1.0 - w[p]) * t;
            dst[3 * p + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

std::vector<std::int64_t> luminance_milli(const Raster& rgb) {
    if (rgb.channels() != 3) {
        throw InvalidInput("luminance needs a 3-channel raster");
    }
    const auto s = rgb.samples();
    std::vector<std::int64_t> out(rgb.pixel_count());
    for (std::size_t p = 0; p < out.size(); ++p) {
        out[p] = 299 * std::int64_t{s[3 * p]} + 587 * std::int64_t{s[3 * p + 1]} + 114 * std::int64_t{s[3 * p + 2]};
    }
    return out;
}

std::vector<double> windowed_variance(std::span<const std::int64_t> plane, int width, int height, int window) {
    if (window < 3 || window % 2 == 0) {
        throw InvalidInput("fusion window must be odd and at least 3");
    }
    if (plane.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionMismatch("plane size does not match its dimensions");
    }
    // Integral images over exact integers; 8-bit data scaled by 1000 stays far
    // below the int64 range for any realistic image.
    const std::size_t stride = static_cast<std::size_t>(width) + 1;
    std::vector<std::int64_t> sum(stride * (height + 1), 0);
    std::vector<std::int64_t> sq(stride * (height + 1), 0);
    for (int y = 0; y < height; ++y) {
        std::int64_t row_sum = 0;
        std::int64_t row_sq = 0;
        for (int x = 0; x < width; ++x) {
            const std::int64_t v = plane[static_cast<std::size_t>(y) * width + x];
            row_sum += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row_sum;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
        }
    }
    auto box_total = [&](const std::vector<std::int64_t>& table, int x0, int y0, int x1, int y1) {
        return table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0] + table[y0 * stride + x0];
    };

    const int half = window / 2;
    std::vector<double> out(plane.size());
    for (int y = 0; y < height; ++y) {
        const int y0 = std::max(0, y - half);
        const int y1 = std::min(height, y + half + 1);
        for (int x = 0; x < width; ++x) {
            const int x0 = std::max(0, x - half);
            const int x1 = std::min(width, x + half + 1);
            const std::int64_t n = std::int64_t{x1 - x0} * (y1 - y0);
            const std::int64_t s = box_total(sum, x0, y0, x1, y1);
            const std::int64_t q = box_total(sq, x0, y0, x1, y1);
            // n * q - s * s is exactly n^2 times the population variance.
            const std::int64_t scaled = n * q - s * s;
            out[static_cast<std::size_t>(y) * width + x] =
                static_cast<double>(scaled) / (static_cast<double>(n) * static_cast<double>(n));
        }
    }
    return out;
}

WeightMap reference_weights(const ImagePair& pair, const ReferenceWeightOptions& options) {
    if (!(options.global_blend >= 0.0 && options.global_blend <= 1.0)) {
        throw InvalidInput("global_blend must lie in [0, 1]");
    }
    const int w = pair.width();
    const int h = pair.height();
    const std::vector<std::int64_t> luma = luminance_milli(pair.rgb());
    std::vector<std::int64_t> thermal(pair.thermal().samples().begin(), pair.thermal().samples().end());
    for (auto& v : thermal) {
        v *= 1000;
    }
    const std::vector<double> var_rgb = windowed_variance(luma, w, h, options.window);
    const std::vector<double> var_t = windowed_variance(thermal, w, h, options.window);

    double mean = 0.0;
    for (const std::int64_t v : luma) {
        mean += static_cast<double>(v);
    }
    mean /= 1000.0 * static_cast<double>(luma.size());
    const double global = std::clamp(1.0 - std::abs(mean - 127.5) / 127.5, 0.0, 1.0);

    std::vector<double> weights(luma.size());
    for (std::size_t p = 0; p < weights.size(); ++p) {
        const double total = var_rgb[p] + var_t[p];
        const double local = total > 0.0 ? var_rgb[p] / total : 0.5;
        weights[p] = std::clamp((1.0 - options.global_blend) * local + options.global_blend * global, 0.0, 1.0);
    }
    return WeightMap(w, h, std::move(weights));
}

WeightMap load_weight_map(const std::filesystem::path& path) {
    const Raster r = read_png(path);
    if (r.channels() != 1) {
        throw InvalidInput(path.string() + ": weight map must be single-channel");
    }
    std::vector<double> weights(r.pixel_count());
    const auto s = r.samples();
    std::transform(s.begin(), s.end(), weights.begin(), [](std::uint8_t v) { return v / 255.0; });
    return WeightMap(r.width(), r.height(), std::move(weights));
}

Raster load_external_fused(const std::filesystem::path& path) {
    const DecodedImage image = read_png_any(path);
    if (image.channels != 3) {
        throw InvalidInput(path.string() + ": wrong channel count (" + std::to_string(image.channels) +
                           "), fused image must have 3 channels");
    }
    return Raster(image.width, image.height, 3, image.samples);
}

} // namespace openrgbt
