#include "openrgbt/core.hpp"

#include <algorithm>
#include <numeric>

#include "openrgbt/error.hpp"

namespace openrgbt {

namespace {

void check_shape(int width, int height, int channels) {
    if (width <= 0 || height <= 0) {
        throw InvalidInput("raster dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw InvalidInput("raster must have 1 or 3 channels, got " + std::to_string(channels));
    }
}

} // namespace

Raster::Raster(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Raster::Raster(int width, int height, int channels, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    check_shape(width, height, channels);
    if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw DimensionMismatch("raster sample count does not match " + std::to_string(width) + "x" +
                                std::to_string(height) + "x" + std::to_string(channels));
    }
}

bool same_dims(const Raster& a, const Raster& b) noexcept {
    return a.width() == b.width() && a.height() == b.height();
}

Raster crop(const Raster& raster, const Box& box) {
    const PixelRect r = to_pixel_rect(box, raster.width(), raster.height());
    const int c = raster.channels();
    Raster out(r.width, r.height, c);
    const auto src = raster.samples();
    auto dst = out.samples();
    const std::size_t row_bytes = static_cast<std::size_t>(r.width) * c;
    for (int y = 0; y < r.height; ++y) {
        const std::size_t from = (static_cast<std::size_t>(r.y + y) * raster.width() + r.x) * c;
        std::copy_n(src.begin() + from, row_bytes, dst.begin() + y * row_bytes);
    }
    return out;
}

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {
    if (width < 0 || height < 0) {
        throw InvalidInput("mask dimensions must be non-negative");
    }
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 0 || height < 0 || bits_.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionMismatch("mask bit count does not match its dimensions");
    }
    if (std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b > 1; })) {
        throw InvalidInput("mask values must be 0 or 1");
    }
}

BinaryMask BinaryMask::from_raster(const Raster& raster, std::uint8_t threshold) {
    if (raster.channels() != 1) {
        throw InvalidInput("mask raster must be single-channel");
    }
    BinaryMask mask(raster.width(), raster.height());
    const auto src = raster.samples();
    std::transform(src.begin(), src.end(), mask.bits_.begin(),
                   [threshold](std::uint8_t v) { return static_cast<std::uint8_t>(v > threshold); });
    return mask;
}

BinaryMask BinaryMask::from_rect(int width, int height, const PixelRect& rect) {
    BinaryMask mask(width, height);
    const PixelRect r = intersect(rect, PixelRect{0, 0, width, height});
    for (int y = r.y; y < r.y + r.height; ++y) {
        for (int x = r.x; x < r.x + r.width; ++x) {
            mask.set(x, y, true);
        }
    }
    return mask;
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

} // namespace openrgbt
