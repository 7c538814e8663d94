#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace openrgbt {

/// Axis-aligned box in unit-normalized image coordinates, top-left origin.
/// Always valid: 0 <= x, y; w, h > 0; x + w <= 1; y + h <= 1.
class Box {
  public:
    /// Full-frame box.
    Box() = default;
    /// Throws InvalidInput when the invariants do not hold.
    Box(double x, double y, double w, double h);

    /// Clamps an arbitrary (x, y, w, h) into the unit square. Returns nullopt
    /// when nothing of positive area is left.
    static std::optional<Box> clamped(double x, double y, double w, double h);

    double x() const noexcept { return x_; }
    double y() const noexcept { return y_; }
    double w() const noexcept { return w_; }
    double h() const noexcept { return h_; }
    double area() const noexcept { return w_ * h_; }

    friend bool operator==(const Box&, const Box&) = default;

  private:
    double x_ = 0.0;
    double y_ = 0.0;
    double w_ = 1.0;
    double h_ = 1.0;
};

double box_iou(const Box& a, const Box& b);

/// Integer pixel rectangle, half-open on the right/bottom edges.
struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool empty() const noexcept { return width <= 0 || height <= 0; }
    std::int64_t area() const noexcept { return empty() ? 0 : std::int64_t{width} * height; }
    bool contains(int px, int py) const noexcept {
        return px >= x && py >= y && px < x + width && py < y + height;
    }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

PixelRect intersect(const PixelRect& a, const PixelRect& b);

/// Origin uses floor, extents round half up; the result is clamped to the
/// image and never smaller than 1x1.
PixelRect to_pixel_rect(const Box& box, int image_width, int image_height);

/// 8-bit row-major raster with 1 or 3 interleaved channels.
class Raster {
  public:
    Raster() = default;
    Raster(int width, int height, int channels, std::uint8_t fill = 0);
    Raster(int width, int height, int channels, std::vector<std::uint8_t> samples);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return samples_.empty(); }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }

    std::uint8_t at(int x, int y, int c = 0) const {
        return samples_[index(x, y, c)];
    }
    std::uint8_t& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }

    std::span<const std::uint8_t> samples() const noexcept { return samples_; }
    std::span<std::uint8_t> samples() noexcept { return samples_; }

    friend bool operator==(const Raster&, const Raster&) = default;

  private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> samples_;
};

Raster crop(const Raster& raster, const Box& box);

/// Raster with the same dimensions check used throughout the pipeline.
bool same_dims(const Raster& a, const Raster& b) noexcept;

/// Row-major mask holding 0/1 per pixel.
class BinaryMask {
  public:
    BinaryMask() = default;
    BinaryMask(int width, int height);
    /// Throws InvalidInput when a value is neither 0 nor 1.
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    /// Pixels strictly above `threshold` become foreground.
    static BinaryMask from_raster(const Raster& raster, std::uint8_t threshold = 0);
    static BinaryMask from_rect(int width, int height, const PixelRect& rect);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool get(int x, int y) const noexcept { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) noexcept { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::size_t count() const noexcept;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Run-length encoded binary mask. Runs alternate background/foreground in
/// row-major order and always start with a (possibly empty) background run.
class RleMask {
  public:
    RleMask() = default;
    /// Throws DimensionMismatch when the runs do not cover width*height.
    RleMask(int width, int height, std::vector<std::uint32_t> runs);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    const std::vector<std::uint32_t>& runs() const noexcept { return runs_; }
    std::size_t foreground_count() const noexcept;

    friend bool operator==(const RleMask&, const RleMask&) = default;

  private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint32_t> runs_;
};

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& mask);

/// Ordered class list. Lookups normalize case and surrounding whitespace.
class Vocabulary {
  public:
    Vocabulary() = default;
    /// Names must be unique after normalization and non-empty; 1 <= K <= 255
    /// so that every index fits an 8-bit label map next to the 255 sentinel.
    explicit Vocabulary(std::vector<std::string> classes,
                        std::optional<std::size_t> background_index = std::nullopt);

    static Vocabulary load(const std::string& path,
                           std::optional<std::size_t> background_index = std::nullopt);

    std::size_t size() const noexcept { return classes_.size(); }
    const std::string& name(std::size_t index) const { return classes_.at(index); }
    const std::vector<std::string>& names() const noexcept { return classes_; }
    std::optional<std::size_t> background_index() const noexcept { return background_; }

    std::optional<std::size_t> find(std::string_view name) const;

    /// Every class index except the background one, ascending.
    std::vector<std::size_t> detectable() const;

  private:
    std::vector<std::string> classes_;
    std::optional<std::size_t> background_;
};

/// Lowercase + trim; the form used for every class-name comparison.
std::string normalize_label(std::string_view text);

} // namespace openrgbt
