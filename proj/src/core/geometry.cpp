#include "openrgbt/core.hpp"

#include <algorithm>
#include <cmath>

#include "openrgbt/error.hpp"

namespace openrgbt {

namespace {

constexpr double kBoxTolerance = 1e-9;

// Guards floor() against products such as 0.29 * 100 = 28.999999999999996.
constexpr double kPixelEpsilon = 1e-9;

} // namespace

Box::Box(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    const bool finite = std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h);
    if (!finite || x < 0.0 || y < 0.0 || w <= 0.0 || h <= 0.0 || x + w > 1.0 + kBoxTolerance ||
        y + h > 1.0 + kBoxTolerance) {
        throw InvalidInput("invalid normalized box (" + std::to_string(x) + ", " + std::to_string(y) +
                           ", " + std::to_string(w) + ", " + std::to_string(h) + ")");
    }
}

std::optional<Box> Box::clamped(double x, double y, double w, double h) {
    if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h))) {
        return std::nullopt;
    }
    const double x0 = std::clamp(x, 0.0, 1.0);
    const double y0 = std::clamp(y, 0.0, 1.0);
    const double x1 = std::clamp(x + w, 0.0, 1.0);
    const double y1 = std::clamp(y + h, 0.0, 1.0);
    if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) {
        return std::nullopt;
    }
    return Box(x0, y0, std::min(x1 - x0, 1.0 - x0), std::min(y1 - y0, 1.0 - y0));
}

double box_iou(const Box& a, const Box& b) {
    if (a == b) {
        return 1.0;
    }
    const double iw = std::min(a.x() + a.w(), b.x() + b.w()) - std::max(a.x(), b.x());
    const double ih = std::min(a.y() + a.h(), b.y() + b.h()) - std::max(a.y(), b.y());
    if (iw <= 0.0 || ih <= 0.0) {
        return 0.0;
    }
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

PixelRect intersect(const PixelRect& a, const PixelRect& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.width, b.x + b.width);
    const int y1 = std::min(a.y + a.height, b.y + b.height);
    if (x1 <= x0 || y1 <= y0) {
        return PixelRect{x0, y0, 0, 0};
    }
    return PixelRect{x0, y0, x1 - x0, y1 - y0};
}

PixelRect to_pixel_rect(const Box& box, int image_width, int image_height) {
    if (image_width <= 0 || image_height <= 0) {
        throw InvalidInput("to_pixel_rect: image has no pixels");
    }
    auto axis = [](double origin, double extent, int size) {
        int start = static_cast<int>(std::floor(origin * size + kPixelEpsilon));
        int length = static_cast<int>(std::floor(extent * size + 0.5));
        start = std::clamp(start, 0, size - 1);
        length = std::clamp(length, 1, size - start);
        return std::pair{start, length};
    };
    const auto [x, w] = axis(box.x(), box.w(), image_width);
    const auto [y, h] = axis(box.y(), box.h(), image_height);
    return PixelRect{x, y, w, h};
}

} // namespace openrgbt
