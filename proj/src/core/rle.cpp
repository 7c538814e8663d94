#include "openrgbt/core.hpp"

#include <numeric>

#include "openrgbt/error.hpp"

namespace openrgbt {

RleMask::RleMask(int width, int height, std::vector<std::uint32_t> runs)
    : width_(width), height_(height), runs_(std::move(runs)) {
    if (width < 0 || height < 0) {
        throw InvalidInput("rle dimensions must be non-negative");
    }
    const std::uint64_t total = std::accumulate(runs_.begin(), runs_.end(), std::uint64_t{0});
    if (total != static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height)) {
        throw DimensionMismatch("rle runs cover " + std::to_string(total) + " pixels, expected " +
                                std::to_string(static_cast<std::uint64_t>(width) * height));
    }
}

std::size_t RleMask::foreground_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t i = 1; i < runs_.size(); i += 2) {
        n += runs_[i];
    }
    return n;
}

RleMask rle_encode(const BinaryMask& mask) {
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t length = 0;
    for (const std::uint8_t bit : mask.bits()) {
        if (bit != current) {
            runs.push_back(length);
            current = bit;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return RleMask(mask.width(), mask.height(), std::move(runs));
}

BinaryMask rle_decode(const RleMask& mask) {
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<std::size_t>(mask.width()) * mask.height());
    std::uint8_t value = 0;
    for (const std::uint32_t run : mask.runs()) {
        bits.insert(bits.end(), run, value);
        value ^= 1;
    }
    return BinaryMask(mask.width(), mask.height(), std::move(bits));
}

} // namespace openrgbt
