#include <cmath>
#include <numbers>

#include "openrgbt/error.hpp"
#include "openrgbt/mock.hpp"

namespace openrgbt {

std::uint64_t SplitMix64::next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
    SplitMix64 rng(a ^ (b * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL));
    rng.next();
    return rng.next();
}

std::uint64_t hash_string(const std::string& text) noexcept {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> sine_cosine_pe(const std::array<double, 4>& coords, std::size_t dim) {
    if (dim == 0 || dim % 8 != 0) {
        throw InvalidInput("positional embedding dimension must be a positive multiple of 8, got " +
                           std::to_string(dim));
    }
    constexpr double scale = 2.0 * std::numbers::pi;
    std::vector<double> out;
    out.reserve(4 * dim);
    for (double c : coords) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double exponent = 2.0 * static_cast<double>(i / 2) / static_cast<double>(dim);
            const double arg = c * scale / std::pow(10000.0, exponent);
            out.push_back(i % 2 == 0 ? std::sin(arg) : std::cos(arg));
        }
    }
    return out;
}

std::vector<double> sine_cosine_pe(const Box& box, std::size_t dim) {
    const std::array<double, 4> center{box.x() + box.w() / 2.0, box.y() + box.h() / 2.0, box.w(), box.h()};
    return sine_cosine_pe(center, dim);
}

PeProjection::PeProjection(std::size_t dim, std::uint64_t seed) : dim_(dim) {
    if (dim == 0 || dim % 8 != 0) {
        throw InvalidInput("positional embedding dimension must be a positive multiple of 8");
    }
    SplitMix64 rng(mix_seed(seed, 0x5045));
    const std::size_t in = 4 * dim;
    // Uniform entries with variance 1 / in keep output norms near the input norm.
    const double half_width = std::sqrt(3.0 / static_cast<double>(in));
    weights_.resize(dim * in);
    for (double& w : weights_) {
        w = (2.0 * rng.uniform() - 1.0) * half_width;
    }
}

std::vector<double> PeProjection::apply(const std::vector<double>& pe) const {
    const std::size_t in = 4 * dim_;
    if (pe.size() != in) {
        throw DimensionMismatch("projection expects " + std::to_string(in) + " inputs, got " +
                                std::to_string(pe.size()));
    }
    std::vector<double> out(dim_, 0.0);
    for (std::size_t r = 0; r < dim_; ++r) {
        const double* row = weights_.data() + r * in;
        double acc = 0.0;
        for (std::size_t c = 0; c < in; ++c) {
            acc += row[c] * pe[c];
        }
        out[r] = acc;
    }
    return out;
}

} // namespace openrgbt
