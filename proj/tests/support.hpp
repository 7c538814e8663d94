#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "openrgbt/core.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("openrgbt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

  private:
    std::filesystem::path path_;
};

inline openrgbt::Raster random_raster(std::mt19937_64& rng, int w, int h, int channels, int max_value = 255) {
    std::uniform_int_distribution<int> d(0, max_value);
    openrgbt::Raster r(w, h, channels);
    for (auto& v : r.samples()) {
        v = static_cast<std::uint8_t>(d(rng));
    }
    return r;
}

/// Random valid box with sides of at least `min_side`.
inline openrgbt::Box random_box(std::mt19937_64& rng, double min_side = 0.01) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double w = min_side + u(rng) * (1.0 - min_side);
    const double h = min_side + u(rng) * (1.0 - min_side);
    return openrgbt::Box(u(rng) * (1.0 - w), u(rng) * (1.0 - h), w, h);
}

} // namespace testing
