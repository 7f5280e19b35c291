#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace fluidrecon {

using Vec2 = Eigen::Vector2d;

/// Row-major H x W image. Row r maps to increasing NDC v, column c to
/// increasing NDC u.
template <typename T>
struct Raster {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Raster() = default;
    Raster(int h, int w, const T& fill = T()) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }
    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    template <typename U>
    bool same_shape(const Raster<U>& o) const
    {
        return height == o.height && width == o.width;
    }
};

using Mask = Raster<std::uint8_t>;

/// Pixel-center NDC coordinates: u = (c + 0.5)/W * 2 - 1, v likewise over rows.
inline double ndc_u(int c, int width) { return (c + 0.5) / width * 2.0 - 1.0; }
inline double ndc_v(int r, int height) { return (r + 0.5) / height * 2.0 - 1.0; }

/// Raw channel-interleaved f32 little-endian raster with a text sidecar
/// `<path>.hdr` holding "H W C".
struct RawRaster {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
};

RawRaster read_raw_raster(const std::filesystem::path& path);
void write_raw_raster(const std::filesystem::path& path, const RawRaster& raster);

/// u8 mask (nonzero = set) with the same sidecar convention, C = 1.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);

Raster<double> scalar_raster(const RawRaster& raw);
Raster<Vec2> vector2_raster(const RawRaster& raw);

}  // namespace fluidrecon
