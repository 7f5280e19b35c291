#include "fluidrecon/raster.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "fluidrecon/errors.hpp"

namespace fluidrecon {

namespace {

std::filesystem::path header_path(const std::filesystem::path& path)
{
    auto h = path;
    h += ".hdr";
    return h;
}

struct Header {
    int height = 0, width = 0, channels = 0;
};

Header read_header(const std::filesystem::path& path)
{
    const auto hp = header_path(path);
    std::ifstream is(hp);
    if (!is) throw MissingInput(hp.string());
    Header h;
    if (!(is >> h.height >> h.width >> h.channels)) throw ParseError(hp.string(), 1, "expected \"H W C\"");
    if (h.height <= 0 || h.width <= 0 || h.channels <= 0) throw ParseError(hp.string(), 1, "H, W and C must be positive");
    return h;
}

void write_header(const std::filesystem::path& path, int h, int w, int c)
{
    std::ofstream os(header_path(path));
    if (!os) throw std::runtime_error("cannot write " + header_path(path).string());
    os << h << ' ' << w << ' ' << c << '\n';
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

RawRaster read_raw_raster(const std::filesystem::path& path)
{
    const Header h = read_header(path);
    const auto bytes = read_bytes(path);
    const std::size_t count = static_cast<std::size_t>(h.height) * h.width * h.channels;
    if (bytes.size() != 4 * count) {
        throw ParseError(path.string(), bytes.size(), "expected " + std::to_string(4 * count) + " bytes");
    }
    RawRaster r{h.height, h.width, h.channels, std::vector<float>(count)};
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
        r.data[i] = std::bit_cast<float>(u);
    }
    return r;
}

void write_raw_raster(const std::filesystem::path& path, const RawRaster& raster)
{
    if (raster.data.size() != static_cast<std::size_t>(raster.height) * raster.width * raster.channels) {
        throw std::invalid_argument("raster data length does not match H x W x C");
    }
    std::vector<char> bytes(4 * raster.data.size());
    for (std::size_t i = 0; i < raster.data.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(raster.data[i]);
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>(u >> (8 * b));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    write_header(path, raster.height, raster.width, raster.channels);
}

Mask read_mask(const std::filesystem::path& path)
{
    const Header h = read_header(path);
    if (h.channels != 1) throw ParseError(header_path(path).string(), 1, "mask must have 1 channel");
    const auto bytes = read_bytes(path);
    if (bytes.size() != static_cast<std::size_t>(h.height) * h.width) {
        throw ParseError(path.string(), bytes.size(), "mask size does not match header");
    }
    Mask m(h.height, h.width);
    for (std::size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] ? 1 : 0;
    return m;
}

void write_mask(const std::filesystem::path& path, const Mask& mask)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(mask.data.data()), static_cast<std::streamsize>(mask.data.size()));
    write_header(path, mask.height, mask.width, 1);
}

Raster<double> scalar_raster(const RawRaster& raw)
{
    if (raw.channels != 1) throw std::invalid_argument("expected a 1-channel raster");
    Raster<double> r(raw.height, raw.width);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = raw.data[i];
    return r;
}

Raster<Vec2> vector2_raster(const RawRaster& raw)
{
    if (raw.channels != 2) throw std::invalid_argument("expected a 2-channel raster");
    Raster<Vec2> r(raw.height, raw.width);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = Vec2(raw.data[2 * i], raw.data[2 * i + 1]);
    return r;
}

}  // namespace fluidrecon
