#include "fluidrecon/vgrd.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fluidrecon/errors.hpp"

namespace fluidrecon {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

    std::uint32_t u32()
    {
        if (pos_ + 4 > bytes_.size()) throw ParseError(name_, pos_, "unexpected end of file");
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::uint32_t{bytes_[pos_ + b]} << (8 * b);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    const std::string& name_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_vgrd(const GridField& field)
{
    if (field.data.size() != field.cell_count() * field.channels) {
        throw std::invalid_argument("VGRD data length does not match dims x channels");
    }
    std::vector<std::uint8_t> out{'V', 'G', 'R', 'D'};
    out.reserve(40 + 4 * field.data.size());
    put_u32(out, kVgrdVersion);
    for (auto d : field.dims) put_u32(out, d);
    put_f32(out, field.dx);
    for (auto o : field.origin) put_f32(out, o);
    put_u32(out, field.channels);
    for (float v : field.data) put_f32(out, v);
    return out;
}

GridField decode_vgrd(const std::vector<std::uint8_t>& bytes, const std::string& name)
{
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "VGRD", 4) != 0) throw ParseError(name, 0, "bad VGRD magic");
    Reader r(bytes, name);
    r.u32();  // magic
    GridField f;
    const std::size_t version_at = r.pos();
    const std::uint32_t version = r.u32();
    if (version != kVgrdVersion) throw ParseError(name, version_at, "unsupported VGRD version " + std::to_string(version));
    for (auto& d : f.dims) d = r.u32();
    f.dx = r.f32();
    for (auto& o : f.origin) o = r.f32();
    f.channels = r.u32();
    const std::size_t count = f.cell_count() * f.channels;
    if (r.remaining() != 4 * count) {
        throw ParseError(name, r.pos(),
                         "expected " + std::to_string(4 * count) + " data bytes, found " + std::to_string(r.remaining()));
    }
    f.data.resize(count);
    for (auto& v : f.data) v = r.f32();
    return f;
}

void write_vgrd(const std::string& path, const GridField& field)
{
    const auto bytes = encode_vgrd(field);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GridField read_vgrd(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_vgrd(bytes, path);
}

GridField velocity_field(const SimGrid& grid)
{
    GridField f;
    for (int a = 0; a < 3; ++a) f.dims[a] = static_cast<std::uint32_t>(grid.dims()[a]);
    f.dx = static_cast<float>(grid.dx());
    for (int a = 0; a < 3; ++a) f.origin[a] = static_cast<float>(grid.origin()[a]);
    f.channels = 3;
    f.data.resize(3 * grid.size());
    for (std::uint32_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < grid.size(); ++i) f.at(c, i) = static_cast<float>(grid.velocity[i][c]);
    }
    return f;
}

void load_velocity(SimGrid& grid, const GridField& field)
{
    for (int a = 0; a < 3; ++a) {
        if (field.dims[a] != static_cast<std::uint32_t>(grid.dims()[a])) {
            throw std::invalid_argument("VGRD dims do not match grid dims");
        }
    }
    if (field.channels != 3) throw std::invalid_argument("velocity VGRD must have 3 channels");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::uint32_t c = 0; c < 3; ++c) grid.velocity[i][c] = field.at(c, i);
    }
}

}  // namespace fluidrecon
