#include "fluidrecon/ply.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fluidrecon/errors.hpp"

namespace fluidrecon {

int PlyElement::property_index(const std::string& prop) const
{
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i].name == prop) return static_cast<int>(i);
    }
    return -1;
}

PlyElement* PlyData::find(const std::string& name)
{
    for (auto& e : elements) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const PlyElement* PlyData::find(const std::string& name) const
{
    for (const auto& e : elements) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const char* ply_type_name(PlyType t)
{
    switch (t) {
        case PlyType::Int8: return "char";
        case PlyType::UInt8: return "uchar";
        case PlyType::Int16: return "short";
        case PlyType::UInt16: return "ushort";
        case PlyType::Int32: return "int";
        case PlyType::UInt32: return "uint";
        case PlyType::Float32: return "float";
        case PlyType::Float64: return "double";
    }
    return "float";
}

namespace {

bool parse_type(const std::string& s, PlyType& t)
{
    static const std::pair<const char*, PlyType> table[] = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    for (const auto& [name, type] : table) {
        if (s == name) {
            t = type;
            return true;
        }
    }
    return false;
}

std::size_t type_size(PlyType t)
{
    switch (t) {
        case PlyType::Int8:
        case PlyType::UInt8: return 1;
        case PlyType::Int16:
        case PlyType::UInt16: return 2;
        case PlyType::Int32:
        case PlyType::UInt32:
        case PlyType::Float32: return 4;
        case PlyType::Float64: return 8;
    }
    return 4;
}

std::uint64_t load_uint(const std::uint8_t* p, std::size_t n, bool big_endian)
{
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t src = big_endian ? n - 1 - b : b;
        v |= std::uint64_t{p[src]} << (8 * b);
    }
    return v;
}

void store_uint(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n, bool big_endian)
{
    const std::size_t at = out.size();
    out.resize(at + n);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t dst = big_endian ? n - 1 - b : b;
        out[at + dst] = static_cast<std::uint8_t>(v >> (8 * b));
    }
}

double decode_scalar(const std::uint8_t* p, PlyType t, bool be)
{
    const std::uint64_t u = load_uint(p, type_size(t), be);
    switch (t) {
        case PlyType::Int8: return static_cast<std::int8_t>(u);
        case PlyType::UInt8: return static_cast<std::uint8_t>(u);
        case PlyType::Int16: return static_cast<std::int16_t>(u);
        case PlyType::UInt16: return static_cast<std::uint16_t>(u);
        case PlyType::Int32: return static_cast<std::int32_t>(u);
        case PlyType::UInt32: return static_cast<std::uint32_t>(u);
        case PlyType::Float32: return std::bit_cast<float>(static_cast<std::uint32_t>(u));
        case PlyType::Float64: return std::bit_cast<double>(u);
    }
    return 0.0;
}

void encode_scalar(std::vector<std::uint8_t>& out, double v, PlyType t, bool be)
{
    std::uint64_t u = 0;
    switch (t) {
        case PlyType::Int8: u = static_cast<std::uint8_t>(static_cast<std::int8_t>(v)); break;
        case PlyType::UInt8: u = static_cast<std::uint8_t>(v); break;
        case PlyType::Int16: u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v)); break;
        case PlyType::UInt16: u = static_cast<std::uint16_t>(v); break;
        case PlyType::Int32: u = static_cast<std::uint32_t>(static_cast<std::int32_t>(v)); break;
        case PlyType::UInt32: u = static_cast<std::uint32_t>(v); break;
        case PlyType::Float32: u = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
        case PlyType::Float64: u = std::bit_cast<std::uint64_t>(v); break;
    }
    store_uint(out, u, type_size(t), be);
}

std::string format_ascii(double v, PlyType t)
{
    char buf[64];
    switch (t) {
        case PlyType::Float32: std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v))); break;
        case PlyType::Float64: std::snprintf(buf, sizeof buf, "%.17g", v); break;
        default: std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v)); break;
    }
    return buf;
}

}  // namespace

PlyData decode_ply(const std::vector<std::uint8_t>& bytes, const std::string& name)
{
    PlyData data;
    std::size_t pos = 0;
    std::uint64_t line_no = 0;
    auto next_line = [&]() -> std::string {
        if (pos >= bytes.size()) throw ParseError(name, line_no, "header ended before end_header");
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(end));
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw ParseError(name, 1, "missing 'ply' magic");
    bool have_format = false;
    while (true) {
        const std::string line = next_line();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "end_header") break;
        if (kw.empty() || kw == "obj_info") continue;
        if (kw == "comment") {
            data.comments.push_back(line.size() > 8 ? line.substr(8) : std::string());
        } else if (kw == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt == "ascii") data.format = PlyFormat::Ascii;
            else if (fmt == "binary_little_endian") data.format = PlyFormat::BinaryLittleEndian;
            else if (fmt == "binary_big_endian") data.format = PlyFormat::BinaryBigEndian;
            else throw ParseError(name, line_no, "unknown format '" + fmt + "'");
            have_format = true;
        } else if (kw == "element") {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (e.name.empty() || count < 0) throw ParseError(name, line_no, "malformed element line");
            e.count = static_cast<std::size_t>(count);
            data.elements.push_back(std::move(e));
        } else if (kw == "property") {
            if (data.elements.empty()) throw ParseError(name, line_no, "property before any element");
            std::string type, prop;
            ls >> type >> prop;
            if (type == "list") throw ParseError(name, line_no, "list properties are not supported");
            PlyProperty p;
            if (!parse_type(type, p.type) || prop.empty()) throw ParseError(name, line_no, "malformed property line");
            data.elements.back().properties.push_back(p);
            data.elements.back().properties.back().name = prop;
        } else {
            throw ParseError(name, line_no, "unknown header keyword '" + kw + "'");
        }
    }
    if (!have_format) throw ParseError(name, line_no, "missing format line");

    if (data.format == PlyFormat::Ascii) {
        for (auto& e : data.elements) {
            e.values.resize(e.count * e.properties.size());
            for (std::size_t r = 0; r < e.count; ++r) {
                const std::string line = next_line();
                const char* p = line.c_str();
                for (std::size_t c = 0; c < e.properties.size(); ++c) {
                    char* end = nullptr;
                    const double v = std::strtod(p, &end);
                    if (end == p) throw ParseError(name, line_no, "expected " + std::to_string(e.properties.size()) + " values");
                    // Same value the binary encoding would carry for this type.
                    e.values[r * e.properties.size() + c] =
                        e.properties[c].type == PlyType::Float32 ? static_cast<double>(static_cast<float>(v)) : v;
                    p = end;
                }
            }
        }
        return data;
    }

    const bool be = data.format == PlyFormat::BinaryBigEndian;
    for (auto& e : data.elements) {
        std::size_t stride = 0;
        for (const auto& p : e.properties) stride += type_size(p.type);
        if (pos + stride * e.count > bytes.size()) {
            throw ParseError(name, bytes.size(), "element '" + e.name + "' truncated");
        }
        e.values.resize(e.count * e.properties.size());
        for (std::size_t r = 0; r < e.count; ++r) {
            for (std::size_t c = 0; c < e.properties.size(); ++c) {
                e.values[r * e.properties.size() + c] = decode_scalar(&bytes[pos], e.properties[c].type, be);
                pos += type_size(e.properties[c].type);
            }
        }
    }
    if (pos != bytes.size()) throw ParseError(name, pos, "trailing bytes after last element");
    return data;
}

std::vector<std::uint8_t> encode_ply(const PlyData& data)
{
    std::ostringstream hs;
    hs << "ply\nformat "
       << (data.format == PlyFormat::Ascii                ? "ascii"
           : data.format == PlyFormat::BinaryLittleEndian ? "binary_little_endian"
                                                          : "binary_big_endian")
       << " 1.0\n";
    for (const auto& c : data.comments) hs << "comment " << c << '\n';
    for (const auto& e : data.elements) {
        if (e.values.size() != e.count * e.properties.size()) {
            throw std::invalid_argument("PLY element '" + e.name + "' has inconsistent value count");
        }
        hs << "element " << e.name << ' ' << e.count << '\n';
        for (const auto& p : e.properties) hs << "property " << ply_type_name(p.type) << ' ' << p.name << '\n';
    }
    hs << "end_header\n";
    const std::string header = hs.str();
    std::vector<std::uint8_t> out(header.begin(), header.end());

    if (data.format == PlyFormat::Ascii) {
        for (const auto& e : data.elements) {
            for (std::size_t r = 0; r < e.count; ++r) {
                std::string line;
                for (std::size_t c = 0; c < e.properties.size(); ++c) {
                    if (c) line += ' ';
                    line += format_ascii(e.at(r, static_cast<int>(c)), e.properties[c].type);
                }
                line += '\n';
                out.insert(out.end(), line.begin(), line.end());
            }
        }
        return out;
    }
    const bool be = data.format == PlyFormat::BinaryBigEndian;
    for (const auto& e : data.elements) {
        for (std::size_t r = 0; r < e.count; ++r) {
            for (std::size_t c = 0; c < e.properties.size(); ++c) {
                encode_scalar(out, e.at(r, static_cast<int>(c)), e.properties[c].type, be);
            }
        }
    }
    return out;
}

PlyData read_ply(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingInput(path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_ply(bytes, path);
}

void write_ply(const std::string& path, const PlyData& data)
{
    const auto bytes = encode_ply(data);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fluidrecon
