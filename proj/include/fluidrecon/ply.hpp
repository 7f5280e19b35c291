#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fluidrecon {

enum class PlyFormat { Ascii, BinaryLittleEndian, BinaryBigEndian };
enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool operator==(const PlyProperty&) const = default;
};

/// One element block with scalar properties. Values are held as double,
/// which represents every supported scalar type exactly.
struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::vector<double> values;  // count x properties, row-major

    int property_index(const std::string& prop) const;  // -1 if absent
    double& at(std::size_t row, int prop) { return values[row * properties.size() + prop]; }
    double at(std::size_t row, int prop) const { return values[row * properties.size() + prop]; }
    bool operator==(const PlyElement&) const = default;
};

struct PlyData {
    PlyFormat format = PlyFormat::BinaryLittleEndian;
    std::vector<std::string> comments;
    std::vector<PlyElement> elements;

    PlyElement* find(const std::string& name);
    const PlyElement* find(const std::string& name) const;
    bool operator==(const PlyData&) const = default;
};

/// Parses a PLY file held in memory. List properties are rejected.
/// Errors are ParseError with a line number (header) or byte offset (body).
PlyData decode_ply(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");
std::vector<std::uint8_t> encode_ply(const PlyData& data);

PlyData read_ply(const std::string& path);
void write_ply(const std::string& path, const PlyData& data);

const char* ply_type_name(PlyType t);

}  // namespace fluidrecon
