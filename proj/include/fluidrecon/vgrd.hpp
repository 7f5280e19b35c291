#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fluidrecon/grid.hpp"

namespace fluidrecon {

/// Multi-channel f32 grid field as stored in a VGRD file. Data is
/// channel-major, x-fastest within a channel.
struct GridField {
    std::array<std::uint32_t, 3> dims{0, 0, 0};
    float dx = 1.0f;
    std::array<float, 3> origin{0.0f, 0.0f, 0.0f};
    std::uint32_t channels = 1;
    std::vector<float> data;

    std::size_t cell_count() const { return std::size_t{dims[0]} * dims[1] * dims[2]; }
    float& at(std::uint32_t channel, std::size_t cell) { return data[channel * cell_count() + cell]; }
    float at(std::uint32_t channel, std::size_t cell) const { return data[channel * cell_count() + cell]; }
    bool operator==(const GridField&) const = default;
};

inline constexpr std::uint32_t kVgrdVersion = 1;

void write_vgrd(const std::string& path, const GridField& field);
GridField read_vgrd(const std::string& path);

std::vector<std::uint8_t> encode_vgrd(const GridField& field);
GridField decode_vgrd(const std::vector<std::uint8_t>& bytes, const std::string& name = "<memory>");

/// Three-channel velocity field of a grid.
GridField velocity_field(const SimGrid& grid);
/// Copies a three-channel field into the grid's velocity; dims must match.
void load_velocity(SimGrid& grid, const GridField& field);

}  // namespace fluidrecon
