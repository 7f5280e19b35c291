#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fluidrecon {

/// Malformed or unreadable input file. `offset` is a byte offset for binary
/// formats and a line number for text formats.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string file, std::uint64_t offset, const std::string& what)
        : std::runtime_error(file + " @" + std::to_string(offset) + ": " + what), file_(std::move(file)), offset_(offset)
    {
    }

    const std::string& file() const { return file_; }
    std::uint64_t offset() const { return offset_; }

private:
    std::string file_;
    std::uint64_t offset_;
};

/// A referenced input does not exist.
class MissingInput : public std::runtime_error {
public:
    explicit MissingInput(const std::string& path) : std::runtime_error("missing input: " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace fluidrecon
