#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rimlab/volume.hpp"

namespace rimlab::rvol {

// Layout: "RVOL" | u32 little-endian header length | UTF-8 JSON header | raw payload.
// Header keys: dims [nx,ny,nz], spacing [sx,sy,sz], dtype "f32le"|"u8", order "x-fastest".

[[nodiscard]] std::vector<std::uint8_t> encode(const Volume3D& volume);
[[nodiscard]] std::vector<std::uint8_t> encode(const Mask3D& mask);

/// Either payload kind, discriminated by the header dtype.
using AnyGrid = std::variant<Volume3D, Mask3D>;

[[nodiscard]] AnyGrid decode(std::span<const std::uint8_t> bytes);
/// Decodes and requires dtype f32le (u8 is accepted and widened).
[[nodiscard]] Volume3D decode_volume(std::span<const std::uint8_t> bytes);
/// Decodes and requires dtype u8 with values in {0,1}.
[[nodiscard]] Mask3D decode_mask(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
[[nodiscard]] std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void save(const std::filesystem::path& path, const Volume3D& volume);
void save(const std::filesystem::path& path, const Mask3D& mask);
[[nodiscard]] Volume3D load_volume(const std::filesystem::path& path);
[[nodiscard]] Mask3D load_mask(const std::filesystem::path& path);

} // namespace rimlab::rvol

namespace rimlab::base64 {

[[nodiscard]] std::string encode(std::span<const std::uint8_t> bytes);
/// Strict RFC 4648 decoding; throws ParseError on any invalid character or length.
[[nodiscard]] std::vector<std::uint8_t> decode(std::string_view text);

} // namespace rimlab::base64
