#include "rimlab/rvol.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <nlohmann/json.hpp>

#include "rimlab/error.hpp"

namespace rimlab::rvol {
namespace {

constexpr std::array<char, 4> kMagic{'R', 'V', 'O', 'L'};
constexpr std::uint32_t kMaxHeader = 1U << 20;

static_assert(std::numeric_limits<float>::is_iec559, "RVOL f32le payloads require IEEE-754 floats");

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFU));
    }
}

std::vector<std::uint8_t> encode_header(const Geometry& g, const char* dtype) {
    nlohmann::json header;
    header["dims"] = {g.dims.nx, g.dims.ny, g.dims.nz};
    header["spacing"] = {g.spacing.sx, g.spacing.sy, g.spacing.sz};
    header["dtype"] = dtype;
    header["order"] = "x-fastest";
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    put_u32le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    return out;
}

struct Parsed {
    Geometry geometry;
    std::string dtype;
    std::span<const std::uint8_t> payload;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw ParseError("RVOL: missing magic bytes");
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) {
        header_len |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    }
    if (header_len > kMaxHeader || bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw ParseError("RVOL: truncated header");
    }
    const std::string_view text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);

    Parsed parsed;
    try {
        const auto header = nlohmann::json::parse(text);
        const auto& dims = header.at("dims");
        const auto& spacing = header.at("spacing");
        if (dims.size() != 3 || spacing.size() != 3) {
            throw ParseError("RVOL: dims and spacing need three components");
        }
        parsed.geometry.dims = {dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()};
        parsed.geometry.spacing = {spacing[0].get<double>(), spacing[1].get<double>(), spacing[2].get<double>()};
        parsed.dtype = header.at("dtype").get<std::string>();
        if (header.value("order", std::string("x-fastest")) != "x-fastest") {
            throw ParseError("RVOL: unsupported voxel order");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("RVOL: bad header: ") + e.what());
    }
    try {
        parsed.geometry.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("RVOL: ") + e.what());
    }
    if (parsed.dtype != "f32le" && parsed.dtype != "u8") {
        throw ParseError("RVOL: unsupported dtype '" + parsed.dtype + "'");
    }
    const std::size_t elem = parsed.dtype == "f32le" ? 4 : 1;
    const std::size_t expected = parsed.geometry.dims.size() * elem;
    parsed.payload = bytes.subspan(8 + header_len);
    if (parsed.payload.size() != expected) {
        throw ParseError("RVOL: payload has " + std::to_string(parsed.payload.size()) + " bytes, expected " +
                         std::to_string(expected));
    }
    return parsed;
}

float load_f32le(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    }
    return std::bit_cast<float>(bits);
}

} // namespace

std::vector<std::uint8_t> encode(const Volume3D& volume) {
    auto out = encode_header(volume.geometry(), "f32le");
    out.reserve(out.size() + volume.size() * 4);
    for (float v : volume.values()) {
        put_u32le(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<std::uint8_t> encode(const Mask3D& mask) {
    auto out = encode_header(mask.geometry(), "u8");
    for (auto v : mask.values()) {
        out.push_back(v != 0 ? 1 : 0);
    }
    return out;
}

AnyGrid decode(std::span<const std::uint8_t> bytes) {
    const auto parsed = parse(bytes);
    if (parsed.dtype == "u8") {
        std::vector<std::uint8_t> data(parsed.payload.begin(), parsed.payload.end());
        return Mask3D(parsed.geometry, std::move(data));
    }
    std::vector<float> data(parsed.geometry.dims.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = load_f32le(parsed.payload.data() + 4 * i);
    }
    return Volume3D(parsed.geometry, std::move(data));
}

Volume3D decode_volume(std::span<const std::uint8_t> bytes) {
    auto any = decode(bytes);
    if (auto* mask = std::get_if<Mask3D>(&any)) {
        std::vector<float> data(mask->values().begin(), mask->values().end());
        return Volume3D(mask->geometry(), std::move(data));
    }
    auto volume = std::get<Volume3D>(std::move(any));
    try {
        require_finite(volume);
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("RVOL: ") + e.what());
    }
    return volume;
}

Mask3D decode_mask(std::span<const std::uint8_t> bytes) {
    auto any = decode(bytes);
    auto* mask = std::get_if<Mask3D>(&any);
    if (mask == nullptr) {
        throw ParseError("RVOL: expected a u8 mask payload");
    }
    for (auto v : mask->values()) {
        if (v > 1) {
            throw ParseError("RVOL: mask values must be 0 or 1");
        }
    }
    return std::move(*mask);
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save(const std::filesystem::path& path, const Volume3D& volume) { write_file(path, encode(volume)); }
void save(const std::filesystem::path& path, const Mask3D& mask) { write_file(path, encode(mask)); }

Volume3D load_volume(const std::filesystem::path& path) {
    try {
        return decode_volume(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Mask3D load_mask(const std::filesystem::path& path) {
    try {
        return decode_mask(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace rimlab::rvol

namespace rimlab::base64 {
namespace {
constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int sextet(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
} // namespace

std::string encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> decode(std::string_view text) {
    if (text.size() % 4 != 0) {
        throw ParseError("base64: length is not a multiple of 4");
    }
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t v = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                ++pad;
                v <<= 6;
                continue;
            }
            const int s = sextet(c);
            if (s < 0 || pad > 0) {
                throw ParseError("base64: invalid character");
            }
            v = (v << 6) | static_cast<std::uint32_t>(s);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    }
    return out;
}

} // namespace rimlab::base64
