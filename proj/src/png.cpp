// SPDX-License-Identifier: Apache-2.0
#include <gvr/scene.hpp>

#include <zlib.h>

#include <array>
#include <fstream>

namespace gvr::scene
{

namespace
{

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data)
{
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    auto body = std::vector<std::uint8_t>(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_u32(out, static_cast<std::uint32_t>(crc32(0L, body.data(), static_cast<uInt>(body.size()))));
}

void write_rgb_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb)
{
    // Each scanline is prefixed with filter type 0.
    auto raw = std::vector<std::uint8_t> {};
    raw.reserve(static_cast<std::size_t>(height) * (static_cast<std::size_t>(width) * 3 + 1));
    for (auto y = 0; y < height; ++y)
    {
        raw.push_back(0);
        const auto* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
    }
    auto packed_size = compressBound(static_cast<uLong>(raw.size()));
    auto packed = std::vector<std::uint8_t>(packed_size);
    if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK)
        throw Error(ErrorKind::Io, "zlib compression failed");
    packed.resize(packed_size);

    auto png = std::vector<std::uint8_t> { 0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n' };
    auto header = std::vector<std::uint8_t> {};
    put_u32(header, static_cast<std::uint32_t>(width));
    put_u32(header, static_cast<std::uint32_t>(height));
    header.insert(header.end(), { 8, 2, 0, 0, 0 }); // 8-bit RGB
    put_chunk(png, "IHDR", header);
    put_chunk(png, "IDAT", packed);
    put_chunk(png, "IEND", {});

    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!out)
        throw Error(ErrorKind::Io, "failed writing " + path.string());
}

} // namespace

void write_png(const std::filesystem::path& path, const Raster& raster)
{
    write_rgb_png(path, raster.width, raster.height, rasterize(raster));
}

void write_png(const std::filesystem::path& path, const ObservationImage& image)
{
    write_rgb_png(path, image.width, image.height, image.rgb);
}

} // namespace gvr::scene
