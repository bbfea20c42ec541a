#include "bdkd/png_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace bdkd {
namespace {

const unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

void put_u32_be(std::string& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_be(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::string& out, const char type[4], const std::string& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

std::string slurp(const std::string& path, const char* who) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), std::string(who) + ": cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

void write_png_rgb(const std::string& path, const Tensor& image) {
    require(image.rank() == 3 && image.dim(0) == 3, "write_png_rgb: expected [3,H,W] image");
    const int H = image.dim(1), W = image.dim(2);

    // scanlines: filter byte 0 then RGB triples
    std::string raw;
    raw.reserve(static_cast<std::size_t>(H) * (1 + 3 * W));
    for (int y = 0; y < H; ++y) {
        raw.push_back('\0');
        for (int x = 0; x < W; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const float v = image.at(ch, y, x);
                require(v >= 0.0f && v <= 1.0f, "write_png_rgb: pixel outside [0,1]");
                raw.push_back(static_cast<char>(static_cast<int>(std::lround(255.0f * v))));
            }
        }
    }

    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::string comp(comp_cap, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(comp.data()), &comp_cap,
                             reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 6);
    require(rc == Z_OK, "write_png_rgb: zlib compression failed");
    comp.resize(comp_cap);

    std::string ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(W));
    put_u32_be(ihdr, static_cast<std::uint32_t>(H));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace

    std::string out(reinterpret_cast<const char*>(kSignature), 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "write_png_rgb: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "write_png_rgb: write failed for " + path);
}

Tensor read_png_rgb(const std::string& path) {
    const std::string bytes = slurp(path, "read_png_rgb");
    require(bytes.size() > 8 && std::memcmp(bytes.data(), kSignature, 8) == 0,
            "read_png_rgb: " + path + " is not a PNG");

    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t pos = 8;
    int W = 0, H = 0;
    bool saw_ihdr = false;
    std::string idat;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = get_u32_be(p + pos);
        require(pos + 12 + len <= bytes.size(), "read_png_rgb: truncated chunk in " + path);
        const std::string type(bytes, pos + 4, 4);
        const unsigned char* data = p + pos + 8;
        if (type == "IHDR") {
            require(len == 13, "read_png_rgb: malformed IHDR");
            W = static_cast<int>(get_u32_be(data));
            H = static_cast<int>(get_u32_be(data + 4));
            require(data[8] == 8, "read_png_rgb: only 8-bit depth supported");
            require(data[9] == 2, "read_png_rgb: only RGB color type supported");
            require(data[12] == 0, "read_png_rgb: interlaced PNGs not supported");
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(reinterpret_cast<const char*>(data), len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    require(saw_ihdr && W > 0 && H > 0, "read_png_rgb: missing image header in " + path);
    require(!idat.empty(), "read_png_rgb: no image data in " + path);

    const std::size_t stride = 1 + 3 * static_cast<std::size_t>(W);
    std::string raw(static_cast<std::size_t>(H) * stride, '\0');
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int rc = uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len,
                              reinterpret_cast<const Bytef*>(idat.data()), static_cast<uLong>(idat.size()));
    require(rc == Z_OK && raw_len == raw.size(), "read_png_rgb: corrupt image data in " + path);

    // undo per-row filters in place (3 bytes per pixel)
    auto* rp = reinterpret_cast<unsigned char*>(raw.data());
    for (int y = 0; y < H; ++y) {
        unsigned char* row = rp + static_cast<std::size_t>(y) * stride;
        const unsigned char* prev = y > 0 ? rp + static_cast<std::size_t>(y - 1) * stride + 1 : nullptr;
        const int filter = row[0];
        unsigned char* px = row + 1;
        const int n = 3 * W;
        switch (filter) {
            case 0: break;
            case 1:
                for (int i = 3; i < n; ++i) px[i] = static_cast<unsigned char>(px[i] + px[i - 3]);
                break;
            case 2:
                if (prev)
                    for (int i = 0; i < n; ++i) px[i] = static_cast<unsigned char>(px[i] + prev[i]);
                break;
            case 3:
                for (int i = 0; i < n; ++i) {
                    const int a = i >= 3 ? px[i - 3] : 0;
                    const int b = prev ? prev[i] : 0;
                    px[i] = static_cast<unsigned char>(px[i] + (a + b) / 2);
                }
                break;
            case 4:
                for (int i = 0; i < n; ++i) {
                    const int a = i >= 3 ? px[i - 3] : 0;
                    const int b = prev ? prev[i] : 0;
                    const int c = (prev && i >= 3) ? prev[i - 3] : 0;
                    px[i] = static_cast<unsigned char>(px[i] + paeth(a, b, c));
                }
                break;
            default:
                throw ContractError("read_png_rgb: unknown filter type in " + path);
        }
    }

    Tensor img({3, H, W});
    for (int y = 0; y < H; ++y) {
        const unsigned char* px = rp + static_cast<std::size_t>(y) * stride + 1;
        for (int x = 0; x < W; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(ch, y, x) = static_cast<float>(px[3 * x + ch]) / 255.0f;
    }
    return img;
}

void write_f32_image(const std::string& path, const Tensor& image) {
    require(image.rank() == 3, "write_f32_image: expected [C,H,W] image");
    std::string out = "BDKF";
    auto put_u32_le = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    for (int i = 0; i < 3; ++i) put_u32_le(static_cast<std::uint32_t>(image.dim(i)));
    for (float f : image.data) put_u32_le(std::bit_cast<std::uint32_t>(f));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "write_f32_image: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "write_f32_image: write failed for " + path);
}

Tensor read_f32_image(const std::string& path) {
    const std::string bytes = slurp(path, "read_f32_image");
    require(bytes.size() >= 16 && bytes.compare(0, 4, "BDKF") == 0,
            "read_f32_image: " + path + " is not a raw image sidecar");
    auto get_u32_le = [&bytes](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<std::uint8_t>(bytes[at + static_cast<std::size_t>(i)]);
        return v;
    };
    const int C = static_cast<int>(get_u32_le(4));
    const int H = static_cast<int>(get_u32_le(8));
    const int W = static_cast<int>(get_u32_le(12));
    const std::size_t n = static_cast<std::size_t>(C) * H * W;
    require(bytes.size() == 16 + 4 * n, "read_f32_image: size mismatch in " + path);
    Tensor img({C, H, W});
    for (std::size_t i = 0; i < n; ++i)
        img.data[i] = std::bit_cast<float>(get_u32_le(16 + 4 * i));
    return img;
}

} // namespace bdkd
