#include "covdet/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace covdet {

ImageBuffer extract_crop(const ImageBuffer& img, Vec2 center, int size) {
    const int x0 = static_cast<int>(std::lround(center.x)) - size / 2;
    const int y0 = static_cast<int>(std::lround(center.y)) - size / 2;
    if (size <= 0 || x0 < 0 || y0 < 0 || x0 + size > img.width || y0 + size > img.height)
        throw std::out_of_range("crop outside image");
    ImageBuffer out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
    return out;
}

void write_pgm(const ImageBuffer& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double v = std::lround(img.at(x, y));
            row[x] = static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v));
        }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

ImageBuffer read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    if (next_token(f) != "P5") throw std::runtime_error("not a binary PGM: " + path);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(f));
        h = std::stoi(next_token(f));
        maxval = std::stoi(next_token(f));
    } catch (const std::exception&) {
        throw std::runtime_error("malformed PGM header: " + path);
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw std::runtime_error("malformed PGM header: " + path);
    ImageBuffer img(w, h);
    const size_t npix = static_cast<size_t>(w) * h;
    if (maxval < 256) {
        std::vector<unsigned char> buf(npix);
        f.read(reinterpret_cast<char*>(buf.data()), buf.size());
        if (static_cast<size_t>(f.gcount()) != npix)
            throw std::runtime_error("truncated PGM: " + path);
        for (size_t i = 0; i < npix; ++i)
            img.data[i] = buf[i] * (255.0 / maxval);
    } else {
        std::vector<unsigned char> buf(npix * 2);
        f.read(reinterpret_cast<char*>(buf.data()), buf.size());
        if (static_cast<size_t>(f.gcount()) != npix * 2)
            throw std::runtime_error("truncated PGM: " + path);
        for (size_t i = 0; i < npix; ++i) {
            const int v = buf[2 * i] * 256 + buf[2 * i + 1];  // big-endian per spec
            img.data[i] = v * (255.0 / maxval);
        }
    }
    return img;
}

}  // namespace covdet
