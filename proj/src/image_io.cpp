#include "promptrr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace promptrr {

namespace {

/// Next whitespace-delimited token, skipping '#' comments to end of line.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    while (true) {
        const int c = in.get();
        if (c == EOF) {
            if (tok.empty())
                throw TensorError("read_ppm: truncated header in " + path);
            return tok;
        }
        if (c == '#') {
            if (!tok.empty()) return tok;
            while (in.good() && in.get() != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
}

int parse_int(const std::string& tok, const std::string& path, const char* what) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw TensorError("read_ppm: bad " + std::string(what) + " '" + tok + "' in " + path);
    }
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorError("read_ppm: cannot open " + path);
    if (next_token(in, path) != "P6")
        throw TensorError("read_ppm: " + path + " is not a binary PPM (P6)");
    const int w = parse_int(next_token(in, path), path, "width");
    const int h = parse_int(next_token(in, path), path, "height");
    const int maxval = parse_int(next_token(in, path), path, "maxval");
    if (maxval != 255)
        throw TensorError("read_ppm: only 8-bit images supported, " + path + " has maxval " +
                          std::to_string(maxval));
    // The single whitespace byte after maxval was consumed by next_token.
    const std::size_t bytes = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw TensorError("read_ppm: truncated pixel data in " + path);

    Tensor img = Tensor::zeros({3, h, w});
    float* d = img.data().data();
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            d[c * plane + i] = static_cast<float>(buf[i * 3 + c]) / 255.f;
    return img;
}

void write_ppm(const std::string& path, const Tensor& img) {
    if (!img.defined() || img.ndim() != 3 || img.dim(0) != 3)
        throw TensorError("write_ppm: image must be [3 x H x W], got " +
                          (img.defined() ? shape_str(img.shape()) : std::string("<undefined>")));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TensorError("write_ppm: cannot open " + path + " for writing");
    const int h = img.dim(1), w = img.dim(2);
    out << "P6\n" << w << " " << h << "\n255\n";
    const float* d = img.data().data();
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<unsigned char> buf(plane * 3);
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(d[c * plane + i], 0.f, 1.f);
            buf[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.f));
        }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw TensorError("write_ppm: write failed for " + path);
}

}  // namespace promptrr
