#include "posal/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace posal::io {

namespace {

void skip_ws_and_comments(std::istream& is) {
    for (;;) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            return;
        }
    }
}

int read_int(std::istream& is) {
    skip_ws_and_comments(is);
    int v;
    is >> v;
    if (!is) throw DataError("pnm: malformed header");
    return v;
}

uint8_t to_byte(float v) {
    return static_cast<uint8_t>(std::clamp(std::lround(v * 255.f), 0L, 255L));
}

}  // namespace

void write_ppm(const std::string& path, const std::vector<Grid<float>>& channels) {
    if (channels.size() != 3) throw ShapeMismatch("write_ppm: expected 3 channels");
    int h = channels[0].rows(), w = channels[0].cols();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_ppm: cannot open " + path);
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) row[c * 3 + ch] = to_byte(channels[ch](r, c));
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw DataError("write_ppm: write failed for " + path);
}

std::vector<Grid<float>> read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_ppm: cannot open " + path);
    std::string magic(2, '\0');
    is.read(magic.data(), 2);
    if (magic != "P6") throw DataError("read_ppm: not a P6 file: " + path);
    int w = read_int(is), h = read_int(is), maxval = read_int(is);
    if (maxval != 255) throw DataError("read_ppm: only 8-bit files supported");
    is.get();  // single whitespace after header
    std::vector<Grid<float>> channels(3, Grid<float>(h, w));
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int r = 0; r < h; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!is) throw DataError("read_ppm: truncated pixel data in " + path);
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch) channels[ch](r, c) = row[c * 3 + ch] / 255.f;
    }
    return channels;
}

void write_pgm(const std::string& path, const Grid<int>& gray) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("write_pgm: cannot open " + path);
    os << "P5\n" << gray.cols() << " " << gray.rows() << "\n255\n";
    std::vector<uint8_t> row(gray.cols());
    for (int r = 0; r < gray.rows(); ++r) {
        for (int c = 0; c < gray.cols(); ++c) {
            int v = gray(r, c);
            if (v < 0 || v > 255) throw DataError("write_pgm: value out of 8-bit range");
            row[c] = static_cast<uint8_t>(v);
        }
        os.write(reinterpret_cast<const char*>(row.data()), gray.cols());
    }
    if (!os) throw DataError("write_pgm: write failed for " + path);
}

Grid<int> read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_pgm: cannot open " + path);
    std::string magic(2, '\0');
    is.read(magic.data(), 2);
    if (magic != "P5") throw DataError("read_pgm: not a P5 file: " + path);
    int w = read_int(is), h = read_int(is), maxval = read_int(is);
    if (maxval != 255) throw DataError("read_pgm: only 8-bit files supported");
    is.get();
    Grid<int> out(h, w);
    std::vector<uint8_t> row(w);
    for (int r = 0; r < h; ++r) {
        is.read(reinterpret_cast<char*>(row.data()), w);
        if (!is) throw DataError("read_pgm: truncated pixel data in " + path);
        for (int c = 0; c < w; ++c) out(r, c) = row[c];
    }
    return out;
}

}  // namespace posal::io
