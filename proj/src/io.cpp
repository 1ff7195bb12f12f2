#include "hyperchange/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "hyperchange/tensor.hpp"

namespace hyperchange {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'U', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF64 = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* field) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw ParseError(std::string("HCUBE: truncated ") + field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void write_record(std::ostream& os, const HcubeRecord& rec) {
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, kDtypeF64);
    put_u32(os, static_cast<std::uint32_t>(rec.h));
    put_u32(os, static_cast<std::uint32_t>(rec.w));
    put_u32(os, static_cast<std::uint32_t>(rec.c));
    put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
    os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
    for (double v : rec.values) put_f64(os, v);
}

HcubeRecord read_record(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is) throw ParseError("HCUBE: truncated magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("HCUBE: bad magic");
    if (get_u32(is, "version") != kVersion) throw ParseError("HCUBE: unsupported version");
    if (get_u32(is, "dtype") != kDtypeF64) throw ParseError("HCUBE: unsupported dtype");
    HcubeRecord rec;
    rec.h = static_cast<int>(get_u32(is, "height"));
    rec.w = static_cast<int>(get_u32(is, "width"));
    rec.c = static_cast<int>(get_u32(is, "bands"));
    std::uint32_t nlen = get_u32(is, "name length");
    rec.name.resize(nlen);
    is.read(rec.name.data(), nlen);
    if (!is) throw ParseError("HCUBE: truncated name");
    size_t n = static_cast<size_t>(rec.h) * rec.w * rec.c;
    rec.values.resize(n);
    std::vector<unsigned char> buf(n * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(is.gcount()) != buf.size())
        throw ParseError("HCUBE: truncated payload");
    for (size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(buf[i * 8 + j]) << (8 * j);
        rec.values[i] = std::bit_cast<double>(bits);
    }
    return rec;
}

std::vector<HcubeRecord> read_all_records(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("HCUBE: cannot open " + path);
    std::vector<HcubeRecord> recs;
    while (true) {
        is.peek();
        if (is.eof()) break;
        recs.push_back(read_record(is));
    }
    if (recs.empty()) throw ParseError("HCUBE: empty file " + path);
    return recs;
}

void write_all_records(const std::string& path, const std::vector<HcubeRecord>& recs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("HCUBE: cannot write " + path);
    for (const auto& r : recs) write_record(os, r);
}

void write_hcube(const HsiCube& cube, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("HCUBE: cannot write " + path);
    HcubeRecord rec{"cube", cube.height, cube.width, cube.bands, cube.values};
    write_record(os, rec);
}

HsiCube read_hcube(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("HCUBE: cannot open " + path);
    HcubeRecord rec = read_record(is);
    HsiCube cube;
    cube.height = rec.h;
    cube.width = rec.w;
    cube.bands = rec.c;
    cube.values = std::move(rec.values);
    return cube;
}

namespace {

int pgm_token(std::istream& is, const char* field) {
    int c = is.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else {
            is.get();
        }
        c = is.peek();
    }
    int v;
    if (!(is >> v)) throw ParseError(std::string("PGM: bad ") + field);
    return v;
}

}  // namespace

void write_mask(const LabelMap& map, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("PGM: cannot write " + path);
    os << "P5\n" << map.width << " " << map.height << "\n255\n";
    for (Label l : map.labels) {
        unsigned char v = l == Label::Changed ? 255 : (l == Label::Unlabeled ? 128 : 0);
        os.put(static_cast<char>(v));
    }
}

LabelMap read_mask(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("PGM: cannot open " + path);
    char p, five;
    is.get(p);
    is.get(five);
    if (p != 'P' || five != '5') throw ParseError("PGM: bad magic");
    LabelMap map;
    map.width = pgm_token(is, "width");
    map.height = pgm_token(is, "height");
    if (pgm_token(is, "maxval") != 255) throw ParseError("PGM: maxval must be 255");
    is.get();  // single whitespace before raster
    if (map.width < 1 || map.height < 1) throw ParseError("PGM: bad dimensions");
    size_t n = static_cast<size_t>(map.width) * map.height;
    std::vector<unsigned char> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n) throw ParseError("PGM: truncated raster");
    map.labels.resize(n);
    for (size_t i = 0; i < n; ++i) {
        switch (buf[i]) {
            case 0: map.labels[i] = Label::Unchanged; break;
            case 255: map.labels[i] = Label::Changed; break;
            case 128: map.labels[i] = Label::Unlabeled; break;
            default: throw ParseError("PGM: unexpected gray value");
        }
    }
    return map;
}

void write_gray_pgm(const std::vector<double>& field, int h, int w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("PGM: cannot write " + path);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : field) { lo = std::min(lo, v); hi = std::max(hi, v); }
    double range = hi > lo ? hi - lo : 1.0;
    os << "P5\n" << w << " " << h << "\n255\n";
    for (double v : field) {
        int g = static_cast<int>(std::lround(255.0 * (v - lo) / range));
        os.put(static_cast<char>(std::clamp(g, 0, 255)));
    }
}

HsiCube normalize_cube(const HsiCube& cube) {
    HsiCube out = cube;
    for (int c = 0; c < cube.bands; ++c) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int p = 0; p < cube.height * cube.width; ++p) {
            double v = cube.values[static_cast<size_t>(p) * cube.bands + c];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        double range = hi - lo;
        for (int p = 0; p < cube.height * cube.width; ++p) {
            size_t i = static_cast<size_t>(p) * cube.bands + c;
            out.values[i] = range > 0.0 ? (cube.values[i] - lo) / range : 0.0;
        }
    }
    return out;
}

std::vector<double> gaussian_lowpass(const std::vector<double>& field, int h, int w, double sigma) {
    if (sigma <= 0.0) throw ContractViolation("gaussian_lowpass: sigma must be positive");
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double s = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        s += v;
    }
    for (double& v : kernel) v /= s;

    // half-sample symmetric reflection keeps the field mean exact for a
    // symmetric normalized kernel
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -1 - i;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    std::vector<double> tmp(field.size()), out(field.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<size_t>(k + radius)] *
                       field[static_cast<size_t>(y) * w + reflect(x + k, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<size_t>(k + radius)] *
                       tmp[static_cast<size_t>(reflect(y + k, h)) * w + x];
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

HsiCube shift_image(const HsiCube& cube, int dx, int dy) {
    if (std::abs(dx) >= cube.width || std::abs(dy) >= cube.height)
        throw ContractViolation("shift_image: offset out of range");
    HsiCube out = cube;
    for (int y = 0; y < cube.height; ++y)
        for (int x = 0; x < cube.width; ++x) {
            int sy = std::clamp(y - dy, 0, cube.height - 1);
            int sx = std::clamp(x - dx, 0, cube.width - 1);
            for (int c = 0; c < cube.bands; ++c)
                out.at(y, x, c) = cube.at(sy, sx, c);
        }
    return out;
}

}  // namespace hyperchange
