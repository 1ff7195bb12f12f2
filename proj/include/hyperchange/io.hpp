#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperchange {

// Thrown on malformed files; the message names the offending field.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// H x W x C hyperspectral image, row-major with the band axis fastest.
struct HsiCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<double> values;
    std::optional<std::vector<double>> wavelengths;

    double at(int y, int x, int c) const {
        return values[(static_cast<size_t>(y) * width + x) * bands + c];
    }
    double& at(int y, int x, int c) {
        return values[(static_cast<size_t>(y) * width + x) * bands + c];
    }
    size_t numel() const { return static_cast<size_t>(height) * width * bands; }
};

// One record of the HCUBE container: "HCUB" magic, version 1, f64 dtype,
// H/W/C dims, a name, then H*W*C little-endian doubles.
struct HcubeRecord {
    std::string name;
    int h = 0, w = 0, c = 0;
    std::vector<double> values;
};

void write_record(std::ostream& os, const HcubeRecord& rec);
HcubeRecord read_record(std::istream& is);
std::vector<HcubeRecord> read_all_records(const std::string& path);
void write_all_records(const std::string& path, const std::vector<HcubeRecord>& recs);

void write_hcube(const HsiCube& cube, const std::string& path);
HsiCube read_hcube(const std::string& path);

enum class Label : std::uint8_t { Unchanged = 0, Changed = 1, Unlabeled = 2 };

struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<Label> labels;

    Label at(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
    Label& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
};

// PGM P5 encoding: 0 = unchanged, 255 = changed, 128 = unlabeled.
// Any other gray value is a parse error.
void write_mask(const LabelMap& map, const std::string& path);
LabelMap read_mask(const std::string& path);

// 8-bit PGM of an arbitrary H*W field, min-max scaled, for inspection.
void write_gray_pgm(const std::vector<double>& field, int h, int w, const std::string& path);

// Per-band min-max scaling to [0,1]; constant bands map to 0.
HsiCube normalize_cube(const HsiCube& cube);

// Separable Gaussian blur, kernel radius ceil(3*sigma), normalized to sum 1,
// half-sample symmetric reflection at the edges.
std::vector<double> gaussian_lowpass(const std::vector<double>& field, int h, int w, double sigma);

// Translation by (dx, dy) pixels with edge-replication fill.
HsiCube shift_image(const HsiCube& cube, int dx, int dy);

}  // namespace hyperchange
