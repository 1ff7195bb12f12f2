#pragma once

#include <cstdint>
#include <vector>

#include "hyperchange/io.hpp"

namespace hyperchange {

// Bi-temporal scene construction: a smooth material map with per-material
// spectra, band-wise low-pass filtered uniform noise, a small rigid offset,
// and anomalies implanted by copying blocks from elsewhere in the scene.
struct SynthConfig {
    int height = 64;
    int width = 64;
    int bands = 16;
    int material_count = 5;
    double noise_amplitude = 10.0;  // uniform(-a, a) before filtering
    double blur_sigma = 10.0;       // px
    int offset_x = 1;
    int offset_y = 1;
    int anomaly_count = 6;
    int anomaly_block = 3;          // square block side, px
    double jitter_sigma = 0.5;      // per-pixel spectral jitter
    std::uint64_t seed = 0;
};

struct SynthScene {
    HsiCube x1;
    HsiCube x2;
    LabelMap truth;
    std::vector<int> material_labels;  // H*W, for tests
};

SynthScene synth_bitemporal(const SynthConfig& cfg);

}  // namespace hyperchange
