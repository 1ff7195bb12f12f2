#include "hyperchange/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hyperchange/tensor.hpp"

namespace hyperchange {

namespace {

// smooth random field in [0,1]-ish, used for region growing
std::vector<double> smooth_field(std::mt19937_64& rng, int h, int w, double sigma) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> f(static_cast<size_t>(h) * w);
    for (double& v : f) v = uni(rng);
    return gaussian_lowpass(f, h, w, sigma);
}

std::vector<double> material_signature(std::mt19937_64& rng, int bands) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> raw(static_cast<size_t>(bands));
    for (double& v : raw) v = uni(rng);
    double sigma = std::max(1.0, bands / 8.0);
    std::vector<double> smooth = gaussian_lowpass(raw, 1, bands, sigma);
    double lo = *std::min_element(smooth.begin(), smooth.end());
    double hi = *std::max_element(smooth.begin(), smooth.end());
    double range = hi > lo ? hi - lo : 1.0;
    double out_lo = 20.0 + 40.0 * uni(rng);
    double out_hi = 120.0 + 100.0 * uni(rng);
    for (double& v : smooth) v = out_lo + (out_hi - out_lo) * (v - lo) / range;
    return smooth;
}

}  // namespace

SynthScene synth_bitemporal(const SynthConfig& cfg) {
    if (cfg.height < 1 || cfg.width < 1 || cfg.bands < 1 || cfg.material_count < 2)
        throw ContractViolation("synth: invalid dimensions");
    if (cfg.blur_sigma <= 0.0)
        throw ContractViolation("synth: blur sigma must be positive");
    if (cfg.anomaly_block > cfg.height || cfg.anomaly_block > cfg.width)
        throw ContractViolation("synth: anomaly block does not fit inside the image");

    std::mt19937_64 rng(cfg.seed);
    int h = cfg.height, w = cfg.width, c = cfg.bands;
    size_t npix = static_cast<size_t>(h) * w;

    // material regions: argmax over smoothed per-material fields
    double region_sigma = std::max(2.0, std::min(h, w) / 10.0);
    std::vector<std::vector<double>> fields;
    fields.reserve(static_cast<size_t>(cfg.material_count));
    for (int m = 0; m < cfg.material_count; ++m)
        fields.push_back(smooth_field(rng, h, w, region_sigma));
    std::vector<int> labels(npix, 0);
    for (size_t p = 0; p < npix; ++p) {
        int best = 0;
        for (int m = 1; m < cfg.material_count; ++m)
            if (fields[static_cast<size_t>(m)][p] > fields[static_cast<size_t>(best)][p]) best = m;
        labels[p] = best;
    }

    std::vector<std::vector<double>> sigs;
    sigs.reserve(static_cast<size_t>(cfg.material_count));
    for (int m = 0; m < cfg.material_count; ++m)
        sigs.push_back(material_signature(rng, c));

    HsiCube x1;
    x1.height = h;
    x1.width = w;
    x1.bands = c;
    x1.values.resize(npix * static_cast<size_t>(c));
    std::normal_distribution<double> jitter(0.0, cfg.jitter_sigma);
    for (size_t p = 0; p < npix; ++p) {
        const std::vector<double>& sig = sigs[static_cast<size_t>(labels[p])];
        for (int b = 0; b < c; ++b)
            x1.values[p * c + b] = sig[static_cast<size_t>(b)] +
                                   (cfg.jitter_sigma > 0.0 ? jitter(rng) : 0.0);
    }

    // per-band filtered uniform noise
    HsiCube noisy = x1;
    if (cfg.noise_amplitude > 0.0) {
        std::uniform_real_distribution<double> uni(-cfg.noise_amplitude, cfg.noise_amplitude);
        for (int b = 0; b < c; ++b) {
            std::vector<double> nf(npix);
            for (double& v : nf) v = uni(rng);
            nf = gaussian_lowpass(nf, h, w, cfg.blur_sigma);
            for (size_t p = 0; p < npix; ++p) noisy.values[p * c + b] += nf[p];
        }
    }

    HsiCube x2 = (cfg.offset_x != 0 || cfg.offset_y != 0)
                     ? shift_image(noisy, cfg.offset_x, cfg.offset_y)
                     : noisy;

    SynthScene scene;
    scene.truth.height = h;
    scene.truth.width = w;
    scene.truth.labels.assign(npix, Label::Unchanged);

    // implant anomalies: copy blocks from regions with different material labels
    int bs = cfg.anomaly_block;
    HsiCube snapshot = x2;
    std::vector<std::uint8_t> occupied(npix, 0);
    std::uniform_int_distribution<int> dy(0, h - bs), dx(0, w - bs);
    for (int a = 0; a < cfg.anomaly_count; ++a) {
        int ty = -1, tx = -1;
        for (int attempt = 0; attempt < 2000; ++attempt) {
            int y = dy(rng), x = dx(rng);
            bool free = true;
            for (int by = 0; by < bs && free; ++by)
                for (int bx = 0; bx < bs && free; ++bx)
                    if (occupied[static_cast<size_t>(y + by) * w + x + bx]) free = false;
            if (free) { ty = y; tx = x; break; }
        }
        if (ty < 0) throw ContractViolation("synth: anomaly placement overflow");
        int sy = -1, sx = -1;
        for (int attempt = 0; attempt < 2000; ++attempt) {
            int y = dy(rng), x = dx(rng);
            bool distinct = true;
            for (int by = 0; by < bs && distinct; ++by)
                for (int bx = 0; bx < bs && distinct; ++bx)
                    if (labels[static_cast<size_t>(y + by) * w + x + bx] ==
                        labels[static_cast<size_t>(ty + by) * w + tx + bx])
                        distinct = false;
            if (distinct) { sy = y; sx = x; break; }
        }
        if (sy < 0) throw ContractViolation("synth: no anomaly source with distinct materials");
        for (int by = 0; by < bs; ++by)
            for (int bx = 0; bx < bs; ++bx) {
                for (int b = 0; b < c; ++b)
                    x2.at(ty + by, tx + bx, b) = snapshot.at(sy + by, sx + bx, b);
                occupied[static_cast<size_t>(ty + by) * w + tx + bx] = 1;
                scene.truth.at(ty + by, tx + bx) = Label::Changed;
            }
    }

    scene.x1 = std::move(x1);
    scene.x2 = std::move(x2);
    scene.material_labels = std::move(labels);
    return scene;
}

}  // namespace hyperchange
