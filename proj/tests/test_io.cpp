#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "hyperchange/io.hpp"
#include "hyperchange/synth.hpp"

using namespace hyperchange;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("hcube round trip") {
    HsiCube cube;
    cube.height = 3;
    cube.width = 2;
    cube.bands = 4;
    cube.values.resize(cube.numel());
    for (size_t i = 0; i < cube.values.size(); ++i)
        cube.values[i] = 0.25 * static_cast<double>(i) - 1.0;

    TempFile f("io_roundtrip.hcube");
    write_hcube(cube, f.path);
    HsiCube back = read_hcube(f.path);
    CHECK(back.height == 3);
    CHECK(back.width == 2);
    CHECK(back.bands == 4);
    CHECK(back.values == cube.values);
}

TEST_CASE("hcube multi-record container preserves order and names") {
    std::vector<HcubeRecord> recs;
    recs.push_back({"alpha", 2, 2, 1, {1, 2, 3, 4}});
    recs.push_back({"beta", 1, 1, 3, {5, 6, 7}});
    TempFile f("io_records.hcube");
    write_all_records(f.path, recs);
    auto back = read_all_records(f.path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "alpha");
    CHECK(back[0].values == recs[0].values);
    CHECK(back[1].name == "beta");
    CHECK(back[1].c == 3);
}

TEST_CASE("truncated hcube names the offending field") {
    HsiCube cube;
    cube.height = 2;
    cube.width = 2;
    cube.bands = 1;
    cube.values = {1, 2, 3, 4};
    TempFile f("io_truncated.hcube");
    write_hcube(cube, f.path);
    // chop the payload
    std::ifstream is(f.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    std::ofstream os(f.path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<long>(bytes.size() - 10));
    os.close();
    CHECK_THROWS_AS(read_hcube(f.path), ParseError);
}

TEST_CASE("bad magic is rejected") {
    TempFile f("io_badmagic.hcube");
    std::ofstream os(f.path, std::ios::binary);
    os << "NOPE" << std::string(32, '\0');
    os.close();
    CHECK_THROWS_WITH_AS(read_hcube(f.path), doctest::Contains("magic"), ParseError);
}

TEST_CASE("mask pgm round trip") {
    LabelMap map;
    map.height = 2;
    map.width = 3;
    map.labels = {Label::Unchanged, Label::Changed, Label::Unlabeled,
                  Label::Changed, Label::Unchanged, Label::Unchanged};
    TempFile f("io_mask.pgm");
    write_mask(map, f.path);
    LabelMap back = read_mask(f.path);
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.labels == map.labels);
}

TEST_CASE("mask pgm rejects stray gray values") {
    TempFile f("io_badmask.pgm");
    std::ofstream os(f.path, std::ios::binary);
    os << "P5\n2 1\n255\n";
    char px[2] = {0, 7};  // 7 is not a legal mask value
    os.write(px, 2);
    os.close();
    CHECK_THROWS_AS(read_mask(f.path), ParseError);
}

TEST_CASE("normalize_cube scales each band to [0,1]") {
    HsiCube cube;
    cube.height = 1;
    cube.width = 3;
    cube.bands = 2;
    cube.values = {0, 5, 10, 5, 20, 5};  // band 1 constant
    HsiCube n = normalize_cube(cube);
    CHECK(n.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(n.at(0, 1, 0) == doctest::Approx(0.5));
    CHECK(n.at(0, 2, 0) == doctest::Approx(1.0));
    for (int x = 0; x < 3; ++x) CHECK(n.at(0, x, 1) == 0.0);
}

TEST_CASE("gaussian lowpass preserves the mean and smooths") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-1, 1);
    int h = 24, w = 30;
    std::vector<double> field(static_cast<size_t>(h) * w);
    for (auto& v : field) v = dist(rng);
    std::vector<double> out = gaussian_lowpass(field, h, w, 2.0);

    double m_in = 0, m_out = 0, v_in = 0, v_out = 0;
    for (double v : field) m_in += v;
    for (double v : out) m_out += v;
    m_in /= field.size();
    m_out /= out.size();
    CHECK(m_out == doctest::Approx(m_in).epsilon(1e-9));
    for (double v : field) v_in += (v - m_in) * (v - m_in);
    for (double v : out) v_out += (v - m_out) * (v - m_out);
    CHECK(v_out < 0.25 * v_in);  // strong smoothing at sigma 2

    // constant field is a fixpoint
    std::vector<double> flat(static_cast<size_t>(h) * w, 4.2);
    std::vector<double> fout = gaussian_lowpass(flat, h, w, 3.0);
    for (double v : fout) CHECK(v == doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("shift_image replicates edges") {
    HsiCube cube;
    cube.height = 2;
    cube.width = 2;
    cube.bands = 1;
    cube.values = {1, 2, 3, 4};
    HsiCube s = shift_image(cube, 1, 0);  // content moves right
    CHECK(s.at(0, 0, 0) == 1);  // left column replicated
    CHECK(s.at(0, 1, 0) == 1);
    CHECK(s.at(1, 1, 0) == 3);
}

TEST_CASE("synthetic scene basic contracts") {
    SynthConfig cfg;
    cfg.height = 32;
    cfg.width = 32;
    cfg.bands = 8;
    cfg.blur_sigma = 4.0;
    cfg.seed = 42;
    SynthScene scene = synth_bitemporal(cfg);
    CHECK(scene.x1.height == 32);
    CHECK(scene.x1.numel() == scene.x2.numel());
    CHECK(scene.truth.labels.size() == 32u * 32u);
    CHECK(scene.material_labels.size() == 32u * 32u);

    int changed = 0;
    for (Label l : scene.truth.labels) changed += l == Label::Changed ? 1 : 0;
    CHECK(changed == cfg.anomaly_count * cfg.anomaly_block * cfg.anomaly_block);

    for (double v : scene.x1.values) CHECK(std::isfinite(v));
    for (double v : scene.x2.values) CHECK(std::isfinite(v));
}

TEST_CASE("synthetic scene is deterministic per seed") {
    SynthConfig cfg;
    cfg.height = 24;
    cfg.width = 24;
    cfg.bands = 6;
    cfg.blur_sigma = 3.0;
    cfg.seed = 7;
    SynthScene a = synth_bitemporal(cfg);
    SynthScene b = synth_bitemporal(cfg);
    CHECK(a.x1.values == b.x1.values);
    CHECK(a.x2.values == b.x2.values);
    CHECK(a.truth.labels == b.truth.labels);

    cfg.seed = 8;
    SynthScene c = synth_bitemporal(cfg);
    CHECK(a.x1.values != c.x1.values);
}

TEST_CASE("degenerate synthetic settings make the two dates identical") {
    SynthConfig cfg;
    cfg.height = 16;
    cfg.width = 16;
    cfg.bands = 4;
    cfg.noise_amplitude = 0.0;
    cfg.blur_sigma = 2.0;
    cfg.offset_x = 0;
    cfg.offset_y = 0;
    cfg.anomaly_count = 0;
    cfg.seed = 11;
    SynthScene scene = synth_bitemporal(cfg);
    CHECK(scene.x1.values == scene.x2.values);
    for (Label l : scene.truth.labels) CHECK(l == Label::Unchanged);
}

TEST_CASE("anomalies differ spectrally from the ground they replace") {
    SynthConfig cfg;
    cfg.height = 48;
    cfg.width = 48;
    cfg.bands = 8;
    cfg.blur_sigma = 4.0;
    cfg.noise_amplitude = 0.0;
    cfg.offset_x = 0;
    cfg.offset_y = 0;
    cfg.seed = 19;
    SynthScene scene = synth_bitemporal(cfg);
    double changed_diff = 0, unchanged_diff = 0;
    int nc = 0, nu = 0;
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
            double d = 0;
            for (int b = 0; b < cfg.bands; ++b)
                d += std::fabs(scene.x2.at(y, x, b) - scene.x1.at(y, x, b));
            if (scene.truth.at(y, x) == Label::Changed) {
                changed_diff += d;
                ++nc;
            } else {
                unchanged_diff += d;
                ++nu;
            }
        }
    REQUIRE(nc > 0);
    CHECK(changed_diff / nc > 10.0 * (unchanged_diff / nu + 1e-12));
}
