#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hyperchange/detectors.hpp"
#include "hyperchange/io.hpp"
#include "hyperchange/model.hpp"
#include "hyperchange/synth.hpp"
#include "hyperchange/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hyperchange;

namespace {

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Task { Hacd, Hbcd };
enum class AblationMode { Base, BaseSsa, Full };

struct Options {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> ablation;
    std::optional<std::string> task;
    int tile = 0;  // 0 = no tiling

    json config;  // parsed --config document, possibly empty

    void load() {
        if (config_path.empty()) return;
        std::ifstream is(config_path);
        if (!is) throw CliError("cannot open config file: " + config_path);
        try {
            is >> config;
        } catch (const json::exception& e) {
            throw CliError(std::string("config parse error: ") + e.what());
        }
    }
};

Task parse_task(const Options& opt) {
    std::string t = opt.task.value_or(opt.config.value("task", std::string("hacd")));
    if (t == "hacd") return Task::Hacd;
    if (t == "hbcd") return Task::Hbcd;
    throw CliError("unknown task: " + t);
}

AblationMode parse_ablation(const Options& opt) {
    std::string a = opt.ablation.value_or(opt.config.value("ablation", std::string("full")));
    if (a == "base") return AblationMode::Base;
    if (a == "base_ssa") return AblationMode::BaseSsa;
    if (a == "full") return AblationMode::Full;
    throw CliError("unknown ablation mode: " + a);
}

const char* ablation_name(AblationMode m) {
    switch (m) {
        case AblationMode::Base: return "base";
        case AblationMode::BaseSsa: return "base_ssa";
        default: return "full";
    }
}

SynthConfig parse_synth(const Options& opt) {
    SynthConfig cfg;
    json s = opt.config.value("synth", json::object());
    cfg.height = s.value("height", cfg.height);
    cfg.width = s.value("width", cfg.width);
    cfg.bands = s.value("bands", cfg.bands);
    cfg.material_count = s.value("material_count", cfg.material_count);
    cfg.noise_amplitude = s.value("noise_amplitude", cfg.noise_amplitude);
    cfg.blur_sigma = s.value("blur_sigma", cfg.blur_sigma);
    cfg.offset_x = s.value("offset_x", cfg.offset_x);
    cfg.offset_y = s.value("offset_y", cfg.offset_y);
    cfg.anomaly_count = s.value("anomaly_count", cfg.anomaly_count);
    cfg.anomaly_block = s.value("anomaly_block", cfg.anomaly_block);
    cfg.jitter_sigma = s.value("jitter_sigma", cfg.jitter_sigma);
    cfg.seed = s.value("seed", cfg.seed);
    if (opt.seed) cfg.seed = *opt.seed;
    return cfg;
}

TrainConfig parse_train(const Options& opt, int input_channels, AblationMode ablation) {
    TrainConfig cfg;
    json t = opt.config.value("train", json::object());
    cfg.base_lr = t.value("base_lr", cfg.base_lr);
    cfg.momentum = t.value("momentum", cfg.momentum);
    cfg.weight_decay = t.value("weight_decay", cfg.weight_decay);
    cfg.epochs = t.value("epochs", cfg.epochs);
    cfg.mask_size = t.value("mask_size", cfg.mask_size);
    cfg.seed = t.value("seed", cfg.seed);
    cfg.model.feature_width = t.value("feature_width", cfg.model.feature_width);
    cfg.model.ca_reduction = t.value("ca_reduction", cfg.model.ca_reduction);
    cfg.model.input_channels = input_channels;
    cfg.model.attention = ablation != AblationMode::Base;
    std::string pd = t.value("predetector", std::string("diff_rx"));
    if (pd == "diff_rx") cfg.predetector = Predetector::DiffRx;
    else if (pd == "cva") cfg.predetector = Predetector::Cva;
    else throw CliError("unknown predetector: " + pd);
    if (opt.seed) cfg.seed = *opt.seed;
    return cfg;
}

json train_to_json(const TrainConfig& cfg) {
    return json{{"base_lr", cfg.base_lr},
                {"momentum", cfg.momentum},
                {"weight_decay", cfg.weight_decay},
                {"epochs", cfg.epochs},
                {"mask_size", cfg.mask_size},
                {"seed", cfg.seed},
                {"feature_width", cfg.model.feature_width},
                {"ca_reduction", cfg.model.ca_reduction},
                {"predetector", cfg.predetector == Predetector::DiffRx ? "diff_rx" : "cva"}};
}

json synth_to_json(const SynthConfig& cfg) {
    return json{{"height", cfg.height},
                {"width", cfg.width},
                {"bands", cfg.bands},
                {"material_count", cfg.material_count},
                {"noise_amplitude", cfg.noise_amplitude},
                {"blur_sigma", cfg.blur_sigma},
                {"offset_x", cfg.offset_x},
                {"offset_y", cfg.offset_y},
                {"anomaly_count", cfg.anomaly_count},
                {"anomaly_block", cfg.anomaly_block},
                {"jitter_sigma", cfg.jitter_sigma},
                {"seed", cfg.seed}};
}

void write_effective_config(const fs::path& out_dir, const std::string& command, json doc) {
    doc["command"] = command;
    std::ofstream os(out_dir / (command + ".effective.json"));
    os << doc.dump(2) << "\n";
}

std::string input_path(const Options& opt, const std::string& key) {
    if (!opt.config.contains(key) || !opt.config[key].is_string())
        throw CliError("config is missing required path: " + key);
    std::string p = opt.config[key].get<std::string>();
    if (!fs::exists(p)) throw CliError("input file does not exist: " + p);
    return p;
}

HsiCube load_normalized(const std::string& path) {
    return normalize_cube(read_hcube(path));
}

// pseudo-mask file convention: 255 = selected (presumed unchanged)
LabelMap pseudo_mask_to_labels(const PseudoMask& mask) {
    LabelMap map;
    map.height = mask.height;
    map.width = mask.width;
    map.labels.resize(mask.selected.size());
    for (size_t i = 0; i < mask.selected.size(); ++i)
        map.labels[i] = mask.selected[i] ? Label::Changed : Label::Unchanged;
    return map;
}

PseudoMask labels_to_pseudo_mask(const LabelMap& map) {
    PseudoMask mask;
    mask.height = map.height;
    mask.width = map.width;
    mask.selected.resize(map.labels.size());
    for (size_t i = 0; i < map.labels.size(); ++i) {
        mask.selected[i] = map.labels[i] == Label::Changed ? 1 : 0;
        mask.selected_count += mask.selected[i];
    }
    return mask;
}

void write_scores(const ChangeScoreMap& scores, const fs::path& base, const std::string& stem) {
    HsiCube cube{scores.height, scores.width, 1, scores.scores, std::nullopt};
    write_hcube(cube, (base / (stem + ".hcube")).string());
    write_gray_pgm(scores.scores, scores.height, scores.width, (base / (stem + ".pgm")).string());
}

ChangeScoreMap read_scores(const std::string& path) {
    HsiCube cube = read_hcube(path);
    if (cube.bands != 1) throw CliError("score file must have a single band: " + path);
    return ChangeScoreMap{cube.height, cube.width, cube.values};
}

ChangeScoreMap predetect_scores(Task task, const HsiCube& x1, const HsiCube& x2) {
    return task == Task::Hacd ? diff_rx(x1, x2) : cva_magnitude(x1, x2);
}

// ---- commands ----------------------------------------------------------

int cmd_synth(Options& opt) {
    SynthConfig cfg = parse_synth(opt);
    SynthScene scene = synth_bitemporal(cfg);
    fs::path out(opt.out_dir);
    fs::create_directories(out);
    write_hcube(scene.x1, (out / "x1.hcube").string());
    write_hcube(scene.x2, (out / "x2.hcube").string());
    write_mask(scene.truth, (out / "truth.pgm").string());
    write_effective_config(out, "synth", json{{"synth", synth_to_json(cfg)}});
    std::cout << "synth: wrote " << (out / "x1.hcube").string() << ", x2.hcube, truth.pgm\n";
    return 0;
}

int cmd_predetect(Options& opt) {
    Task task = parse_task(opt);
    HsiCube x1 = load_normalized(input_path(opt, "x1"));
    HsiCube x2 = load_normalized(input_path(opt, "x2"));
    TrainConfig tc = parse_train(opt, x1.bands, parse_ablation(opt));
    fs::path out(opt.out_dir);
    fs::create_directories(out);

    ChangeScoreMap scores = predetect_scores(task, x1, x2);
    PseudoMask mask = build_pseudo_mask(scores, tc.mask_size);
    write_scores(scores, out, "predetect_scores");
    write_mask(pseudo_mask_to_labels(mask), (out / "mask.pgm").string());
    write_effective_config(out, "predetect",
                           json{{"task", task == Task::Hacd ? "hacd" : "hbcd"},
                                {"mask_size", tc.mask_size}});
    std::cout << "predetect: selected " << mask.selected_count << " pixels\n";
    return 0;
}

int cmd_train(Options& opt) {
    AblationMode ablation = parse_ablation(opt);
    HsiCube x1 = load_normalized(input_path(opt, "x1"));
    HsiCube x2 = load_normalized(input_path(opt, "x2"));
    PseudoMask mask = labels_to_pseudo_mask(read_mask(input_path(opt, "mask")));
    if (mask.selected_count == 0) throw CliError("pseudo mask selects no pixels");
    TrainConfig cfg = parse_train(opt, x1.bands, ablation);
    LossKind loss = ablation == AblationMode::Full ? LossKind::Focal : LossKind::PlainCosine;

    fs::path out(opt.out_dir);
    fs::create_directories(out);
    TrainResult result = train(x1, x2, mask, cfg, loss);
    result.params.save_checkpoint((out / "checkpoint.hcube").string());
    write_loss_csv(result.report, (out / "loss.csv").string());
    json eff{{"train", train_to_json(cfg)}, {"ablation", ablation_name(ablation)}};
    write_effective_config(out, "train", eff);
    std::cout << "train: final loss " << result.report.entries.back().loss << "\n";
    return 0;
}

int cmd_detect(Options& opt) {
    Task task = parse_task(opt);
    HsiCube x1 = load_normalized(input_path(opt, "x1"));
    HsiCube x2 = load_normalized(input_path(opt, "x2"));
    HyperNetParams params = HyperNetParams::load_checkpoint(input_path(opt, "checkpoint"));
    if (params.cfg.input_channels != x1.bands)
        throw CliError("checkpoint band count does not match inputs");
    params.set_mode(BnMode::Inference);

    Tensor f1 = encoder_forward(cube_to_tensor(x1), params);
    Tensor f2 = encoder_forward(cube_to_tensor(x2), params);
    HsiCube c1 = tensor_to_cube(f1), c2 = tensor_to_cube(f2);

    fs::path out(opt.out_dir);
    fs::create_directories(out);
    ChangeScoreMap scores = task == Task::Hacd ? diff_rx(c1, c2) : cosine_distance_map(c1, c2);
    write_scores(scores, out, "scores");
    if (task == Task::Hbcd) {
        BinaryChangeMap map = kmeans2_threshold(scores);
        LabelMap lm{map.height, map.width, {}};
        lm.labels.resize(map.changed.size());
        for (size_t i = 0; i < map.changed.size(); ++i)
            lm.labels[i] = map.changed[i] ? Label::Changed : Label::Unchanged;
        write_mask(lm, (out / "map.pgm").string());
    }
    write_effective_config(out, "detect", json{{"task", task == Task::Hacd ? "hacd" : "hbcd"}});
    std::cout << "detect: wrote scores for " << scores.height << "x" << scores.width << "\n";
    return 0;
}

void write_metrics_csv(const fs::path& path, const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream os(path);
    os << "metric,value\n";
    char buf[128];
    for (const auto& [k, v] : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g\n", k.c_str(), v);
        os << buf;
    }
}

int cmd_evaluate(Options& opt) {
    Task task = parse_task(opt);
    LabelMap truth = read_mask(input_path(opt, "truth"));
    fs::path out(opt.out_dir);
    fs::create_directories(out);
    std::vector<std::pair<std::string, double>> rows;
    if (task == Task::Hacd) {
        ChangeScoreMap scores = read_scores(input_path(opt, "scores"));
        RocCurve roc = roc_auc(scores, truth);
        SeparabilityStats sep = separability_stats(scores, truth);
        rows.emplace_back("auc", roc.auc);
        rows.emplace_back("separability.change.min", sep.change.min);
        rows.emplace_back("separability.change.q25", sep.change.q25);
        rows.emplace_back("separability.change.median", sep.change.median);
        rows.emplace_back("separability.change.q75", sep.change.q75);
        rows.emplace_back("separability.change.max", sep.change.max);
        rows.emplace_back("separability.background.min", sep.background.min);
        rows.emplace_back("separability.background.q25", sep.background.q25);
        rows.emplace_back("separability.background.median", sep.background.median);
        rows.emplace_back("separability.background.q75", sep.background.q75);
        rows.emplace_back("separability.background.max", sep.background.max);
        std::ofstream os(out / "roc.csv");
        char buf[128];
        os << "false_alarm_rate,detection_probability\n";
        for (const auto& [fpr, tpr] : roc.points) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", fpr, tpr);
            os << buf;
        }
    } else {
        LabelMap pred = read_mask(input_path(opt, "map"));
        BinaryChangeMap map{pred.height, pred.width, {}};
        map.changed.resize(pred.labels.size());
        for (size_t i = 0; i < pred.labels.size(); ++i)
            map.changed[i] = pred.labels[i] == Label::Changed ? 1 : 0;
        ClassificationMetrics m = confusion_metrics(map, truth);
        rows = {{"oa", m.oa}, {"kappa", m.kappa}, {"f1", m.f1},
                {"precision", m.precision}, {"recall", m.recall}};
    }
    write_metrics_csv(out / "metrics.csv", rows);
    write_effective_config(out, "evaluate", json{{"task", task == Task::Hacd ? "hacd" : "hbcd"}});
    for (const auto& [k, v] : rows) std::cout << k << " = " << v << "\n";
    return 0;
}

// Vertical band [y0, y1) of a cube/label map, used by --tile.
HsiCube cube_rows(const HsiCube& cube, int y0, int y1) {
    HsiCube out;
    out.height = y1 - y0;
    out.width = cube.width;
    out.bands = cube.bands;
    out.values.assign(cube.values.begin() + static_cast<long>(y0) * cube.width * cube.bands,
                      cube.values.begin() + static_cast<long>(y1) * cube.width * cube.bands);
    return out;
}

int cmd_pipeline(Options& opt) {
    Task task = parse_task(opt);
    AblationMode ablation = parse_ablation(opt);
    fs::path out(opt.out_dir);
    fs::create_directories(out);

    // inputs: either given x1/x2(+truth) paths or a generated scene
    std::string x1_path, x2_path, truth_path;
    if (opt.config.contains("x1")) {
        x1_path = input_path(opt, "x1");
        x2_path = input_path(opt, "x2");
        truth_path = input_path(opt, "truth");
    } else {
        Options synth_opt = opt;
        synth_opt.out_dir = (out / "data").string();
        cmd_synth(synth_opt);
        x1_path = (out / "data" / "x1.hcube").string();
        x2_path = (out / "data" / "x2.hcube").string();
        truth_path = (out / "data" / "truth.pgm").string();
    }

    HsiCube x1 = load_normalized(x1_path);
    HsiCube x2 = load_normalized(x2_path);
    TrainConfig cfg = parse_train(opt, x1.bands, ablation);
    LossKind loss = ablation == AblationMode::Full ? LossKind::Focal : LossKind::PlainCosine;

    int tile = opt.tile > 0 ? opt.tile : x1.height;
    ChangeScoreMap stitched{x1.height, x1.width,
                            std::vector<double>(static_cast<size_t>(x1.height) * x1.width, 0.0)};
    int tile_index = 0;
    for (int y0 = 0; y0 < x1.height; y0 += tile, ++tile_index) {
        int y1 = std::min(x1.height, y0 + tile);
        HsiCube t1 = cube_rows(x1, y0, y1);
        HsiCube t2 = cube_rows(x2, y0, y1);
        int npix = t1.height * t1.width;
        ChangeScoreMap pre = predetect_scores(task, t1, t2);
        PseudoMask mask = build_pseudo_mask(pre, std::min(cfg.mask_size, npix));
        TrainConfig tile_cfg = cfg;
        TrainResult result = train(t1, t2, mask, tile_cfg, loss);

        fs::path tdir = opt.tile > 0 ? out / ("tile" + std::to_string(tile_index)) : out;
        fs::create_directories(tdir);
        result.params.save_checkpoint((tdir / "checkpoint.hcube").string());
        write_loss_csv(result.report, (tdir / "loss.csv").string());

        result.params.set_mode(BnMode::Inference);
        Tensor f1 = encoder_forward(cube_to_tensor(t1), result.params);
        Tensor f2 = encoder_forward(cube_to_tensor(t2), result.params);
        HsiCube c1 = tensor_to_cube(f1), c2 = tensor_to_cube(f2);
        ChangeScoreMap scores = task == Task::Hacd ? diff_rx(c1, c2) : cosine_distance_map(c1, c2);
        std::copy(scores.scores.begin(), scores.scores.end(),
                  stitched.scores.begin() + static_cast<long>(y0) * x1.width);
    }

    write_scores(stitched, out, "scores");
    LabelMap truth = read_mask(truth_path);
    std::vector<std::pair<std::string, double>> rows;
    if (task == Task::Hacd) {
        rows.emplace_back("auc", roc_auc(stitched, truth).auc);
    } else {
        BinaryChangeMap map = kmeans2_threshold(stitched);
        LabelMap lm{map.height, map.width, {}};
        lm.labels.resize(map.changed.size());
        for (size_t i = 0; i < map.changed.size(); ++i)
            lm.labels[i] = map.changed[i] ? Label::Changed : Label::Unchanged;
        write_mask(lm, (out / "map.pgm").string());
        ClassificationMetrics m = confusion_metrics(map, truth);
        rows = {{"oa", m.oa}, {"kappa", m.kappa}, {"f1", m.f1},
                {"precision", m.precision}, {"recall", m.recall}};
    }
    write_metrics_csv(out / "metrics.csv", rows);
    json eff{{"task", task == Task::Hacd ? "hacd" : "hbcd"},
             {"ablation", ablation_name(ablation)},
             {"tile", opt.tile},
             {"train", train_to_json(cfg)}};
    write_effective_config(out, "pipeline", eff);
    for (const auto& [k, v] : rows) std::cout << k << " = " << v << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised hyperspectral change detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("--config", opt.config_path, "JSON configuration document");
    app.add_option("--out", opt.out_dir, "output directory");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override RNG seed");
    std::string ablation_val, task_val;
    auto* abl_opt = app.add_option("--ablation", ablation_val, "base|base_ssa|full");
    auto* task_opt = app.add_option("--task", task_val, "hacd|hbcd");
    app.add_option("--tile", opt.tile, "process in horizontal tiles of this many rows");

    auto* c_synth = app.add_subcommand("synth", "generate a synthetic bi-temporal scene");
    auto* c_pre = app.add_subcommand("predetect", "classical pre-detection and pseudo mask");
    auto* c_train = app.add_subcommand("train", "self-supervised training");
    auto* c_detect = app.add_subcommand("detect", "feature-space change detection");
    auto* c_eval = app.add_subcommand("evaluate", "score/map evaluation against ground truth");
    auto* c_pipe = app.add_subcommand("pipeline", "synth -> predetect -> train -> detect -> evaluate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*seed_opt) opt.seed = seed_val;
    if (*abl_opt) opt.ablation = ablation_val;
    if (*task_opt) opt.task = task_val;

    try {
        opt.load();
        if (c_synth->parsed()) return cmd_synth(opt);
        if (c_pre->parsed()) return cmd_predetect(opt);
        if (c_train->parsed()) return cmd_train(opt);
        if (c_detect->parsed()) return cmd_detect(opt);
        if (c_eval->parsed()) return cmd_evaluate(opt);
        if (c_pipe->parsed()) return cmd_pipeline(opt);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
