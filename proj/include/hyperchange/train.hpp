#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hyperchange/detectors.hpp"
#include "hyperchange/model.hpp"

namespace hyperchange {

// Pixels presumed unchanged, over which the similarity loss is computed.
struct PseudoMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> selected;  // H*W, 0/1
    int selected_count = 0;
};

// Selects the N lowest-scoring pixels (most likely unchanged); ties broken
// by row-major scan order.
PseudoMask build_pseudo_mask(const ChangeScoreMap& score_map, int n);

// Per pixel: -(2 - c) * c with c the channelwise cosine.
Tensor focal_cosine(const Tensor& z, const Tensor& p);

// Per pixel: -c (the ablation baseline loss).
Tensor plain_cosine_loss(const Tensor& z, const Tensor& p);

enum class LossKind { Focal, PlainCosine };

// 0.5 * masked_mean(L(stopgrad(Z1), P2) + L(stopgrad(Z2), P1), g).
// Gradients reach the encoder only through the predictor paths.
Tensor total_loss(const SiameseOutputs& out, const PseudoMask& g,
                  LossKind kind = LossKind::Focal);

enum class Predetector { DiffRx, Cva };

struct TrainConfig {
    double base_lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs = 200;
    int mask_size = 8192;
    ModelConfig model;
    Predetector predetector = Predetector::DiffRx;
    std::uint64_t seed = 0;
};

struct LossReport {
    struct Entry {
        int epoch = 0;       // 1-based
        double lr = 0.0;
        double loss = 0.0;
        double seconds = 0.0;
    };
    std::vector<Entry> entries;
};

void write_loss_csv(const LossReport& report, const std::string& path);

// Whole-image training loop: one step per epoch, cosine-decayed SGD with
// momentum, abort on non-finite loss. Deterministic per cfg.seed.
struct TrainResult {
    HyperNetParams params;
    LossReport report;
};

TrainResult train(const HsiCube& x1, const HsiCube& x2, const PseudoMask& g,
                  const TrainConfig& cfg, LossKind loss_kind = LossKind::Focal);

}  // namespace hyperchange
