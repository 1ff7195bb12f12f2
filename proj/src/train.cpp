#include "hyperchange/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace hyperchange {

PseudoMask build_pseudo_mask(const ChangeScoreMap& score_map, int n) {
    int total = score_map.height * score_map.width;
    if (n < 1 || n > total)
        throw ContractViolation("build_pseudo_mask: N out of range");
    std::vector<int> idx(static_cast<size_t>(total));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return score_map.scores[static_cast<size_t>(a)] < score_map.scores[static_cast<size_t>(b)];
    });
    PseudoMask mask;
    mask.height = score_map.height;
    mask.width = score_map.width;
    mask.selected.assign(static_cast<size_t>(total), 0);
    for (int i = 0; i < n; ++i) mask.selected[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
    mask.selected_count = n;
    return mask;
}

Tensor focal_cosine(const Tensor& z, const Tensor& p) {
    if (z.shape() != p.shape())
        throw ContractViolation("focal_cosine: shapes differ");
    Tensor c = cosine_channelwise(z, p);
    // -(2 - c) * c = c^2 - 2c
    return add(mul(c, c), scale(c, -2.0));
}

Tensor plain_cosine_loss(const Tensor& z, const Tensor& p) {
    if (z.shape() != p.shape())
        throw ContractViolation("plain_cosine_loss: shapes differ");
    return scale(cosine_channelwise(z, p), -1.0);
}

Tensor total_loss(const SiameseOutputs& out, const PseudoMask& g, LossKind kind) {
    auto per_pixel = [&](const Tensor& z, const Tensor& p) {
        return kind == LossKind::Focal ? focal_cosine(stop_gradient(z), p)
                                       : plain_cosine_loss(stop_gradient(z), p);
    };
    Tensor combined = add(per_pixel(out.z1, out.p2), per_pixel(out.z2, out.p1));
    return scale(masked_mean(combined, g.selected), 0.5);
}

void write_loss_csv(const LossReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ParseError("loss csv: cannot write " + path);
    os << "epoch,lr,loss\n";
    char buf[128];
    for (const auto& e : report.entries) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.lr, e.loss);
        os << buf;
    }
}

TrainResult train(const HsiCube& x1, const HsiCube& x2, const PseudoMask& g,
                  const TrainConfig& cfg, LossKind loss_kind) {
    if (cfg.epochs < 1) throw ContractViolation("train: epochs must be >= 1");
    if (x1.height != x2.height || x1.width != x2.width || x1.bands != x2.bands)
        throw ContractViolation("train: image shapes differ");
    if (g.height != x1.height || g.width != x1.width)
        throw ContractViolation("train: mask shape differs from images");
    if (g.selected_count < 1) throw ContractViolation("train: empty pseudo mask");
    if (cfg.model.input_channels != x1.bands)
        throw ContractViolation("train: model input_channels does not match images");

    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.params = HyperNetParams::init(cfg.model, rng);
    HyperNetParams& params = result.params;

    Tensor t1 = cube_to_tensor(x1);
    Tensor t2 = cube_to_tensor(x2);
    std::vector<Tensor> trainable = params.parameters();
    SgdMomentum opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;

    params.set_mode(BnMode::Training);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        double lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr);

        SiameseOutputs out = hypernet_forward(t1, t2, params);
        Tensor loss = total_loss(out, g, loss_kind);
        double value = loss.item();
        if (!std::isfinite(value))
            throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1));

        params.zero_grad();
        backward(loss);
        opt.step(trainable, lr);

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.report.entries.push_back({epoch + 1, lr, value, secs});
    }
    return result;
}

}  // namespace hyperchange
