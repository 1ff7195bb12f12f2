#pragma once

#include <random>
#include <vector>

#include "hyperchange/tensor.hpp"

namespace hyperchange {

// Weights of one "same"-padded stride-1 convolution. kernel is
// [kh, kw, c_in, c_out] with odd spatial extent; bias is [1,1,1,c_out].
struct ConvParams {
    Tensor kernel;
    Tensor bias;

    int kh() const { return kernel.shape()[0]; }
    int kw() const { return kernel.shape()[1]; }
    int c_in() const { return kernel.shape()[2]; }
    int c_out() const { return kernel.shape()[3]; }
};

Tensor conv2d(const Tensor& input, const ConvParams& params);

enum class BnMode { Training, Inference };

struct BnParams {
    Tensor gamma;                      // [1,1,1,C]
    Tensor beta;                       // [1,1,1,C]
    std::vector<double> running_mean;  // length C
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;
    BnMode mode = BnMode::Training;

    int channels() const { return gamma.shape()[3]; }
    static BnParams create(int c);
};

// Training mode normalizes each channel over the H*W plane with batch
// statistics (differentiable through them) and updates the running
// statistics; inference mode uses the running statistics.
Tensor batch_norm2d(const Tensor& input, BnParams& params);

enum class PoolAxis { Spatial, Channel };
enum class PoolKind { Avg, Max };

// Spatial pooling collapses H,W -> [1,1,1,C]; channel pooling collapses the
// channel axis -> [1,H,W,1]. Max routes the gradient to the first argmax.
Tensor reduce_pool(const Tensor& input, PoolAxis axis, PoolKind kind);

// Classical momentum with L2 folded into the gradient:
//   v <- mu*v + (g + lambda*w);  w <- w - eta*v
struct SgdMomentum {
    double momentum = 0.9;
    double weight_decay = 1e-4;

    void step(std::vector<Tensor>& params, double lr);

private:
    std::vector<std::vector<double>> velocity_;
};

// Zero-mean normal with std sqrt(2/fan_in).
Tensor he_normal_init(std::mt19937_64& rng, const Shape& shape, int fan_in);

// eta_t = 0.5 * base_lr * (1 + cos(pi * t / T))
double cosine_lr(int epoch, int total_epochs, double base_lr);

}  // namespace hyperchange
