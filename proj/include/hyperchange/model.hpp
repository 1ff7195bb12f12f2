#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hyperchange/io.hpp"
#include "hyperchange/nn.hpp"

namespace hyperchange {

struct ModelConfig {
    int input_channels = 0;
    int feature_width = 64;   // n: channels per branch block; heads use 2n
    int ca_reduction = 4;     // channel-attention bottleneck ratio
    bool attention = true;    // false = plain conv blocks (ablation "base")
};

// Shared two-layer 1x1-conv bottleneck applied to pooled statistics.
struct ChannelAttentionParams {
    ConvParams fc1;  // K -> max(1, K/reduction)
    ConvParams fc2;  // -> K
};

struct ConvBn {
    ConvParams conv;
    BnParams bn;
};

struct RsabParams {
    ConvBn main;                               // 3x3
    std::optional<ConvBn> shortcut;            // 1x1 downsample, block 1 only
    std::optional<ChannelAttentionParams> ca;
    std::optional<ConvParams> sa;              // 7x7 over [avg;max] maps
};

struct RcabParams {
    ConvBn main;                               // 1x1
    std::optional<ChannelAttentionParams> ca;
};

// Both siamese branches evaluate this single parameter set.
struct HyperNetParams {
    ModelConfig cfg;
    std::array<RsabParams, 3> rsab;
    std::array<RcabParams, 3> rcab;
    ConvBn fuse_spatial;               // 1x1 on the spatial path
    ConvBn fuse_spectral;              // 3x3 on the spectral path
    std::array<ConvBn, 3> projector;   // 1x1, width 2n throughout
    ConvBn pred_squeeze;               // 1x1, 2n -> n
    ConvParams pred_expand;            // 1x1, n -> 2n, no BN/ReLU

    static HyperNetParams init(const ModelConfig& cfg, std::mt19937_64& rng);

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    void set_mode(BnMode mode);
    void zero_grad();

    void save_checkpoint(const std::string& path) const;
    static HyperNetParams load_checkpoint(const std::string& path);
};

// sigma(mlp(avgpool(x)) + mlp(maxpool(x))), [1,H,W,K] -> [1,1,1,K]
Tensor channel_attention(const Tensor& input, const ChannelAttentionParams& params);

// sigma(conv7x7([channel-avg; channel-max])), [1,H,W,K] -> [1,H,W,1]
Tensor spatial_attention(const Tensor& input, const ConvParams& sa_conv);

// block_index is 1-based; block 1 carries the downsampling shortcut.
Tensor rsab_forward(const Tensor& input, int block_index, HyperNetParams& params);
Tensor rcab_forward(const Tensor& input, int block_index, HyperNetParams& params);

Tensor fusion_forward(const Tensor& spatial, const Tensor& spectral, HyperNetParams& params);
Tensor projector_forward(const Tensor& fused, HyperNetParams& params);
Tensor predictor_forward(const Tensor& z, HyperNetParams& params);

// Spatial branch, spectral branch, fusion: [1,H,W,C] -> [1,H,W,2n]
Tensor encoder_forward(const Tensor& input, HyperNetParams& params);

struct SiameseOutputs {
    Tensor f1, f2;  // fused features
    Tensor z1, z2;  // projector outputs
    Tensor p1, p2;  // predictor outputs
};

SiameseOutputs hypernet_forward(const Tensor& x1, const Tensor& x2, HyperNetParams& params);

Tensor cube_to_tensor(const HsiCube& cube);
HsiCube tensor_to_cube(const Tensor& t);

}  // namespace hyperchange
