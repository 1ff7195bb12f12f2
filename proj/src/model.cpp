#include "hyperchange/model.hpp"

#include <algorithm>
#include <fstream>

namespace hyperchange {

namespace {

ConvParams init_conv(std::mt19937_64& rng, int kh, int kw, int cin, int cout) {
    ConvParams p;
    p.kernel = he_normal_init(rng, {kh, kw, cin, cout}, kh * kw * cin);
    p.bias = Tensor::zeros({1, 1, 1, cout}, true);
    return p;
}

ConvBn init_conv_bn(std::mt19937_64& rng, int kh, int kw, int cin, int cout) {
    return ConvBn{init_conv(rng, kh, kw, cin, cout), BnParams::create(cout)};
}

ChannelAttentionParams init_ca(std::mt19937_64& rng, int k, int reduction) {
    int mid = std::max(1, k / reduction);
    return ChannelAttentionParams{init_conv(rng, 1, 1, k, mid), init_conv(rng, 1, 1, mid, k)};
}

}  // namespace

HyperNetParams HyperNetParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
    if (cfg.feature_width < 2) throw ContractViolation("ModelConfig: feature_width must be >= 2");
    if (cfg.input_channels < 1) throw ContractViolation("ModelConfig: input_channels must be >= 1");
    HyperNetParams p;
    p.cfg = cfg;
    int n = cfg.feature_width;
    int c = cfg.input_channels;
    for (int i = 0; i < 3; ++i) {
        int cin = i == 0 ? c : n;
        p.rsab[static_cast<size_t>(i)].main = init_conv_bn(rng, 3, 3, cin, n);
        if (i == 0) p.rsab[0].shortcut = init_conv_bn(rng, 1, 1, c, n);
        if (cfg.attention) {
            p.rsab[static_cast<size_t>(i)].ca = init_ca(rng, n, cfg.ca_reduction);
            p.rsab[static_cast<size_t>(i)].sa = init_conv(rng, 7, 7, 2, 1);
        }
    }
    for (int i = 0; i < 3; ++i) {
        int cin = i == 0 ? c : n;
        p.rcab[static_cast<size_t>(i)].main = init_conv_bn(rng, 1, 1, cin, n);
        if (cfg.attention)
            p.rcab[static_cast<size_t>(i)].ca = init_ca(rng, n, cfg.ca_reduction);
    }
    p.fuse_spatial = init_conv_bn(rng, 1, 1, n, n);
    p.fuse_spectral = init_conv_bn(rng, 3, 3, n, n);
    for (int i = 0; i < 3; ++i)
        p.projector[static_cast<size_t>(i)] = init_conv_bn(rng, 1, 1, 2 * n, 2 * n);
    p.pred_squeeze = init_conv_bn(rng, 1, 1, 2 * n, n);
    p.pred_expand = init_conv(rng, 1, 1, n, 2 * n);
    return p;
}

namespace {

void add_conv(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
              const ConvParams& c) {
    out.emplace_back(prefix + ".kernel", c.kernel);
    out.emplace_back(prefix + ".bias", c.bias);
}

void add_conv_bn(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                 const ConvBn& cb) {
    add_conv(out, prefix + ".conv", cb.conv);
    out.emplace_back(prefix + ".bn.gamma", cb.bn.gamma);
    out.emplace_back(prefix + ".bn.beta", cb.bn.beta);
}

void add_ca(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
            const ChannelAttentionParams& ca) {
    add_conv(out, prefix + ".fc1", ca.fc1);
    add_conv(out, prefix + ".fc2", ca.fc2);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> HyperNetParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (int i = 0; i < 3; ++i) {
        std::string prefix = "rsab" + std::to_string(i + 1);
        const RsabParams& b = rsab[static_cast<size_t>(i)];
        add_conv_bn(out, prefix + ".main", b.main);
        if (b.shortcut) add_conv_bn(out, prefix + ".shortcut", *b.shortcut);
        if (b.ca) add_ca(out, prefix + ".ca", *b.ca);
        if (b.sa) add_conv(out, prefix + ".sa", *b.sa);
    }
    for (int i = 0; i < 3; ++i) {
        std::string prefix = "rcab" + std::to_string(i + 1);
        const RcabParams& b = rcab[static_cast<size_t>(i)];
        add_conv_bn(out, prefix + ".main", b.main);
        if (b.ca) add_ca(out, prefix + ".ca", *b.ca);
    }
    add_conv_bn(out, "fuse.spatial", fuse_spatial);
    add_conv_bn(out, "fuse.spectral", fuse_spectral);
    for (int i = 0; i < 3; ++i)
        add_conv_bn(out, "proj" + std::to_string(i + 1), projector[static_cast<size_t>(i)]);
    add_conv_bn(out, "pred.squeeze", pred_squeeze);
    add_conv(out, "pred.expand", pred_expand);
    return out;
}

std::vector<Tensor> HyperNetParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

namespace {

template <typename F>
void for_each_bn(HyperNetParams& p, F&& f) {
    for (auto& b : p.rsab) {
        f(b.main.bn);
        if (b.shortcut) f(b.shortcut->bn);
    }
    for (auto& b : p.rcab) f(b.main.bn);
    f(p.fuse_spatial.bn);
    f(p.fuse_spectral.bn);
    for (auto& pr : p.projector) f(pr.bn);
    f(p.pred_squeeze.bn);
}

std::vector<std::pair<std::string, BnParams*>> named_bn(HyperNetParams& p) {
    std::vector<std::pair<std::string, BnParams*>> out;
    for (int i = 0; i < 3; ++i) {
        std::string prefix = "rsab" + std::to_string(i + 1);
        out.emplace_back(prefix + ".main.bn", &p.rsab[static_cast<size_t>(i)].main.bn);
        if (p.rsab[static_cast<size_t>(i)].shortcut)
            out.emplace_back(prefix + ".shortcut.bn", &p.rsab[static_cast<size_t>(i)].shortcut->bn);
    }
    for (int i = 0; i < 3; ++i)
        out.emplace_back("rcab" + std::to_string(i + 1) + ".main.bn",
                         &p.rcab[static_cast<size_t>(i)].main.bn);
    out.emplace_back("fuse.spatial.bn", &p.fuse_spatial.bn);
    out.emplace_back("fuse.spectral.bn", &p.fuse_spectral.bn);
    for (int i = 0; i < 3; ++i)
        out.emplace_back("proj" + std::to_string(i + 1) + ".bn",
                         &p.projector[static_cast<size_t>(i)].bn);
    out.emplace_back("pred.squeeze.bn", &p.pred_squeeze.bn);
    return out;
}

}  // namespace

void HyperNetParams::set_mode(BnMode mode) {
    for_each_bn(*this, [mode](BnParams& bn) { bn.mode = mode; });
}

void HyperNetParams::zero_grad() {
    for (auto& t : parameters()) {
        Tensor tt = t;
        tt.zero_grad();
    }
}

void HyperNetParams::save_checkpoint(const std::string& path) const {
    std::vector<HcubeRecord> recs;
    recs.push_back(HcubeRecord{"meta", 1, 1, 4,
                               {static_cast<double>(cfg.input_channels),
                                static_cast<double>(cfg.feature_width),
                                static_cast<double>(cfg.ca_reduction),
                                cfg.attention ? 1.0 : 0.0}});
    for (const auto& [name, t] : named_parameters()) {
        const Shape& s = t.shape();
        recs.push_back(HcubeRecord{name, s[0] * s[1], s[2], s[3], t.values()});
    }
    auto& self = const_cast<HyperNetParams&>(*this);
    for (const auto& [name, bn] : named_bn(self)) {
        int c = bn->channels();
        recs.push_back(HcubeRecord{name + ".running_mean", 1, 1, c, bn->running_mean});
        recs.push_back(HcubeRecord{name + ".running_var", 1, 1, c, bn->running_var});
    }
    write_all_records(path, recs);
}

HyperNetParams HyperNetParams::load_checkpoint(const std::string& path) {
    auto recs = read_all_records(path);
    auto find = [&](const std::string& name) -> const HcubeRecord& {
        for (const auto& r : recs)
            if (r.name == name) return r;
        throw ParseError("checkpoint: missing record " + name);
    };
    const HcubeRecord& meta = find("meta");
    if (meta.values.size() != 4) throw ParseError("checkpoint: malformed meta record");
    ModelConfig cfg;
    cfg.input_channels = static_cast<int>(meta.values[0]);
    cfg.feature_width = static_cast<int>(meta.values[1]);
    cfg.ca_reduction = static_cast<int>(meta.values[2]);
    cfg.attention = meta.values[3] != 0.0;
    std::mt19937_64 rng(0);
    HyperNetParams p = init(cfg, rng);
    for (auto& [name, t] : p.named_parameters()) {
        const HcubeRecord& r = find(name);
        Tensor tt = t;
        if (r.values.size() != tt.values().size())
            throw ParseError("checkpoint: shape mismatch in record " + name);
        tt.values() = r.values;
    }
    for (auto& [name, bn] : named_bn(p)) {
        const HcubeRecord& rm = find(name + ".running_mean");
        const HcubeRecord& rv = find(name + ".running_var");
        if (static_cast<int>(rm.values.size()) != bn->channels() ||
            static_cast<int>(rv.values.size()) != bn->channels())
            throw ParseError("checkpoint: shape mismatch in record " + name);
        bn->running_mean = rm.values;
        bn->running_var = rv.values;
    }
    return p;
}

Tensor channel_attention(const Tensor& input, const ChannelAttentionParams& params) {
    auto mlp = [&](const Tensor& t) {
        return conv2d(relu(conv2d(t, params.fc1)), params.fc2);
    };
    Tensor avg = reduce_pool(input, PoolAxis::Spatial, PoolKind::Avg);
    Tensor mx = reduce_pool(input, PoolAxis::Spatial, PoolKind::Max);
    return sigmoid(add(mlp(avg), mlp(mx)));
}

Tensor spatial_attention(const Tensor& input, const ConvParams& sa_conv) {
    Tensor avg = reduce_pool(input, PoolAxis::Channel, PoolKind::Avg);
    Tensor mx = reduce_pool(input, PoolAxis::Channel, PoolKind::Max);
    return sigmoid(conv2d(concat_channels(avg, mx), sa_conv));
}

Tensor rsab_forward(const Tensor& input, int block_index, HyperNetParams& params) {
    if (block_index < 1 || block_index > 3)
        throw ContractViolation("rsab_forward: block_index must be 1..3");
    RsabParams& b = params.rsab[static_cast<size_t>(block_index - 1)];
    if (input.shape()[3] != b.main.conv.c_in())
        throw ContractViolation("rsab_forward: input width does not match block");
    Tensor x1 = batch_norm2d(conv2d(input, b.main.conv), b.main.bn);
    Tensor features = x1;
    if (params.cfg.attention) {
        Tensor fca = mul(x1, channel_attention(x1, *b.ca));
        features = mul(fca, spatial_attention(fca, *b.sa));
    }
    Tensor shortcut = block_index == 1
                          ? batch_norm2d(conv2d(input, b.shortcut->conv), b.shortcut->bn)
                          : input;
    return relu(add(shortcut, features));
}

Tensor rcab_forward(const Tensor& input, int block_index, HyperNetParams& params) {
    if (block_index < 1 || block_index > 3)
        throw ContractViolation("rcab_forward: block_index must be 1..3");
    RcabParams& b = params.rcab[static_cast<size_t>(block_index - 1)];
    if (input.shape()[3] != b.main.conv.c_in())
        throw ContractViolation("rcab_forward: input width does not match block");
    Tensor x2 = batch_norm2d(conv2d(input, b.main.conv), b.main.bn);
    Tensor weighted = params.cfg.attention ? mul(x2, channel_attention(x2, *b.ca)) : x2;
    // shortcut only once input and output widths agree; no trailing ReLU
    return block_index == 1 ? weighted : add(input, weighted);
}

Tensor fusion_forward(const Tensor& spatial, const Tensor& spectral, HyperNetParams& params) {
    if (spatial.shape() != spectral.shape())
        throw ContractViolation("fusion_forward: branch widths differ");
    Tensor a = batch_norm2d(conv2d(spatial, params.fuse_spatial.conv), params.fuse_spatial.bn);
    Tensor b = batch_norm2d(conv2d(spectral, params.fuse_spectral.conv), params.fuse_spectral.bn);
    return concat_channels(a, b);
}

Tensor projector_forward(const Tensor& fused, HyperNetParams& params) {
    Tensor t = fused;
    for (int i = 0; i < 3; ++i) {
        ConvBn& layer = params.projector[static_cast<size_t>(i)];
        t = batch_norm2d(conv2d(t, layer.conv), layer.bn);
        if (i < 2) t = relu(t);  // the terminal layer stays linear
    }
    return t;
}

Tensor predictor_forward(const Tensor& z, HyperNetParams& params) {
    Tensor t = relu(batch_norm2d(conv2d(z, params.pred_squeeze.conv), params.pred_squeeze.bn));
    return conv2d(t, params.pred_expand);
}

Tensor encoder_forward(const Tensor& input, HyperNetParams& params) {
    Tensor spatial = input;
    Tensor spectral = input;
    for (int i = 1; i <= 3; ++i) spatial = rsab_forward(spatial, i, params);
    for (int i = 1; i <= 3; ++i) spectral = rcab_forward(spectral, i, params);
    return fusion_forward(spatial, spectral, params);
}

SiameseOutputs hypernet_forward(const Tensor& x1, const Tensor& x2, HyperNetParams& params) {
    if (x1.shape() != x2.shape())
        throw ContractViolation("hypernet_forward: input shapes differ");
    SiameseOutputs out;
    out.f1 = encoder_forward(x1, params);
    out.z1 = projector_forward(out.f1, params);
    out.p1 = predictor_forward(out.z1, params);
    out.f2 = encoder_forward(x2, params);
    out.z2 = projector_forward(out.f2, params);
    out.p2 = predictor_forward(out.z2, params);
    return out;
}

Tensor cube_to_tensor(const HsiCube& cube) {
    return Tensor::from_values({1, cube.height, cube.width, cube.bands}, cube.values);
}

HsiCube tensor_to_cube(const Tensor& t) {
    const Shape& s = t.shape();
    HsiCube cube;
    cube.height = s[1];
    cube.width = s[2];
    cube.bands = s[3];
    cube.values = t.values();
    return cube;
}

}  // namespace hyperchange
