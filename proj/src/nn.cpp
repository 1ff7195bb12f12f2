#include "hyperchange/nn.hpp"

#include <algorithm>
#include <cmath>

namespace hyperchange {

Tensor conv2d(const Tensor& input, const ConvParams& params) {
    const Shape& si = input.shape();
    const Shape& sk = params.kernel.shape();
    int kh = sk[0], kw = sk[1], ci = sk[2], co = sk[3];
    if (si[3] != ci)
        throw ContractViolation("conv2d: input channels do not match kernel c_in");
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ContractViolation("conv2d: kernel spatial extent must be odd");
    int h = si[1], w = si[2];
    int rh = kh / 2, rw = kw / 2;
    auto in = input.node();
    auto kn = params.kernel.node();
    auto bn = params.bias.node();
    Shape so{1, h, w, co};
    std::vector<double> out(static_cast<size_t>(shape_numel(so)));

    parallel_for(0, h, [&](int y0, int y1) {
        std::vector<double> acc(static_cast<size_t>(co));
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < co; ++c) acc[c] = bn->values[static_cast<size_t>(c)];
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = y + ky - rh;
                    if (iy < 0 || iy >= h) continue;  // zero padding
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = x + kx - rw;
                        if (ix < 0 || ix >= w) continue;
                        const double* pin = in->values.data() + (static_cast<size_t>(iy) * w + ix) * ci;
                        const double* pk = kn->values.data() + (static_cast<size_t>(ky) * kw + kx) * ci * co;
                        for (int c = 0; c < ci; ++c) {
                            double v = pin[c];
                            if (v == 0.0) continue;
                            const double* pkc = pk + static_cast<size_t>(c) * co;
                            for (int o = 0; o < co; ++o) acc[o] += v * pkc[o];
                        }
                    }
                }
                double* pout = out.data() + (static_cast<size_t>(y) * w + x) * co;
                for (int c = 0; c < co; ++c) pout[c] = acc[c];
            }
    });

    return detail::make_op(so, std::move(out), {in, kn, bn},
                           [in, kn, bn, h, w, kh, kw, ci, co, rh, rw](TensorData& self) {
        const double* g = self.grad.data();
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double* pg = g + (static_cast<size_t>(y) * w + x) * co;
                    for (int c = 0; c < co; ++c) bn->grad[static_cast<size_t>(c)] += pg[c];
                }
        }
        bool need_in = in->requires_grad;
        bool need_k = kn->requires_grad;
        if (need_in) in->ensure_grad();
        if (need_k) kn->ensure_grad();
        if (!need_in && !need_k) return;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double* pg = g + (static_cast<size_t>(y) * w + x) * co;
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = y + ky - rh;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = x + kx - rw;
                        if (ix < 0 || ix >= w) continue;
                        size_t in_off = (static_cast<size_t>(iy) * w + ix) * ci;
                        size_t k_off = (static_cast<size_t>(ky) * kw + kx) * ci * co;
                        for (int c = 0; c < ci; ++c) {
                            const double* pk = kn->values.data() + k_off + static_cast<size_t>(c) * co;
                            double vin = in->values[in_off + static_cast<size_t>(c)];
                            double acc_in = 0.0;
                            for (int o = 0; o < co; ++o) {
                                double go = pg[o];
                                acc_in += go * pk[o];
                                if (need_k)
                                    kn->grad[k_off + static_cast<size_t>(c) * co + o] += go * vin;
                            }
                            if (need_in) in->grad[in_off + static_cast<size_t>(c)] += acc_in;
                        }
                    }
                }
            }
    });
}

BnParams BnParams::create(int c) {
    BnParams p;
    p.gamma = Tensor::full({1, 1, 1, c}, 1.0, true);
    p.beta = Tensor::zeros({1, 1, 1, c}, true);
    p.running_mean.assign(static_cast<size_t>(c), 0.0);
    p.running_var.assign(static_cast<size_t>(c), 1.0);
    return p;
}

Tensor batch_norm2d(const Tensor& input, BnParams& params) {
    const Shape& s = input.shape();
    int c = s[3];
    if (c != params.channels())
        throw ContractViolation("batch_norm2d: channel count mismatch");
    int m = s[0] * s[1] * s[2];
    auto in = input.node();
    auto gn = params.gamma.node();
    auto be = params.beta.node();

    std::vector<double> mean(static_cast<size_t>(c), 0.0);
    std::vector<double> var(static_cast<size_t>(c), 0.0);
    std::vector<double> invstd(static_cast<size_t>(c));
    if (params.mode == BnMode::Training) {
        for (int p = 0; p < m; ++p) {
            const double* pv = in->values.data() + static_cast<size_t>(p) * c;
            for (int k = 0; k < c; ++k) mean[static_cast<size_t>(k)] += pv[k];
        }
        for (int k = 0; k < c; ++k) mean[static_cast<size_t>(k)] /= m;
        for (int p = 0; p < m; ++p) {
            const double* pv = in->values.data() + static_cast<size_t>(p) * c;
            for (int k = 0; k < c; ++k) {
                double d = pv[k] - mean[static_cast<size_t>(k)];
                var[static_cast<size_t>(k)] += d * d;
            }
        }
        for (int k = 0; k < c; ++k) var[static_cast<size_t>(k)] /= m;
        for (int k = 0; k < c; ++k) {
            params.running_mean[static_cast<size_t>(k)] =
                (1.0 - params.momentum) * params.running_mean[static_cast<size_t>(k)] +
                params.momentum * mean[static_cast<size_t>(k)];
            params.running_var[static_cast<size_t>(k)] =
                (1.0 - params.momentum) * params.running_var[static_cast<size_t>(k)] +
                params.momentum * var[static_cast<size_t>(k)];
        }
    } else {
        mean = params.running_mean;
        var = params.running_var;
    }
    for (int k = 0; k < c; ++k)
        invstd[static_cast<size_t>(k)] = 1.0 / std::sqrt(var[static_cast<size_t>(k)] + params.eps);

    std::vector<double> xhat(in->values.size());
    std::vector<double> out(in->values.size());
    for (int p = 0; p < m; ++p)
        for (int k = 0; k < c; ++k) {
            size_t i = static_cast<size_t>(p) * c + static_cast<size_t>(k);
            xhat[i] = (in->values[i] - mean[static_cast<size_t>(k)]) * invstd[static_cast<size_t>(k)];
            out[i] = gn->values[static_cast<size_t>(k)] * xhat[i] + be->values[static_cast<size_t>(k)];
        }

    bool training = params.mode == BnMode::Training;
    return detail::make_op(s, std::move(out), {in, gn, be},
                           [in, gn, be, m, c, training,
                            invstd = std::move(invstd),
                            xhat = std::move(xhat)](TensorData& self) {
        const double* g = self.grad.data();
        if (gn->requires_grad) gn->ensure_grad();
        if (be->requires_grad) be->ensure_grad();
        for (int k = 0; k < c; ++k) {
            double dg = 0.0, db = 0.0;
            for (int p = 0; p < m; ++p) {
                size_t i = static_cast<size_t>(p) * c + static_cast<size_t>(k);
                dg += g[i] * xhat[i];
                db += g[i];
            }
            if (gn->requires_grad) gn->grad[static_cast<size_t>(k)] += dg;
            if (be->requires_grad) be->grad[static_cast<size_t>(k)] += db;
            if (in->requires_grad) {
                in->ensure_grad();
                double gamma = gn->values[static_cast<size_t>(k)];
                if (training) {
                    double mg = db / m;
                    double mgx = dg / m;
                    for (int p = 0; p < m; ++p) {
                        size_t i = static_cast<size_t>(p) * c + static_cast<size_t>(k);
                        in->grad[i] += gamma * invstd[static_cast<size_t>(k)] *
                                       (g[i] - mg - xhat[i] * mgx);
                    }
                } else {
                    for (int p = 0; p < m; ++p) {
                        size_t i = static_cast<size_t>(p) * c + static_cast<size_t>(k);
                        in->grad[i] += gamma * invstd[static_cast<size_t>(k)] * g[i];
                    }
                }
            }
        }
    });
}

Tensor reduce_pool(const Tensor& input, PoolAxis axis, PoolKind kind) {
    const Shape& s = input.shape();
    int h = s[1], w = s[2], c = s[3];
    auto in = input.node();
    if (axis == PoolAxis::Spatial) {
        int m = s[0] * h * w;
        std::vector<double> out(static_cast<size_t>(c));
        std::vector<int> arg(static_cast<size_t>(c), 0);
        if (kind == PoolKind::Avg) {
            for (int p = 0; p < m; ++p)
                for (int k = 0; k < c; ++k)
                    out[static_cast<size_t>(k)] += in->values[static_cast<size_t>(p) * c + k];
            for (int k = 0; k < c; ++k) out[static_cast<size_t>(k)] /= m;
        } else {
            for (int k = 0; k < c; ++k) out[static_cast<size_t>(k)] = in->values[static_cast<size_t>(k)];
            for (int p = 1; p < m; ++p)
                for (int k = 0; k < c; ++k) {
                    double v = in->values[static_cast<size_t>(p) * c + k];
                    if (v > out[static_cast<size_t>(k)]) {
                        out[static_cast<size_t>(k)] = v;
                        arg[static_cast<size_t>(k)] = p;
                    }
                }
        }
        return detail::make_op({1, 1, 1, c}, std::move(out), {in},
                               [in, m, c, kind, arg = std::move(arg)](TensorData& self) {
            in->ensure_grad();
            if (kind == PoolKind::Avg) {
                for (int k = 0; k < c; ++k) {
                    double g = self.grad[static_cast<size_t>(k)] / m;
                    for (int p = 0; p < m; ++p) in->grad[static_cast<size_t>(p) * c + k] += g;
                }
            } else {
                for (int k = 0; k < c; ++k)
                    in->grad[static_cast<size_t>(arg[static_cast<size_t>(k)]) * c + k] +=
                        self.grad[static_cast<size_t>(k)];
            }
        });
    }
    // channel axis
    int npix = s[0] * h * w;
    std::vector<double> out(static_cast<size_t>(npix));
    std::vector<int> arg(static_cast<size_t>(npix), 0);
    for (int p = 0; p < npix; ++p) {
        const double* pv = in->values.data() + static_cast<size_t>(p) * c;
        if (kind == PoolKind::Avg) {
            double acc = 0.0;
            for (int k = 0; k < c; ++k) acc += pv[k];
            out[static_cast<size_t>(p)] = acc / c;
        } else {
            double best = pv[0];
            int bi = 0;
            for (int k = 1; k < c; ++k)
                if (pv[k] > best) { best = pv[k]; bi = k; }
            out[static_cast<size_t>(p)] = best;
            arg[static_cast<size_t>(p)] = bi;
        }
    }
    return detail::make_op({s[0], h, w, 1}, std::move(out), {in},
                           [in, npix, c, kind, arg = std::move(arg)](TensorData& self) {
        in->ensure_grad();
        for (int p = 0; p < npix; ++p) {
            double g = self.grad[static_cast<size_t>(p)];
            if (kind == PoolKind::Avg) {
                double gs = g / c;
                for (int k = 0; k < c; ++k) in->grad[static_cast<size_t>(p) * c + k] += gs;
            } else {
                in->grad[static_cast<size_t>(p) * c + arg[static_cast<size_t>(p)]] += g;
            }
        }
    });
}

void SgdMomentum::step(std::vector<Tensor>& params, double lr) {
    if (velocity_.size() < params.size()) velocity_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        auto& v = velocity_[i];
        if (v.size() != p.values().size()) v.assign(p.values().size(), 0.0);
        const std::vector<double>& g = p.grad();
        std::vector<double>& w = p.values();
        for (size_t j = 0; j < w.size(); ++j) {
            v[j] = momentum * v[j] + (g[j] + weight_decay * w[j]);
            w[j] -= lr * v[j];
        }
    }
}

Tensor he_normal_init(std::mt19937_64& rng, const Shape& shape, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (double& x : v) x = dist(rng);
    return Tensor::from_values(shape, std::move(v), true);
}

double cosine_lr(int epoch, int total_epochs, double base_lr) {
    if (epoch < 0 || epoch > total_epochs)
        throw ContractViolation("cosine_lr: epoch out of range");
    return 0.5 * base_lr * (1.0 + std::cos(M_PI * static_cast<double>(epoch) / total_epochs));
}

}  // namespace hyperchange
