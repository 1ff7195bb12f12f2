#include "hyperchange/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <unordered_set>

namespace hyperchange {

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    return full(s, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& s, double v, bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    d->shape = s;
    d->values.assign(static_cast<size_t>(shape_numel(s)), v);
    d->requires_grad = requires_grad;
    return Tensor(d);
}

Tensor Tensor::from_values(const Shape& s, std::vector<double> v, bool requires_grad) {
    if (static_cast<int>(v.size()) != shape_numel(s))
        throw ContractViolation("from_values: value count does not match shape");
    auto d = std::make_shared<TensorData>();
    d->shape = s;
    d->values = std::move(v);
    d->requires_grad = requires_grad;
    return Tensor(d);
}

Tensor Tensor::scalar(double v) {
    return from_values({1, 1, 1, 1}, {v});
}

double Tensor::item() const {
    if (d_->values.size() != 1)
        throw ContractViolation("item: tensor is not scalar");
    return d_->values[0];
}

namespace detail {

Tensor make_op(const Shape& shape, std::vector<double> values,
               std::vector<std::shared_ptr<TensorData>> parents,
               std::function<void(TensorData&)> backward_fn) {
    auto d = std::make_shared<TensorData>();
    d->shape = shape;
    d->values = std::move(values);
    d->requires_grad = false;
    for (const auto& p : parents)
        if (p->requires_grad) d->requires_grad = true;
    if (d->requires_grad) {
        d->parents = std::move(parents);
        d->backward_fn = std::move(backward_fn);
    }
    return Tensor(d);
}

}  // namespace detail

namespace {

using detail::make_op;

inline size_t flat_index(const Shape& s, int b, int h, int w, int c) {
    return static_cast<size_t>(((b * s[1] + h) * s[2] + w) * s[3] + c);
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    Shape so;
    for (int i = 0; i < 4; ++i) {
        if (sa[i] == sb[i]) so[i] = sa[i];
        else if (sa[i] == 1) so[i] = sb[i];
        else if (sb[i] == 1) so[i] = sa[i];
        else throw ContractViolation("elementwise: shapes are not broadcastable");
    }
    std::vector<double> out(static_cast<size_t>(shape_numel(so)));
    auto an = a.node();
    auto bn = b.node();
    for (int bi = 0; bi < so[0]; ++bi)
        for (int h = 0; h < so[1]; ++h)
            for (int w = 0; w < so[2]; ++w)
                for (int c = 0; c < so[3]; ++c) {
                    double va = an->values[flat_index(sa, bi % sa[0], h % sa[1], w % sa[2], c % sa[3])];
                    double vb = bn->values[flat_index(sb, bi % sb[0], h % sb[1], w % sb[2], c % sb[3])];
                    out[flat_index(so, bi, h, w, c)] = kind == EwKind::Add ? va + vb : va * vb;
                }
    return make_op(so, std::move(out), {an, bn}, [an, bn, sa, sb, so, kind](TensorData& self) {
        for (int bi = 0; bi < so[0]; ++bi)
            for (int h = 0; h < so[1]; ++h)
                for (int w = 0; w < so[2]; ++w)
                    for (int c = 0; c < so[3]; ++c) {
                        double g = self.grad[flat_index(so, bi, h, w, c)];
                        size_t ia = flat_index(sa, bi % sa[0], h % sa[1], w % sa[2], c % sa[3]);
                        size_t ib = flat_index(sb, bi % sb[0], h % sb[1], w % sb[2], c % sb[3]);
                        if (kind == EwKind::Add) {
                            if (an->requires_grad) { an->ensure_grad(); an->grad[ia] += g; }
                            if (bn->requires_grad) { bn->ensure_grad(); bn->grad[ib] += g; }
                        } else {
                            if (an->requires_grad) { an->ensure_grad(); an->grad[ia] += g * bn->values[ib]; }
                            if (bn->requires_grad) { bn->ensure_grad(); bn->grad[ib] += g * an->values[ia]; }
                        }
                    }
    });
}

Tensor scale(const Tensor& a, double s) {
    auto an = a.node();
    std::vector<double> out(an->values.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = an->values[i] * s;
    return make_op(a.shape(), std::move(out), {an}, [an, s](TensorData& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    auto an = a.node();
    std::vector<double> out(an->values.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = an->values[i] + s;
    return make_op(a.shape(), std::move(out), {an}, [an](TensorData& self) {
        an->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    auto an = a.node();
    double acc = 0.0;
    for (double v : an->values) acc += v;
    return make_op({1, 1, 1, 1}, {acc}, {an}, [an](TensorData& self) {
        an->ensure_grad();
        double g = self.grad[0];
        for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
}

Tensor activation(const Tensor& a, Activation kind) {
    auto an = a.node();
    std::vector<double> out(an->values.size());
    if (kind == Activation::Relu) {
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = an->values[i] > 0.0 ? an->values[i] : 0.0;
    } else {
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = 1.0 / (1.0 + std::exp(-an->values[i]));
    }
    std::vector<double> saved = out;
    return make_op(a.shape(), std::move(out), {an},
                       [an, kind, saved = std::move(saved)](TensorData& self) {
        an->ensure_grad();
        if (kind == Activation::Relu) {
            // subgradient at 0 is 0
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (an->values[i] > 0.0) an->grad[i] += self.grad[i];
        } else {
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * saved[i] * (1.0 - saved[i]);
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa[0] != sb[0] || sa[1] != sb[1] || sa[2] != sb[2])
        throw ContractViolation("concat_channels: spatial dimensions disagree");
    Shape so{sa[0], sa[1], sa[2], sa[3] + sb[3]};
    auto an = a.node();
    auto bn = b.node();
    std::vector<double> out(static_cast<size_t>(shape_numel(so)));
    int npix = sa[0] * sa[1] * sa[2];
    for (int p = 0; p < npix; ++p) {
        for (int c = 0; c < sa[3]; ++c)
            out[static_cast<size_t>(p) * so[3] + c] = an->values[static_cast<size_t>(p) * sa[3] + c];
        for (int c = 0; c < sb[3]; ++c)
            out[static_cast<size_t>(p) * so[3] + sa[3] + c] = bn->values[static_cast<size_t>(p) * sb[3] + c];
    }
    return make_op(so, std::move(out), {an, bn}, [an, bn, sa, sb, so, npix](TensorData& self) {
        for (int p = 0; p < npix; ++p) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int c = 0; c < sa[3]; ++c)
                    an->grad[static_cast<size_t>(p) * sa[3] + c] +=
                        self.grad[static_cast<size_t>(p) * so[3] + c];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int c = 0; c < sb[3]; ++c)
                    bn->grad[static_cast<size_t>(p) * sb[3] + c] +=
                        self.grad[static_cast<size_t>(p) * so[3] + sa[3] + c];
            }
        }
    });
}

Tensor cosine_channelwise(const Tensor& a, const Tensor& b, double eps) {
    if (a.shape() != b.shape())
        throw ContractViolation("cosine_channelwise: shapes differ");
    const Shape& s = a.shape();
    int npix = s[0] * s[1] * s[2];
    int k = s[3];
    auto an = a.node();
    auto bn = b.node();
    std::vector<double> out(static_cast<size_t>(npix));
    std::vector<double> gna(static_cast<size_t>(npix)), gnb(static_cast<size_t>(npix));
    std::vector<double> nna(static_cast<size_t>(npix)), nnb(static_cast<size_t>(npix));
    for (int p = 0; p < npix; ++p) {
        const double* pa = an->values.data() + static_cast<size_t>(p) * k;
        const double* pb = bn->values.data() + static_cast<size_t>(p) * k;
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int c = 0; c < k; ++c) {
            dot += pa[c] * pb[c];
            na2 += pa[c] * pa[c];
            nb2 += pb[c] * pb[c];
        }
        double na = std::sqrt(na2), nb = std::sqrt(nb2);
        nna[p] = na;
        nnb[p] = nb;
        gna[p] = std::max(na, eps);
        gnb[p] = std::max(nb, eps);
        out[p] = dot / (gna[p] * gnb[p]);
    }
    Shape so{s[0], s[1], s[2], 1};
    return make_op(so, std::move(out), {an, bn},
                       [an, bn, s, npix, k, eps,
                        gna = std::move(gna), gnb = std::move(gnb),
                        nna = std::move(nna), nnb = std::move(nnb)](TensorData& self) {
        for (int p = 0; p < npix; ++p) {
            double g = self.grad[static_cast<size_t>(p)];
            if (g == 0.0) continue;
            const double* pa = an->values.data() + static_cast<size_t>(p) * k;
            const double* pb = bn->values.data() + static_cast<size_t>(p) * k;
            double c = self.values[static_cast<size_t>(p)];
            double denom = gna[p] * gnb[p];
            if (an->requires_grad) {
                an->ensure_grad();
                double* ga = an->grad.data() + static_cast<size_t>(p) * k;
                // when the norm is under the guard, it is treated as constant
                bool live = nna[p] > eps;
                for (int ci = 0; ci < k; ++ci) {
                    double d = pb[ci] / denom;
                    if (live) d -= c * pa[ci] / (nna[p] * nna[p]);
                    ga[ci] += g * d;
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double* gb = bn->grad.data() + static_cast<size_t>(p) * k;
                bool live = nnb[p] > eps;
                for (int ci = 0; ci < k; ++ci) {
                    double d = pa[ci] / denom;
                    if (live) d -= c * pb[ci] / (nnb[p] * nnb[p]);
                    gb[ci] += g * d;
                }
            }
        }
    });
}

Tensor stop_gradient(const Tensor& a) {
    auto d = std::make_shared<TensorData>();
    d->shape = a.shape();
    d->values = a.values();
    d->requires_grad = false;
    return Tensor(d);
}

Tensor masked_mean(const Tensor& values, const std::vector<std::uint8_t>& selected) {
    const Shape& s = values.shape();
    int npix = s[0] * s[1] * s[2];
    if (s[3] != 1) throw ContractViolation("masked_mean: values must be [1,H,W,1]");
    if (static_cast<int>(selected.size()) != npix)
        throw ContractViolation("masked_mean: mask size does not match values");
    int m = 0;
    double acc = 0.0;
    auto vn = values.node();
    for (int p = 0; p < npix; ++p)
        if (selected[static_cast<size_t>(p)]) {
            acc += vn->values[static_cast<size_t>(p)];
            ++m;
        }
    if (m == 0) throw ContractViolation("masked_mean: empty mask");
    return make_op({1, 1, 1, 1}, {acc / m}, {vn}, [vn, selected, m, npix](TensorData& self) {
        vn->ensure_grad();
        double g = self.grad[0] / m;
        for (int p = 0; p < npix; ++p)
            if (selected[static_cast<size_t>(p)]) vn->grad[static_cast<size_t>(p)] += g;
    });
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractViolation("backward: loss is not scalar");
    auto root = loss.node();
    if (!root->requires_grad) return;

    // iterative post-order DFS -> topological order
    std::vector<TensorData*> order;
    std::unordered_set<TensorData*> visited;
    std::vector<std::pair<TensorData*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorData* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorData* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

void check_finite(const Tensor& t, const std::string& context) {
    for (double v : t.values())
        if (!std::isfinite(v))
            throw NumericalError("non-finite value in " + context);
}

int thread_count() {
    static int cached = [] {
        const char* env = std::getenv("HYPERCHANGE_THREADS");
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw < 1) hw = 1;
        if (!env) return 1;
        int n = std::atoi(env);
        if (n < 1) n = 1;
        return std::min(n, hw);
    }();
    return cached;
}

void parallel_for(int begin, int end, const std::function<void(int, int)>& body) {
    int n = end - begin;
    int nt = std::min(thread_count(), n);
    if (nt <= 1 || n <= 1) {
        if (n > 0) body(begin, end);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    int chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        int lo = begin + t * chunk;
        int hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& w : workers) w.join();
}

}  // namespace hyperchange
