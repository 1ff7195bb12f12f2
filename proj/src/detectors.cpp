#include "hyperchange/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hyperchange/tensor.hpp"

namespace hyperchange {

RxModel::RxModel(const double* data, int n, int c, double ridge_eps, double ridge_delta)
    : c_(c) {
    if (n < 2) throw ContractViolation("RxModel: need at least 2 pixels");
    mean_.assign(static_cast<size_t>(c), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k) mean_[static_cast<size_t>(k)] += data[static_cast<size_t>(i) * c + k];
    for (double& v : mean_) v /= n;

    std::vector<double> cov(static_cast<size_t>(c) * c, 0.0);
    std::vector<double> d(static_cast<size_t>(c));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < c; ++k)
            d[static_cast<size_t>(k)] = data[static_cast<size_t>(i) * c + k] - mean_[static_cast<size_t>(k)];
        for (int r = 0; r < c; ++r)
            for (int s = r; s < c; ++s)
                cov[static_cast<size_t>(r) * c + s] += d[static_cast<size_t>(r)] * d[static_cast<size_t>(s)];
    }
    double trace = 0.0;
    for (int r = 0; r < c; ++r) {
        for (int s = r; s < c; ++s) {
            cov[static_cast<size_t>(r) * c + s] /= n;
            cov[static_cast<size_t>(s) * c + r] = cov[static_cast<size_t>(r) * c + s];
        }
        trace += cov[static_cast<size_t>(r) * c + r];
    }
    double ridge = ridge_eps * (trace / c + ridge_delta);
    if (ridge <= 0.0) ridge = ridge_eps * ridge_eps;  // all-zero data still factors
    for (int r = 0; r < c; ++r) cov[static_cast<size_t>(r) * c + r] += ridge;

    // in-place lower Cholesky
    cov_factor_.assign(static_cast<size_t>(c) * c, 0.0);
    for (int r = 0; r < c; ++r) {
        for (int s = 0; s <= r; ++s) {
            double acc = cov[static_cast<size_t>(r) * c + s];
            for (int k = 0; k < s; ++k)
                acc -= cov_factor_[static_cast<size_t>(r) * c + k] *
                       cov_factor_[static_cast<size_t>(s) * c + k];
            if (r == s) {
                if (acc <= 0.0) throw NumericalError("RxModel: covariance not positive definite");
                cov_factor_[static_cast<size_t>(r) * c + s] = std::sqrt(acc);
            } else {
                cov_factor_[static_cast<size_t>(r) * c + s] =
                    acc / cov_factor_[static_cast<size_t>(s) * c + s];
            }
        }
    }
}

double RxModel::score(const double* pixel) const {
    // Mahalanobis distance = ||L^-1 (x - mu)||^2
    std::vector<double> y(static_cast<size_t>(c_));
    for (int r = 0; r < c_; ++r) {
        double acc = pixel[r] - mean_[static_cast<size_t>(r)];
        for (int k = 0; k < r; ++k)
            acc -= cov_factor_[static_cast<size_t>(r) * c_ + k] * y[static_cast<size_t>(k)];
        y[static_cast<size_t>(r)] = acc / cov_factor_[static_cast<size_t>(r) * c_ + r];
    }
    double s = 0.0;
    for (double v : y) s += v * v;
    return s;
}

namespace {

void check_same_shape(const HsiCube& a, const HsiCube& b, const char* op) {
    if (a.height != b.height || a.width != b.width || a.bands != b.bands)
        throw ContractViolation(std::string(op) + ": cube shapes differ");
}

}  // namespace

ChangeScoreMap diff_rx(const HsiCube& x1, const HsiCube& x2) {
    check_same_shape(x1, x2, "diff_rx");
    int n = x1.height * x1.width, c = x1.bands;
    std::vector<double> diff(static_cast<size_t>(n) * c);
    for (size_t i = 0; i < diff.size(); ++i) diff[i] = x2.values[i] - x1.values[i];
    RxModel model(diff.data(), n, c);
    ChangeScoreMap out{x1.height, x1.width, std::vector<double>(static_cast<size_t>(n))};
    for (int p = 0; p < n; ++p)
        out.scores[static_cast<size_t>(p)] = model.score(diff.data() + static_cast<size_t>(p) * c);
    return out;
}

ChangeScoreMap cva_magnitude(const HsiCube& x1, const HsiCube& x2) {
    check_same_shape(x1, x2, "cva_magnitude");
    int n = x1.height * x1.width, c = x1.bands;
    ChangeScoreMap out{x1.height, x1.width, std::vector<double>(static_cast<size_t>(n))};
    for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int k = 0; k < c; ++k) {
            double d = x2.values[static_cast<size_t>(p) * c + k] - x1.values[static_cast<size_t>(p) * c + k];
            acc += d * d;
        }
        out.scores[static_cast<size_t>(p)] = std::sqrt(acc);
    }
    return out;
}

ChangeScoreMap cosine_distance_map(const HsiCube& f1, const HsiCube& f2) {
    check_same_shape(f1, f2, "cosine_distance_map");
    int n = f1.height * f1.width, c = f1.bands;
    constexpr double eps = 1e-12;
    ChangeScoreMap out{f1.height, f1.width, std::vector<double>(static_cast<size_t>(n))};
    for (int p = 0; p < n; ++p) {
        const double* a = f1.values.data() + static_cast<size_t>(p) * c;
        const double* b = f2.values.data() + static_cast<size_t>(p) * c;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int k = 0; k < c; ++k) {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        double cosv = dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
        out.scores[static_cast<size_t>(p)] = 1.0 - cosv;
    }
    return out;
}

BinaryChangeMap kmeans2_threshold(const ChangeScoreMap& scores) {
    size_t n = scores.scores.size();
    BinaryChangeMap out{scores.height, scores.width, std::vector<std::uint8_t>(n, 0)};
    auto [mn_it, mx_it] = std::minmax_element(scores.scores.begin(), scores.scores.end());
    double c0 = *mn_it, c1 = *mx_it;
    if (c0 == c1) return out;  // degenerate: all unchanged
    std::vector<std::uint8_t> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool moved = false;
        for (size_t i = 0; i < n; ++i) {
            double v = scores.scores[i];
            // tie toward the lower centroid
            std::uint8_t a = std::abs(v - c1) < std::abs(v - c0) ? 1 : 0;
            if (a != assign[i]) { assign[i] = a; moved = true; }
        }
        double s0 = 0.0, s1 = 0.0;
        long n0 = 0, n1 = 0;
        for (size_t i = 0; i < n; ++i) {
            if (assign[i]) { s1 += scores.scores[i]; ++n1; }
            else { s0 += scores.scores[i]; ++n0; }
        }
        if (n0 > 0) c0 = s0 / n0;
        if (n1 > 0) c1 = s1 / n1;
        if (!moved && iter > 0) break;
    }
    if (c1 >= c0) {
        out.changed = assign;
    } else {
        for (size_t i = 0; i < n; ++i) out.changed[i] = assign[i] ? 0 : 1;
    }
    return out;
}

namespace {

std::vector<std::pair<double, Label>> labeled_scores(const ChangeScoreMap& scores,
                                                     const LabelMap& labels,
                                                     const char* op) {
    if (scores.height != labels.height || scores.width != labels.width)
        throw ContractViolation(std::string(op) + ": score/label shapes differ");
    std::vector<std::pair<double, Label>> out;
    out.reserve(scores.scores.size());
    for (size_t i = 0; i < scores.scores.size(); ++i)
        if (labels.labels[i] != Label::Unlabeled)
            out.emplace_back(scores.scores[i], labels.labels[i]);
    return out;
}

}  // namespace

RocCurve roc_auc(const ChangeScoreMap& scores, const LabelMap& labels) {
    auto data = labeled_scores(scores, labels, "roc_auc");
    long pos = 0, neg = 0;
    for (const auto& [s, l] : data) (l == Label::Changed ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw ContractViolation("roc_auc: both classes must be present");

    std::sort(data.begin(), data.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    size_t i = 0;
    double auc = 0.0;
    while (i < data.size()) {
        double s = data[i].first;
        long dtp = 0, dfp = 0;
        while (i < data.size() && data[i].first == s) {
            (data[i].second == Label::Changed ? dtp : dfp)++;
            ++i;
        }
        double fpr0 = static_cast<double>(fp) / neg;
        double tpr0 = static_cast<double>(tp) / pos;
        tp += dtp;
        fp += dfp;
        double fpr1 = static_cast<double>(fp) / neg;
        double tpr1 = static_cast<double>(tp) / pos;
        auc += 0.5 * (tpr0 + tpr1) * (fpr1 - fpr0);
        curve.points.emplace_back(fpr1, tpr1);
    }
    curve.auc = auc;
    return curve;
}

ClassificationMetrics confusion_metrics(const BinaryChangeMap& pred, const LabelMap& labels) {
    if (pred.height != labels.height || pred.width != labels.width)
        throw ContractViolation("confusion_metrics: shapes differ");
    ClassificationMetrics m;
    long labeled = 0;
    for (size_t i = 0; i < labels.labels.size(); ++i) {
        Label truth = labels.labels[i];
        if (truth == Label::Unlabeled) continue;
        ++labeled;
        bool p = pred.changed[i] != 0;
        bool t = truth == Label::Changed;
        if (p && t) ++m.counts.tp;
        else if (!p && !t) ++m.counts.tn;
        else if (p && !t) ++m.counts.fp;
        else ++m.counts.fn;
    }
    if (labeled == 0) throw ContractViolation("confusion_metrics: no labeled pixels");
    double total = static_cast<double>(labeled);
    double tp = static_cast<double>(m.counts.tp), tn = static_cast<double>(m.counts.tn);
    double fp = static_cast<double>(m.counts.fp), fn = static_cast<double>(m.counts.fn);
    m.oa = (tp + tn) / total;
    if (tp + fp > 0) m.precision = tp / (tp + fp); else m.zero_denominator = true;
    if (tp + fn > 0) m.recall = tp / (tp + fn); else m.zero_denominator = true;
    if (m.precision + m.recall > 0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else m.zero_denominator = true;
    double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (total * total);
    if (pe < 1.0) m.kappa = (m.oa - pe) / (1.0 - pe); else m.zero_denominator = true;
    return m;
}

namespace {

FiveNumber five_number(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        double pos = q * (static_cast<double>(v.size()) - 1.0);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, v.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[hi] * frac;
    };
    return FiveNumber{v.front(), quantile(0.25), quantile(0.5), quantile(0.75), v.back()};
}

}  // namespace

SeparabilityStats separability_stats(const ChangeScoreMap& scores, const LabelMap& labels) {
    auto data = labeled_scores(scores, labels, "separability_stats");
    std::vector<double> change, background;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [s, l] : data) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    double range = hi > lo ? hi - lo : 1.0;
    for (const auto& [s, l] : data) {
        double norm = (s - lo) / range;
        (l == Label::Changed ? change : background).push_back(norm);
    }
    if (change.empty() || background.empty())
        throw ContractViolation("separability_stats: both classes must be present");
    return SeparabilityStats{five_number(std::move(change)), five_number(std::move(background))};
}

}  // namespace hyperchange
