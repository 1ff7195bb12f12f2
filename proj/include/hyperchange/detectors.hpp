#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hyperchange/io.hpp"

namespace hyperchange {

// H x W real scores; higher = more likely changed/anomalous.
struct ChangeScoreMap {
    int height = 0;
    int width = 0;
    std::vector<double> scores;

    double at(int y, int x) const { return scores[static_cast<size_t>(y) * width + x]; }
    double& at(int y, int x) { return scores[static_cast<size_t>(y) * width + x]; }
};

struct BinaryChangeMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> changed;  // 0/1 per pixel
};

// Global RX statistics: mean and 1/N covariance with ridge regularization
// eps * (trace/C + delta) * I. score() is the Mahalanobis distance
// (x-mu)^T Sigma^-1 (x-mu).
class RxModel {
public:
    // data: n rows of c contiguous doubles
    RxModel(const double* data, int n, int c,
            double ridge_eps = 1e-6, double ridge_delta = 1e-12);
    double score(const double* pixel) const;
    int dim() const { return c_; }

private:
    int c_;
    std::vector<double> mean_;
    std::vector<double> cov_factor_;  // Cholesky factor of regularized covariance
};

// RX on the per-pixel difference image x2 - x1.
ChangeScoreMap diff_rx(const HsiCube& x1, const HsiCube& x2);

// Per-pixel Euclidean norm of the spectral difference.
ChangeScoreMap cva_magnitude(const HsiCube& x1, const HsiCube& x2);

// Per pixel 1 - cos(f1, f2) in [0, 2].
ChangeScoreMap cosine_distance_map(const HsiCube& f1, const HsiCube& f2);

// 1-D two-means thresholding: centroids seeded at min/max, Lloyd iterations
// to an assignment fixpoint; the larger-centroid cluster is "changed".
// All-equal scores map to all unchanged.
BinaryChangeMap kmeans2_threshold(const ChangeScoreMap& scores);

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (false alarm rate, detection prob)
    double auc = 0.0;
};

// Exact curve over every distinct labeled score; trapezoidal AUC; unlabeled
// pixels excluded. Requires both classes present.
RocCurve roc_auc(const ChangeScoreMap& scores, const LabelMap& labels);

struct ConfusionCounts {
    long tp = 0, tn = 0, fp = 0, fn = 0;
};

struct ClassificationMetrics {
    double oa = 0.0;
    double kappa = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    ConfusionCounts counts;
    bool zero_denominator = false;  // some metric fell back to 0
};

ClassificationMetrics confusion_metrics(const BinaryChangeMap& pred, const LabelMap& labels);

struct FiveNumber {
    double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
};

// Five-number summaries of jointly min-max-normalized labeled scores,
// quartiles by linear interpolation.
struct SeparabilityStats {
    FiveNumber change;
    FiveNumber background;
};

SeparabilityStats separability_stats(const ChangeScoreMap& scores, const LabelMap& labels);

}  // namespace hyperchange
