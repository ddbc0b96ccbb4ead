#pragma once

#include <cstdint>
#include <vector>

#include "cascadedet/dataset.hpp"
#include "cascadedet/geometry.hpp"

namespace cascadedet {

/// Dense row-major matrix of doubles, sized for desk-scale problems.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

// Boxes below this max-IoU observe pure noise instead of their gt's delta.
inline constexpr double kObservationIouFloor = 0.3;

/// Stand-in for backbone features. A box is featurized as
///   [cx/W, cy/H, log w, log h,
///    observation of the matched gt's delta + noise, (4)
///    distractor noise, (distractor_dims)
///    1]
/// The observation noise std is observation_noise + noise_growth * (1 - IoU),
/// so low-quality boxes are genuinely harder to regress; background boxes
/// (max IoU < kObservationIouFloor) observe pure noise of std
/// observation_noise + noise_growth. All noise is a pure function of
/// (seed, image_id, quantized box).
struct FeatureConfig {
    double observation_noise = 0.02;
    double noise_growth = 0.05;
    int distractor_dims = 8;
    std::uint64_t seed = 42;

    int dim() const { return 4 + 4 + distractor_dims + 1; }

    bool operator==(const FeatureConfig&) const = default;
};

using FeatureVector = std::vector<double>;

FeatureVector featurize(const Box& box, const Scene& scene, const FeatureConfig& cfg);

/// One cascade stage: its IoU threshold, the box regressor (D x 4), the
/// (M+1) x D classifier, and the delta statistics its targets were
/// normalized with.
struct StageModel {
    double u = 0.5;
    Matrix reg_weights;
    Matrix cls_weights;
    NormStats stats;

    bool operator==(const StageModel&) const = default;
};

/// Ridge regression, argmin ||XW - T||^2 + ridge ||W||^2, solved in closed
/// form via the normal equations (Cholesky plus one refinement step).
/// Throws std::runtime_error on non-finite inputs.
Matrix fit_regressor(const Matrix& features, const Matrix& targets, double ridge);

/// Mean cross-entropy of the softmax classifier `weights` ((M+1) x D) on the
/// given batch.
double classifier_loss(const Matrix& weights, const Matrix& features,
                       const std::vector<int>& labels);

/// Analytic gradient of classifier_loss with respect to the weights.
Matrix classifier_gradient(const Matrix& weights, const Matrix& features,
                           const std::vector<int>& labels);

/// Full-batch gradient descent on the mean cross-entropy; weights start from
/// a small seeded Gaussian init. Throws std::runtime_error naming the epoch
/// if the loss turns non-finite. When `loss_history` is non-null it receives
/// the loss at the start of every epoch.
Matrix fit_classifier(const Matrix& features, const std::vector<int>& labels, int n_classes,
                      double lr, int epochs, std::uint64_t seed,
                      std::vector<double>* loss_history = nullptr);

std::vector<double> softmax(const std::vector<double>& logits);

Delta predict_delta(const StageModel& model, const FeatureVector& f);
std::vector<double> predict_scores(const StageModel& model, const FeatureVector& f);

// Trade-off coefficient between classification and localization terms.
inline constexpr double kStageLossLambda = 1.0;

/// Classification cross-entropy plus lambda times the mean smooth-L1 of the
/// normalized-delta residuals over positives (zero without positives).
/// `features` row i must featurize batch[i].box.
double stage_loss(const StageModel& model, const Matrix& features,
                  const std::vector<LabeledSample>& batch);

} // namespace cascadedet
