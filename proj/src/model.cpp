#include "cascadedet/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cascadedet {

namespace {

std::int64_t quantize16(double v) { return std::llround(v * 16.0); }

std::uint64_t feature_noise_key(const Box& box, const Scene& scene, const FeatureConfig& cfg) {
    std::uint64_t k = mix64(cfg.seed, static_cast<std::uint64_t>(scene.image_id));
    k = mix64(k, static_cast<std::uint64_t>(quantize16(box.cx)));
    k = mix64(k, static_cast<std::uint64_t>(quantize16(box.cy)));
    k = mix64(k, static_cast<std::uint64_t>(quantize16(box.w)));
    k = mix64(k, static_cast<std::uint64_t>(quantize16(box.h)));
    return k;
}

} // namespace

FeatureVector featurize(const Box& box, const Scene& scene, const FeatureConfig& cfg) {
    FeatureVector f;
    f.reserve(static_cast<std::size_t>(cfg.dim()));
    f.push_back(box.cx / scene.width);
    f.push_back(box.cy / scene.height);
    f.push_back(std::log(box.w));
    f.push_back(std::log(box.h));

    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < scene.gts.size(); ++g) {
        const double v = iou(box, scene.gts[g].box);
        if (v > best_iou) {
            best_iou = v;
            best = static_cast<int>(g);
        }
    }

    Rng noise(feature_noise_key(box, scene, cfg));
    if (best >= 0 && best_iou >= kObservationIouFloor) {
        const Delta d = encode_delta(box, scene.gts[static_cast<std::size_t>(best)].box);
        const double sigma = cfg.observation_noise + cfg.noise_growth * (1.0 - best_iou);
        for (const double v : d.to_array()) {
            f.push_back(v + noise.normal(0.0, sigma));
        }
    } else {
        const double sigma = cfg.observation_noise + cfg.noise_growth;
        for (int i = 0; i < 4; ++i) {
            f.push_back(noise.normal(0.0, sigma));
        }
    }
    for (int i = 0; i < cfg.distractor_dims; ++i) {
        f.push_back(noise.normal());
    }
    f.push_back(1.0);
    return f;
}

namespace {

// Cholesky factorization A = L L^T in place (lower triangle).
void cholesky(Matrix& a) {
    const int n = a.rows;
    for (int j = 0; j < n; ++j) {
        double d = a.at(j, j);
        for (int k = 0; k < j; ++k) {
            d -= a.at(j, k) * a.at(j, k);
        }
        if (d <= 0.0) {
            throw std::runtime_error("fit_regressor: normal equations not positive definite");
        }
        a.at(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = a.at(i, j);
            for (int k = 0; k < j; ++k) {
                s -= a.at(i, k) * a.at(j, k);
            }
            a.at(i, j) = s / a.at(j, j);
        }
    }
}

// Solves L L^T x = b for one right-hand side, in place.
void cholesky_solve(const Matrix& l, std::vector<double>& b) {
    const int n = l.rows;
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) {
            s -= l.at(i, k) * b[static_cast<std::size_t>(k)];
        }
        b[static_cast<std::size_t>(i)] = s / l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) {
            s -= l.at(k, i) * b[static_cast<std::size_t>(k)];
        }
        b[static_cast<std::size_t>(i)] = s / l.at(i, i);
    }
}

bool all_finite(const Matrix& m) {
    for (const double v : m.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

} // namespace

Matrix fit_regressor(const Matrix& features, const Matrix& targets, double ridge) {
    if (features.rows != targets.rows) {
        throw std::runtime_error("fit_regressor: feature/target row mismatch");
    }
    if (!all_finite(features) || !all_finite(targets)) {
        throw std::runtime_error("fit_regressor: non-finite input");
    }
    const int n = features.rows;
    const int d = features.cols;
    const int t = targets.cols;

    Matrix gram(d, d);
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < d; ++i) {
            const double fi = features.at(r, i);
            for (int j = i; j < d; ++j) {
                gram.at(i, j) += fi * features.at(r, j);
            }
        }
    }
    for (int i = 0; i < d; ++i) {
        gram.at(i, i) += ridge;
        for (int j = 0; j < i; ++j) {
            gram.at(i, j) = gram.at(j, i);
        }
    }
    Matrix rhs(d, t);
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < d; ++i) {
            const double fi = features.at(r, i);
            for (int c = 0; c < t; ++c) {
                rhs.at(i, c) += fi * targets.at(r, c);
            }
        }
    }

    Matrix l = gram;
    cholesky(l);
    Matrix w(d, t);
    std::vector<double> col(static_cast<std::size_t>(d));
    for (int c = 0; c < t; ++c) {
        for (int i = 0; i < d; ++i) {
            col[static_cast<std::size_t>(i)] = rhs.at(i, c);
        }
        cholesky_solve(l, col);
        // one step of iterative refinement to push the normal-equation
        // residual down to rounding level
        std::vector<double> resid(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            double s = rhs.at(i, c);
            for (int j = 0; j < d; ++j) {
                s -= gram.at(i, j) * col[static_cast<std::size_t>(j)];
            }
            resid[static_cast<std::size_t>(i)] = s;
        }
        cholesky_solve(l, resid);
        for (int i = 0; i < d; ++i) {
            w.at(i, c) = col[static_cast<std::size_t>(i)] + resid[static_cast<std::size_t>(i)];
        }
    }
    return w;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

namespace {

std::vector<double> row_logits(const Matrix& weights, const Matrix& features, int row) {
    std::vector<double> logits(static_cast<std::size_t>(weights.rows), 0.0);
    for (int k = 0; k < weights.rows; ++k) {
        double s = 0.0;
        for (int d = 0; d < weights.cols; ++d) {
            s += weights.at(k, d) * features.at(row, d);
        }
        logits[static_cast<std::size_t>(k)] = s;
    }
    return logits;
}

} // namespace

double classifier_loss(const Matrix& weights, const Matrix& features,
                       const std::vector<int>& labels) {
    double loss = 0.0;
    for (int r = 0; r < features.rows; ++r) {
        const auto p = softmax(row_logits(weights, features, r));
        loss -= std::log(std::max(p[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])],
                                  1e-300));
    }
    return loss / static_cast<double>(features.rows);
}

Matrix classifier_gradient(const Matrix& weights, const Matrix& features,
                           const std::vector<int>& labels) {
    Matrix grad(weights.rows, weights.cols);
    for (int r = 0; r < features.rows; ++r) {
        auto p = softmax(row_logits(weights, features, r));
        p[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])] -= 1.0;
        for (int k = 0; k < weights.rows; ++k) {
            const double pk = p[static_cast<std::size_t>(k)];
            for (int d = 0; d < weights.cols; ++d) {
                grad.at(k, d) += pk * features.at(r, d);
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(features.rows);
    for (double& v : grad.data) {
        v *= inv_n;
    }
    return grad;
}

Matrix fit_classifier(const Matrix& features, const std::vector<int>& labels, int n_classes,
                      double lr, int epochs, std::uint64_t seed,
                      std::vector<double>* loss_history) {
    if (features.rows != static_cast<int>(labels.size())) {
        throw std::runtime_error("fit_classifier: feature/label row mismatch");
    }
    for (const int y : labels) {
        if (y < 0 || y > n_classes) {
            throw std::runtime_error("fit_classifier: label out of range");
        }
    }

    Matrix w(n_classes + 1, features.cols);
    Rng init(mix64(seed, 0x636c73ULL));
    for (double& v : w.data) {
        v = init.normal(0.0, 0.01);
    }

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // single pass: per-sample softmax feeds both the loss and the gradient
        Matrix grad(w.rows, w.cols);
        double loss = 0.0;
        for (int r = 0; r < features.rows; ++r) {
            auto p = softmax(row_logits(w, features, r));
            const auto y = static_cast<std::size_t>(labels[static_cast<std::size_t>(r)]);
            loss -= std::log(std::max(p[y], 1e-300));
            p[y] -= 1.0;
            for (int k = 0; k < w.rows; ++k) {
                const double pk = p[static_cast<std::size_t>(k)];
                if (pk == 0.0) {
                    continue;
                }
                for (int d = 0; d < w.cols; ++d) {
                    grad.at(k, d) += pk * features.at(r, d);
                }
            }
        }
        loss /= static_cast<double>(features.rows);
        if (!std::isfinite(loss)) {
            throw std::runtime_error("fit_classifier: loss diverged at epoch " +
                                     std::to_string(epoch));
        }
        if (loss_history != nullptr) {
            loss_history->push_back(loss);
        }
        // grad holds raw sums; scale down to the mean gradient here
        const double step = lr / static_cast<double>(features.rows);
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            w.data[i] -= step * grad.data[i];
        }
    }
    return w;
}

Delta predict_delta(const StageModel& model, const FeatureVector& f) {
    std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
    for (int d = 0; d < model.reg_weights.rows; ++d) {
        const double fd = f[static_cast<std::size_t>(d)];
        for (int c = 0; c < 4; ++c) {
            out[static_cast<std::size_t>(c)] += model.reg_weights.at(d, c) * fd;
        }
    }
    return denormalize_delta(Delta::from_array(out), model.stats);
}

std::vector<double> predict_scores(const StageModel& model, const FeatureVector& f) {
    std::vector<double> logits(static_cast<std::size_t>(model.cls_weights.rows), 0.0);
    for (int k = 0; k < model.cls_weights.rows; ++k) {
        double s = 0.0;
        for (int d = 0; d < model.cls_weights.cols; ++d) {
            s += model.cls_weights.at(k, d) * f[static_cast<std::size_t>(d)];
        }
        logits[static_cast<std::size_t>(k)] = s;
    }
    return softmax(logits);
}

double stage_loss(const StageModel& model, const Matrix& features,
                  const std::vector<LabeledSample>& batch) {
    std::vector<int> labels;
    labels.reserve(batch.size());
    for (const LabeledSample& s : batch) {
        labels.push_back(s.label);
    }
    const double cls = classifier_loss(model.cls_weights, features, labels);

    double loc = 0.0;
    int positives = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].label <= 0 || !batch[i].target.has_value()) {
            continue;
        }
        std::array<double, 4> pred{0.0, 0.0, 0.0, 0.0};
        for (int d = 0; d < model.reg_weights.rows; ++d) {
            const double fd = features.at(static_cast<int>(i), d);
            for (int c = 0; c < 4; ++c) {
                pred[static_cast<std::size_t>(c)] += model.reg_weights.at(d, c) * fd;
            }
        }
        const Delta target = normalize_delta(*batch[i].target, model.stats);
        loc += smooth_l1(Delta{pred[0] - target.dx, pred[1] - target.dy, pred[2] - target.dw,
                               pred[3] - target.dh});
        ++positives;
    }
    if (positives > 0) {
        loc /= static_cast<double>(positives);
    }
    return cls + kStageLossLambda * loc;
}

} // namespace cascadedet
