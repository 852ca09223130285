#pragma once

#include <cmath>
#include <vector>

#include "resmatch/core.hpp"

namespace resmatch {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before any log, so
// losses stay finite at saturated predictions. Gradients are zero inside
// the clamped region, mirroring the flat clamp.
inline constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

struct LossWeights {
    double lambda_x = 5.0;  // supervised weight
    double lambda_u = 2.0;  // unsupervised weight
    double tau = 0.7;       // pixel confidence threshold
    double lambda_t = 0.8;  // text-similarity threshold

    void validate() const {
        if (lambda_x < 0.0 || lambda_u < 0.0)
            throw ConfigError("loss weights must be nonnegative");
        if (tau < 0.0 || tau > 1.0)
            throw ConfigError("confidence threshold must lie in [0,1]");
        if (lambda_t < 0.0 || lambda_t > 1.0)
            throw ConfigError("text-similarity threshold must lie in [0,1]");
    }
};

// Per-sample teacher output: hard labels from the weak prediction, a
// validity grid marking pixels whose top confidence clears tau, and the
// mask-aware score used both for input blending and loss scaling.
struct PseudoLabelBundle {
    PredictionMap weak_prediction;
    Mask pseudo_labels;
    std::vector<std::uint8_t> validity;  // row-major H*W, 1 = confident pixel
    double score = 0.0;

    int valid_count() const {
        int n = 0;
        for (std::uint8_t v : validity) n += v;
        return n;
    }
};

// Average top-class confidence over the pixels that clear tau. When no
// pixel does, the score is defined as 0: the sample then contributes no
// unsupervised loss and its strong input collapses to the weak input.
inline double mask_confidence_score(const PredictionMap& weak, double tau) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < weak.pixel_count(); ++i) {
        double m = std::max(weak.fg[i], weak.bg[i]);
        if (m >= tau) {
            sum += m;
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / count;
}

inline PseudoLabelBundle make_pseudo_labels(const PredictionMap& weak,
                                            double tau) {
    if (tau < 0.0 || tau > 1.0)
        throw ConfigError("confidence threshold must lie in [0,1]");
    PseudoLabelBundle bundle;
    bundle.weak_prediction = weak;
    bundle.pseudo_labels = binarize(weak);  // argmax, tie -> background
    bundle.validity.assign(weak.pixel_count(), 0);
    for (std::size_t i = 0; i < weak.pixel_count(); ++i) {
        if (std::max(weak.fg[i], weak.bg[i]) >= tau) bundle.validity[i] = 1;
    }
    bundle.score = mask_confidence_score(weak, tau);
    return bundle;
}

// Gradient of a loss with respect to a PredictionMap's class probabilities.
// Same layout as the map it differentiates.
struct PredictionGradient {
    int height = 0;
    int width = 0;
    std::vector<double> fg, bg;

    static PredictionGradient zeros(int h, int w) {
        PredictionGradient g;
        g.height = h;
        g.width = w;
        g.fg.assign(static_cast<std::size_t>(h) * w, 0.0);
        g.bg.assign(static_cast<std::size_t>(h) * w, 0.0);
        return g;
    }
};

namespace detail {

inline void require_same_shape(const PredictionMap& pred, int h, int w,
                               const char* what) {
    if (pred.height != h || pred.width != w)
        throw StructuralError(std::string(what) + ": prediction is " +
                              std::to_string(pred.height) + "x" +
                              std::to_string(pred.width) + ", expected " +
                              std::to_string(h) + "x" + std::to_string(w));
}

inline void require_same_count(std::size_t preds, std::size_t bundles,
                               const char* what) {
    if (preds != bundles)
        throw StructuralError(std::string(what) + ": " + std::to_string(preds) +
                              " predictions vs " + std::to_string(bundles) +
                              " bundles");
}

}  // namespace detail

// Mean per-pixel cross-entropy against ground truth.
inline double supervised_loss(const PredictionMap& prediction,
                              const Mask& ground_truth) {
    detail::require_same_shape(prediction, ground_truth.height,
                               ground_truth.width, "supervised loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.pixel_count(); ++i) {
        double p_true =
            ground_truth.values[i] ? prediction.fg[i] : prediction.bg[i];
        acc += -std::log(clamp_prob(p_true));
    }
    return acc / static_cast<double>(prediction.pixel_count());
}

inline PredictionGradient supervised_loss_grad(const PredictionMap& prediction,
                                               const Mask& ground_truth) {
    detail::require_same_shape(prediction, ground_truth.height,
                               ground_truth.width, "supervised loss");
    auto grad = PredictionGradient::zeros(prediction.height, prediction.width);
    double inv_n = 1.0 / static_cast<double>(prediction.pixel_count());
    for (std::size_t i = 0; i < prediction.pixel_count(); ++i) {
        bool fg_true = ground_truth.values[i] != 0;
        double p_true = fg_true ? prediction.fg[i] : prediction.bg[i];
        if (p_true <= kProbEps || p_true >= 1.0 - kProbEps) continue;  // clamped flat
        (fg_true ? grad.fg : grad.bg)[i] = -inv_n / p_true;
    }
    return grad;
}

// Self-adaptive unsupervised loss: per sample, cross-entropy of the strong
// prediction against the hard pseudo-labels over confident pixels only,
// normalized by the full pixel count and scaled by the sample's
// mask-aware score; then averaged over the batch.
inline double unsupervised_loss(
    const std::vector<PredictionMap>& strong_predictions,
    const std::vector<PseudoLabelBundle>& bundles) {
    detail::require_same_count(strong_predictions.size(), bundles.size(),
                               "unsupervised loss");
    if (strong_predictions.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < strong_predictions.size(); ++i) {
        const PredictionMap& ps = strong_predictions[i];
        const PseudoLabelBundle& b = bundles[i];
        detail::require_same_shape(ps, b.weak_prediction.height,
                                   b.weak_prediction.width,
                                   "unsupervised loss");
        double inner = 0.0;
        for (std::size_t px = 0; px < ps.pixel_count(); ++px) {
            if (!b.validity[px]) continue;
            double p_true =
                b.pseudo_labels.values[px] ? ps.fg[px] : ps.bg[px];
            inner += -std::log(clamp_prob(p_true));
        }
        total += b.score / static_cast<double>(ps.pixel_count()) * inner;
    }
    return total / static_cast<double>(strong_predictions.size());
}

inline std::vector<PredictionGradient> unsupervised_loss_grad(
    const std::vector<PredictionMap>& strong_predictions,
    const std::vector<PseudoLabelBundle>& bundles) {
    detail::require_same_count(strong_predictions.size(), bundles.size(),
                               "unsupervised loss");
    std::vector<PredictionGradient> grads;
    grads.reserve(strong_predictions.size());
    double inv_b = strong_predictions.empty()
                       ? 0.0
                       : 1.0 / static_cast<double>(strong_predictions.size());
    for (std::size_t i = 0; i < strong_predictions.size(); ++i) {
        const PredictionMap& ps = strong_predictions[i];
        const PseudoLabelBundle& b = bundles[i];
        detail::require_same_shape(ps, b.weak_prediction.height,
                                   b.weak_prediction.width,
                                   "unsupervised loss");
        auto grad = PredictionGradient::zeros(ps.height, ps.width);
        double scale = inv_b * b.score / static_cast<double>(ps.pixel_count());
        for (std::size_t px = 0; px < ps.pixel_count(); ++px) {
            if (!b.validity[px]) continue;
            bool fg_true = b.pseudo_labels.values[px] != 0;
            double p_true = fg_true ? ps.fg[px] : ps.bg[px];
            if (p_true <= kProbEps || p_true >= 1.0 - kProbEps) continue;
            (fg_true ? grad.fg : grad.bg)[px] = -scale / p_true;
        }
        grads.push_back(std::move(grad));
    }
    return grads;
}

// Baseline consistency loss: cross-entropy against hard pseudo-labels
// averaged over the confident pixels of each sample (no score scaling);
// samples with no confident pixel contribute zero.
inline double fixmatch_unsupervised_loss(
    const std::vector<PredictionMap>& strong_predictions,
    const std::vector<PseudoLabelBundle>& bundles) {
    detail::require_same_count(strong_predictions.size(), bundles.size(),
                               "consistency loss");
    if (strong_predictions.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < strong_predictions.size(); ++i) {
        const PredictionMap& ps = strong_predictions[i];
        const PseudoLabelBundle& b = bundles[i];
        detail::require_same_shape(ps, b.weak_prediction.height,
                                   b.weak_prediction.width, "consistency loss");
        int valid = b.valid_count();
        if (valid == 0) continue;
        double inner = 0.0;
        for (std::size_t px = 0; px < ps.pixel_count(); ++px) {
            if (!b.validity[px]) continue;
            double p_true =
                b.pseudo_labels.values[px] ? ps.fg[px] : ps.bg[px];
            inner += -std::log(clamp_prob(p_true));
        }
        total += inner / valid;
    }
    return total / static_cast<double>(strong_predictions.size());
}

inline std::vector<PredictionGradient> fixmatch_unsupervised_loss_grad(
    const std::vector<PredictionMap>& strong_predictions,
    const std::vector<PseudoLabelBundle>& bundles) {
    detail::require_same_count(strong_predictions.size(), bundles.size(),
                               "consistency loss");
    std::vector<PredictionGradient> grads;
    grads.reserve(strong_predictions.size());
    double inv_b = strong_predictions.empty()
                       ? 0.0
                       : 1.0 / static_cast<double>(strong_predictions.size());
    for (std::size_t i = 0; i < strong_predictions.size(); ++i) {
        const PredictionMap& ps = strong_predictions[i];
        const PseudoLabelBundle& b = bundles[i];
        detail::require_same_shape(ps, b.weak_prediction.height,
                                   b.weak_prediction.width, "consistency loss");
        auto grad = PredictionGradient::zeros(ps.height, ps.width);
        int valid = b.valid_count();
        if (valid > 0) {
            double scale = inv_b / valid;
            for (std::size_t px = 0; px < ps.pixel_count(); ++px) {
                if (!b.validity[px]) continue;
                bool fg_true = b.pseudo_labels.values[px] != 0;
                double p_true = fg_true ? ps.fg[px] : ps.bg[px];
                if (p_true <= kProbEps || p_true >= 1.0 - kProbEps) continue;
                (fg_true ? grad.fg : grad.bg)[px] = -scale / p_true;
            }
        }
        grads.push_back(std::move(grad));
    }
    return grads;
}

inline double total_loss(double sup, double unsup, const LossWeights& weights) {
    return weights.lambda_x * sup + weights.lambda_u * unsup;
}

}  // namespace resmatch
