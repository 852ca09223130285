#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "resmatch/augment.hpp"
#include "resmatch/core.hpp"
#include "resmatch/data.hpp"
#include "resmatch/embedder.hpp"
#include "resmatch/model.hpp"
#include "resmatch/rng.hpp"
#include "resmatch/ssl.hpp"
#include "resmatch/text.hpp"

namespace resmatch {

// ---------------------------------------------------------------------------
// Run configuration. Defaults mirror the published training recipe; every
// field can be overridden from a flat JSON config file or CLI flags.
// ---------------------------------------------------------------------------

enum class TrainMode { supervised, fixmatch, resmatch };

inline std::string_view mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::supervised: return "supervised";
        case TrainMode::fixmatch: return "fixmatch";
        default: return "resmatch";
    }
}

inline TrainMode mode_from_name(std::string_view name) {
    if (name == "supervised") return TrainMode::supervised;
    if (name == "fixmatch") return TrainMode::fixmatch;
    if (name == "resmatch") return TrainMode::resmatch;
    throw ConfigError("unknown training mode: " + std::string(name));
}

struct TrainerConfig {
    TrainMode mode = TrainMode::resmatch;
    double lambda_x = 5.0;
    double lambda_u = 2.0;
    double lambda_t = 0.8;
    double tau = 0.7;
    double learning_rate = 1e-5;
    int batch_size_labeled = 2;
    int batch_size_unlabeled = 2;
    int epochs = 40;
    int image_size = 480;
    std::uint64_t seed = 1;
    std::string augmentation = "auto";  // auto | resmatch | fixmatch_baseline
    std::string embedder = "hash";      // hash | remote
    std::string embedder_endpoint;      // required when embedder == remote
    int text_candidate_count = 10;
    int eval_every = 1;  // epochs between evaluations; 0 = final epoch only

    LossWeights weights() const {
        LossWeights w;
        w.lambda_x = lambda_x;
        w.lambda_u = lambda_u;
        w.tau = tau;
        w.lambda_t = lambda_t;
        return w;
    }

    // "auto" follows the mode: the baseline trains under its own wider
    // augmentation tables, everything else under the standard ones.
    AugmentationProfile profile() const {
        if (augmentation == "auto")
            return mode == TrainMode::fixmatch
                       ? AugmentationProfile::fixmatch_baseline()
                       : AugmentationProfile::resmatch();
        return AugmentationProfile::by_name(augmentation);
    }

    void validate() const {
        weights().validate();
        if (learning_rate <= 0.0)
            throw ConfigError("learning rate must be positive");
        if (batch_size_labeled < 1 || batch_size_unlabeled < 1)
            throw ConfigError("batch sizes must be at least 1");
        if (epochs < 0) throw ConfigError("epoch count must be nonnegative");
        if (image_size < 8)
            throw ConfigError("training image size must be at least 8");
        if (augmentation != "auto") AugmentationProfile::by_name(augmentation);
        if (embedder != "hash" && embedder != "remote")
            throw ConfigError("unknown embedder kind: " + embedder);
        if (embedder == "remote" && embedder_endpoint.empty())
            throw ConfigError("remote embedder requires an endpoint");
        if (text_candidate_count < 1)
            throw ConfigError("candidate count must be >= 1");
        if (eval_every < 0)
            throw ConfigError("eval cadence must be nonnegative");
    }

    // Hash over every field that shapes the optimization trajectory. Epoch
    // count and eval cadence are excluded so a checkpointed run can be
    // extended or re-monitored without being rejected as a different run.
    std::uint64_t trajectory_hash() const {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "%s|%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%d|%llu|%s|%s|%s|%d",
                      std::string(mode_name(mode)).c_str(), lambda_x, lambda_u,
                      lambda_t, tau, learning_rate, batch_size_labeled,
                      batch_size_unlabeled, image_size,
                      static_cast<unsigned long long>(seed),
                      augmentation.c_str(), embedder.c_str(),
                      embedder_endpoint.c_str(), text_candidate_count);
        return fnv1a64(buf);
    }
};

inline nlohmann::json config_to_json(const TrainerConfig& c) {
    nlohmann::json j;
    j["mode"] = std::string(mode_name(c.mode));
    j["lambda_x"] = c.lambda_x;
    j["lambda_u"] = c.lambda_u;
    j["lambda_t"] = c.lambda_t;
    j["tau"] = c.tau;
    j["learning_rate"] = c.learning_rate;
    j["batch_size_labeled"] = c.batch_size_labeled;
    j["batch_size_unlabeled"] = c.batch_size_unlabeled;
    j["epochs"] = c.epochs;
    j["image_size"] = c.image_size;
    j["seed"] = c.seed;
    j["augmentation"] = c.augmentation;
    j["embedder"] = c.embedder;
    j["embedder_endpoint"] = c.embedder_endpoint;
    j["text_candidate_count"] = c.text_candidate_count;
    j["eval_every"] = c.eval_every;
    return j;
}

inline TrainerConfig config_from_json(const nlohmann::json& j) {
    TrainerConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "mode")
                c.mode = mode_from_name(value.get<std::string>());
            else if (key == "lambda_x")
                c.lambda_x = value.get<double>();
            else if (key == "lambda_u")
                c.lambda_u = value.get<double>();
            else if (key == "lambda_t")
                c.lambda_t = value.get<double>();
            else if (key == "tau")
                c.tau = value.get<double>();
            else if (key == "learning_rate")
                c.learning_rate = value.get<double>();
            else if (key == "batch_size_labeled")
                c.batch_size_labeled = value.get<int>();
            else if (key == "batch_size_unlabeled")
                c.batch_size_unlabeled = value.get<int>();
            else if (key == "epochs")
                c.epochs = value.get<int>();
            else if (key == "image_size")
                c.image_size = value.get<int>();
            else if (key == "seed")
                c.seed = value.get<std::uint64_t>();
            else if (key == "augmentation")
                c.augmentation = value.get<std::string>();
            else if (key == "embedder")
                c.embedder = value.get<std::string>();
            else if (key == "embedder_endpoint")
                c.embedder_endpoint = value.get<std::string>();
            else if (key == "text_candidate_count")
                c.text_candidate_count = value.get<int>();
            else if (key == "eval_every")
                c.eval_every = value.get<int>();
            else
                throw ConfigError("unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline TrainerConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw DataError("config file is not valid JSON: " + path);
    }
    return config_from_json(j);
}

using EmbedFunction = std::function<EmbeddingVector(const Expression&)>;

// ---------------------------------------------------------------------------
// Single optimization steps. Each mode derives its per-step randomness from
// (config.seed, stream, step index), with separate streams for labeled
// image augmentation, unlabeled image augmentation, and text augmentation,
// so the labeled branch consumes identical randomness in every mode.
// ---------------------------------------------------------------------------

struct StepResult {
    double loss_sup = 0.0;
    double loss_unsup = 0.0;
    double loss_total = 0.0;
    std::vector<double> scores;      // s_i per unlabeled sample
    std::vector<double> blend_linf;  // max |blended - weak| per unlabeled sample
    bool applied = true;             // false when a non-finite loss aborted the step
    std::vector<std::string> labeled_ids, unlabeled_ids;
};

namespace detail {

inline void scale_gradient(PredictionGradient& g, double factor) {
    for (double& v : g.fg) v *= factor;
    for (double& v : g.bg) v *= factor;
}

inline double linf_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
    return m;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(uniform_int(
                                  rng, 0, static_cast<int>(i) - 1))]);
    return idx;
}

inline const PositionLexicon& mirror_lexicon() {
    static const PositionLexicon lex = PositionLexicon::defaults();
    return lex;
}

inline const SynonymLexicon& synonym_lexicon() {
    static const SynonymLexicon lex = SynonymLexicon::defaults();
    return lex;
}

// Weak-augments every labeled sample, runs the student, and accumulates
// λ_x-scaled supervised gradients. Returns the mean supervised loss.
template <typename Model>
double supervised_branch(Model& model,
                         const std::vector<const Sample*>& batch,
                         const TrainerConfig& config,
                         const AugmentationProfile& profile, bool adapt_text,
                         Rng& rng, std::vector<double>& grad) {
    if (batch.empty()) return 0.0;
    double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const Sample* s : batch) {
        if (!s->mask)
            throw DataError("labeled sample " + s->id + " has no mask");
        WeakAugmentResult aug =
            weak_augment(s->image, s->mask, profile, rng, config.image_size);
        Expression text =
            adapt_text
                ? weak_text_adapt(s->expression, aug.record, mirror_lexicon())
                : s->expression;
        ForwardCache cache;
        PredictionMap pred = model.forward_cached(aug.image, text, cache);
        loss += inv_b * supervised_loss(pred, *aug.mask);
        if (config.lambda_x != 0.0) {
            PredictionGradient g = supervised_loss_grad(pred, *aug.mask);
            scale_gradient(g, config.lambda_x * inv_b);
            model.backward(cache, g, grad);
        }
    }
    return loss;
}

}  // namespace detail

// Full pipeline step: weak-augment unlabeled images and texts together,
// read off pseudo-labels and their mask-aware scores from a gradient-free
// weak forward, strong-augment with score-blended inputs and filtered text
// candidates, then descend the weighted supervised + self-adaptive loss.
template <typename Model, typename Embed>
StepResult train_step_resmatch(Model& model, AdamW& optimizer,
                               const std::vector<const Sample*>& labeled_batch,
                               const std::vector<const Sample*>& unlabeled_batch,
                               const TrainerConfig& config, std::uint64_t step,
                               const Embed& embed) {
    config.validate();
    AugmentationProfile profile = config.profile();
    Rng rng_lab = make_rng(config.seed, "image-aug-labeled", step);
    Rng rng_unl = make_rng(config.seed, "image-aug-unlabeled", step);
    Rng rng_txt = make_rng(config.seed, "text-aug", step);
    TextAugmentParams text_params;

    StepResult result;
    for (const Sample* s : labeled_batch) result.labeled_ids.push_back(s->id);
    for (const Sample* s : unlabeled_batch)
        result.unlabeled_ids.push_back(s->id);

    std::vector<double> grad(model.parameters().size(), 0.0);
    std::vector<PseudoLabelBundle> bundles;
    std::vector<PredictionMap> strong_preds;
    std::vector<ForwardCache> caches(unlabeled_batch.size());

    for (std::size_t i = 0; i < unlabeled_batch.size(); ++i) {
        const Sample* s = unlabeled_batch[i];
        WeakAugmentResult weak = weak_augment(s->image, std::nullopt, profile,
                                              rng_unl, config.image_size);
        Expression weak_text = weak_text_adapt(s->expression, weak.record,
                                               detail::mirror_lexicon());
        PredictionMap pw = model.forward(weak.image, weak_text);
        PseudoLabelBundle bundle = make_pseudo_labels(pw, config.tau);

        StrongAugmentResult strong = strong_augment(weak.image, profile, rng_unl);
        Image blended = mag_blend(strong.image, weak.image, bundle.score);
        result.blend_linf.push_back(detail::linf_diff(blended, weak.image));

        std::uint64_t candidate_seed = rng_txt();
        std::vector<Expression> candidates = generate_candidates(
            weak_text, config.text_candidate_count, candidate_seed, text_params,
            detail::synonym_lexicon(), default_stopwords());
        TextCandidateSet set =
            semantic_filter(weak_text, candidates, embed, config.lambda_t);
        Expression strong_text = pick_training_text(set, rng_txt);

        strong_preds.push_back(model.forward_cached(blended, strong_text, caches[i]));
        result.scores.push_back(bundle.score);
        bundles.push_back(std::move(bundle));
    }

    result.loss_sup = detail::supervised_branch(model, labeled_batch, config,
                                                profile, /*adapt_text=*/true,
                                                rng_lab, grad);
    result.loss_unsup = unsupervised_loss(strong_preds, bundles);
    if (config.lambda_u != 0.0) {
        std::vector<PredictionGradient> ugrads =
            unsupervised_loss_grad(strong_preds, bundles);
        for (std::size_t i = 0; i < ugrads.size(); ++i) {
            detail::scale_gradient(ugrads[i], config.lambda_u);
            model.backward(caches[i], ugrads[i], grad);
        }
    }
    result.loss_total =
        total_loss(result.loss_sup, result.loss_unsup, config.weights());

    if (!std::isfinite(result.loss_sup) || !std::isfinite(result.loss_unsup) ||
        !std::isfinite(result.loss_total)) {
        result.applied = false;
        return result;
    }
    optimizer.step(model.parameters(), grad);
    return result;
}

// Baseline step: image augmentation only (no text adaptation, no candidate
// generation), strong inputs used as-is (no score blending), and the
// consistency loss averaged over confident pixels.
template <typename Model>
StepResult train_step_fixmatch(Model& model, AdamW& optimizer,
                               const std::vector<const Sample*>& labeled_batch,
                               const std::vector<const Sample*>& unlabeled_batch,
                               const TrainerConfig& config, std::uint64_t step) {
    config.validate();
    AugmentationProfile profile = config.profile();
    Rng rng_lab = make_rng(config.seed, "image-aug-labeled", step);
    Rng rng_unl = make_rng(config.seed, "image-aug-unlabeled", step);

    StepResult result;
    for (const Sample* s : labeled_batch) result.labeled_ids.push_back(s->id);
    for (const Sample* s : unlabeled_batch)
        result.unlabeled_ids.push_back(s->id);

    std::vector<double> grad(model.parameters().size(), 0.0);
    std::vector<PseudoLabelBundle> bundles;
    std::vector<PredictionMap> strong_preds;
    std::vector<ForwardCache> caches(unlabeled_batch.size());

    for (std::size_t i = 0; i < unlabeled_batch.size(); ++i) {
        const Sample* s = unlabeled_batch[i];
        WeakAugmentResult weak = weak_augment(s->image, std::nullopt, profile,
                                              rng_unl, config.image_size);
        PredictionMap pw = model.forward(weak.image, s->expression);
        PseudoLabelBundle bundle = make_pseudo_labels(pw, config.tau);

        StrongAugmentResult strong = strong_augment(weak.image, profile, rng_unl);
        strong_preds.push_back(
            model.forward_cached(strong.image, s->expression, caches[i]));
        result.scores.push_back(bundle.score);
        bundles.push_back(std::move(bundle));
    }

    result.loss_sup = detail::supervised_branch(model, labeled_batch, config,
                                                profile, /*adapt_text=*/false,
                                                rng_lab, grad);
    result.loss_unsup = fixmatch_unsupervised_loss(strong_preds, bundles);
    if (config.lambda_u != 0.0) {
        std::vector<PredictionGradient> ugrads =
            fixmatch_unsupervised_loss_grad(strong_preds, bundles);
        for (std::size_t i = 0; i < ugrads.size(); ++i) {
            detail::scale_gradient(ugrads[i], config.lambda_u);
            model.backward(caches[i], ugrads[i], grad);
        }
    }
    result.loss_total =
        total_loss(result.loss_sup, result.loss_unsup, config.weights());

    if (!std::isfinite(result.loss_sup) || !std::isfinite(result.loss_unsup) ||
        !std::isfinite(result.loss_total)) {
        result.applied = false;
        return result;
    }
    optimizer.step(model.parameters(), grad);
    return result;
}

// Labeled-only step. The labeled branch is byte-identical to the one inside
// the full step, so runs with no unlabeled data (or zero unsupervised
// weight) reproduce this mode exactly.
template <typename Model>
StepResult train_step_supervised(Model& model, AdamW& optimizer,
                                 const std::vector<const Sample*>& labeled_batch,
                                 const TrainerConfig& config,
                                 std::uint64_t step) {
    config.validate();
    AugmentationProfile profile = config.profile();
    Rng rng_lab = make_rng(config.seed, "image-aug-labeled", step);

    StepResult result;
    for (const Sample* s : labeled_batch) result.labeled_ids.push_back(s->id);

    std::vector<double> grad(model.parameters().size(), 0.0);
    result.loss_sup = detail::supervised_branch(model, labeled_batch, config,
                                                profile, /*adapt_text=*/true,
                                                rng_lab, grad);
    result.loss_total = total_loss(result.loss_sup, 0.0, config.weights());

    if (!std::isfinite(result.loss_total)) {
        result.applied = false;
        return result;
    }
    optimizer.step(model.parameters(), grad);
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation: resize-only preprocessing, cumulative-intersection over
// cumulative-union scoring against the untouched ground-truth masks.
// ---------------------------------------------------------------------------

struct EvalResult {
    double oiou = 0.0;
    std::vector<double> per_sample_iou;
    std::size_t count = 0;
};

template <typename Model>
EvalResult evaluate(Model& model, const std::vector<Sample>& samples,
                    int image_size) {
    if (samples.empty())
        throw ConfigError("evaluation split is empty");
    ModelMode saved = model.mode();
    model.set_mode(ModelMode::eval);
    std::vector<Mask> predictions, ground_truths;
    EvalResult result;
    for (const Sample& s : samples) {
        if (!s.mask) {
            model.set_mode(saved);
            throw ConfigError("evaluation sample " + s.id + " has no mask");
        }
        Image input = resize_bilinear(s.image, image_size, image_size);
        Mask pred = binarize(model.forward(input, s.expression));
        if (pred.height != s.mask->height || pred.width != s.mask->width)
            pred = resize_nearest(pred, s.mask->height, s.mask->width);
        std::int64_t inter = 0, uni = 0;
        for (std::size_t k = 0; k < pred.values.size(); ++k) {
            inter += pred.values[k] & s.mask->values[k];
            uni += pred.values[k] | s.mask->values[k];
        }
        result.per_sample_iou.push_back(
            uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
        predictions.push_back(std::move(pred));
        ground_truths.push_back(*s.mask);
    }
    result.oiou = overall_iou(predictions, ground_truths);
    result.count = samples.size();
    model.set_mode(saved);
    return result;
}

// ---------------------------------------------------------------------------
// Experiment runner: epoch loop with per-step logging, periodic evaluation,
// and end-of-epoch checkpointing (plus a best-score snapshot).
// ---------------------------------------------------------------------------

struct StepRecord {
    int step = 0;
    int epoch = 0;
    double loss_sup = 0.0, loss_unsup = 0.0, loss_total = 0.0;
    double mean_s = 0.0;
    bool flagged = false;
};

struct EvalPoint {
    int step = 0;
    int epoch = 0;
    double oiou = 0.0;
};

struct ExperimentResult {
    double final_oiou = 0.0;
    double best_oiou = 0.0;
    std::vector<StepRecord> steps;
    std::vector<EvalPoint> evals;
    std::string results_path, last_checkpoint, best_checkpoint;
};

class Trainer {
public:
    Trainer(TrainerConfig config, const DatasetManifest& manifest,
            const SemiSplit& split, EmbedFunction embed = {})
        : config_(std::move(config)), embed_(std::move(embed)) {
        config_.validate();
        validate_split(manifest, split);
        if (!embed_)
            embed_ = [](const Expression& e) { return embed_hash(e); };

        // Vocabulary covers every train expression: referring text is an
        // input, available for unlabeled samples too, so all modes share
        // the same model shape and initialization.
        std::vector<Expression> corpus;
        for (const ManifestRecord* r : manifest.split_records("train"))
            corpus.push_back(Expression::from_raw(r->expression));
        vocab_ = Vocabulary::build(corpus);

        for (const std::string& id : split.labeled_ids) {
            const ManifestRecord* r = manifest.find(id);
            if (!r) throw DataError("split id not in manifest: " + id);
            labeled_.push_back(manifest.load_sample(*r));
        }
        if (labeled_.empty())
            throw ConfigError("training requires at least one labeled sample");
        if (config_.mode != TrainMode::supervised) {
            for (const std::string& id : split.unlabeled_ids) {
                const ManifestRecord* r = manifest.find(id);
                if (!r) throw DataError("split id not in manifest: " + id);
                Sample s = manifest.load_sample(*r);
                s.mask.reset();  // unlabeled by role, whatever the manifest holds
                unlabeled_.push_back(std::move(s));
            }
        }
        val_ = manifest.load_samples("val");

        model_ = std::make_unique<ToyResModel>(ModelConfig{}, vocab_,
                                               config_.seed);
        optimizer_.lr = config_.learning_rate;
    }

    int steps_per_epoch() const {
        bool uses_unlabeled =
            config_.mode != TrainMode::supervised && !unlabeled_.empty();
        std::size_t n = uses_unlabeled ? unlabeled_.size() : labeled_.size();
        int b = uses_unlabeled ? config_.batch_size_unlabeled
                               : config_.batch_size_labeled;
        return static_cast<int>((n + static_cast<std::size_t>(b) - 1) /
                                static_cast<std::size_t>(b));
    }

    ExperimentResult run(const std::string& out_dir, bool resume = false) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        ExperimentResult result;
        result.results_path = (fs::path(out_dir) / "results.jsonl").string();
        result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
        result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();

        int start_epoch = 0;
        bool resuming = resume && fs::exists(result.last_checkpoint);
        if (resuming) {
            Checkpoint ckpt = Checkpoint::load(result.last_checkpoint);
            if (ckpt.config_hash != config_.trajectory_hash())
                throw ConfigError(
                    "checkpoint belongs to a different run configuration");
            Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
            if (!(vocab == vocab_))
                throw ConfigError("checkpoint vocabulary does not match the dataset");
            model_ = std::make_unique<ToyResModel>(ckpt.model_config, vocab,
                                                   config_.seed);
            if (ckpt.params.size() != model_->parameter_count())
                throw DataError("checkpoint parameter count mismatch");
            model_->parameters() = ckpt.params;
            optimizer_.m = ckpt.adam_m;
            optimizer_.v = ckpt.adam_v;
            optimizer_.t = ckpt.adam_t;
            start_epoch = static_cast<int>(ckpt.next_epoch);
        }

        std::ofstream out(result.results_path,
                          resuming && start_epoch > 0 ? std::ios::app
                                                      : std::ios::trunc);
        if (!out)
            throw DataError("cannot write results: " + result.results_path);
        if (!resuming || start_epoch == 0) {
            nlohmann::json header;
            header["config"] = config_to_json(config_);
            out << header.dump() << "\n";
        }

        const int spe = steps_per_epoch();
        bool best_valid = false;
        auto run_eval = [&](int epoch, int step) {
            EvalResult ev = evaluate(*model_, val_, config_.image_size);
            nlohmann::json j;
            j["step"] = step;
            j["epoch"] = epoch;
            j["oIoU"] = ev.oiou;
            out << j.dump() << "\n";
            out.flush();
            result.evals.push_back({step, epoch, ev.oiou});
            result.final_oiou = ev.oiou;
            if (!best_valid || ev.oiou > result.best_oiou) {
                result.best_oiou = ev.oiou;
                best_valid = true;
                save_checkpoint(result.best_checkpoint, /*next_epoch=*/epoch + 1);
            }
        };

        if (config_.epochs == 0) {
            run_eval(0, 0);
            return result;
        }

        for (int epoch = start_epoch; epoch < config_.epochs; ++epoch) {
            Rng data_rng = make_rng(config_.seed, "data",
                                    static_cast<std::uint64_t>(epoch));
            auto order_l = detail::shuffled_indices(labeled_.size(), data_rng);
            auto order_u = detail::shuffled_indices(unlabeled_.size(), data_rng);

            for (int s = 0; s < spe; ++s) {
                std::uint64_t gs = static_cast<std::uint64_t>(epoch) *
                                       static_cast<std::uint64_t>(spe) +
                                   static_cast<std::uint64_t>(s);
                std::vector<const Sample*> lb, ub;
                for (int k = 0; k < config_.batch_size_labeled; ++k)
                    lb.push_back(&labeled_[order_l[(static_cast<std::size_t>(s) *
                                                        config_.batch_size_labeled +
                                                    k) %
                                                   labeled_.size()]]);
                if (config_.mode != TrainMode::supervised &&
                    !unlabeled_.empty())
                    for (int k = 0; k < config_.batch_size_unlabeled; ++k)
                        ub.push_back(
                            &unlabeled_[order_u[(static_cast<std::size_t>(s) *
                                                     config_.batch_size_unlabeled +
                                                 k) %
                                                unlabeled_.size()]]);

                StepResult r;
                switch (config_.mode) {
                    case TrainMode::supervised:
                        r = train_step_supervised(*model_, optimizer_, lb,
                                                  config_, gs);
                        break;
                    case TrainMode::fixmatch:
                        r = train_step_fixmatch(*model_, optimizer_, lb, ub,
                                                config_, gs);
                        break;
                    case TrainMode::resmatch:
                        r = train_step_resmatch(*model_, optimizer_, lb, ub,
                                                config_, gs, embed_);
                        break;
                }

                double mean_s = 0.0;
                for (double v : r.scores) mean_s += v;
                if (!r.scores.empty())
                    mean_s /= static_cast<double>(r.scores.size());

                nlohmann::json j;
                j["step"] = gs;
                j["epoch"] = epoch;
                j["L_sup"] = r.loss_sup;
                j["L_unsup"] = r.loss_unsup;
                j["L_total"] = r.loss_total;
                j["mean_s"] = mean_s;
                if (!r.applied) {
                    j["flagged"] = true;
                    j["labeled_ids"] = r.labeled_ids;
                    j["unlabeled_ids"] = r.unlabeled_ids;
                }
                out << j.dump() << "\n";
                result.steps.push_back({static_cast<int>(gs), epoch,
                                        r.loss_sup, r.loss_unsup, r.loss_total,
                                        mean_s, !r.applied});
            }

            bool last_epoch = epoch == config_.epochs - 1;
            if (last_epoch ||
                (config_.eval_every > 0 &&
                 (epoch + 1) % config_.eval_every == 0))
                run_eval(epoch, (epoch + 1) * spe - 1);
            save_checkpoint(result.last_checkpoint, epoch + 1);
        }
        return result;
    }

    ToyResModel& model() { return *model_; }
    AdamW& optimizer() { return optimizer_; }
    const TrainerConfig& config() const { return config_; }
    const std::vector<Sample>& labeled_samples() const { return labeled_; }
    const std::vector<Sample>& unlabeled_samples() const { return unlabeled_; }
    const std::vector<Sample>& val_samples() const { return val_; }

private:
    void save_checkpoint(const std::string& path, int next_epoch) const {
        Checkpoint ckpt;
        ckpt.config_hash = config_.trajectory_hash();
        ckpt.model_config = model_->config();
        ckpt.vocab_tokens = model_->vocabulary().tokens();
        ckpt.params = model_->parameters();
        ckpt.adam_m = optimizer_.m;
        ckpt.adam_v = optimizer_.v;
        ckpt.adam_t = optimizer_.t;
        ckpt.next_epoch = static_cast<std::uint32_t>(next_epoch);
        ckpt.save(path);
    }

    TrainerConfig config_;
    EmbedFunction embed_;
    Vocabulary vocab_;
    std::vector<Sample> labeled_, unlabeled_, val_;
    std::unique_ptr<ToyResModel> model_;
    AdamW optimizer_;
};

// ---------------------------------------------------------------------------
// Ratio/seed sweep: one full experiment per (ratio, seed) cell, each with
// its own split, plus a tab-separated summary table.
// ---------------------------------------------------------------------------

struct SweepCell {
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::string mode;
    double oiou = 0.0;
};

inline std::vector<SweepCell> run_sweep(const TrainerConfig& base,
                                        const DatasetManifest& manifest,
                                        const std::vector<double>& ratios,
                                        const std::vector<std::uint64_t>& seeds,
                                        const std::string& out_dir,
                                        EmbedFunction embed = {}) {
    if (ratios.empty()) throw ConfigError("sweep needs at least one ratio");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<SweepCell> cells;
    for (double ratio : ratios) {
        for (std::uint64_t seed : seeds) {
            TrainerConfig cfg = base;
            cfg.seed = seed;
            SemiSplit split = make_split(manifest, ratio, seed);
            Trainer trainer(cfg, manifest, split, embed);
            char sub[96];
            std::snprintf(sub, sizeof sub, "ratio-%g-seed-%llu", ratio,
                          static_cast<unsigned long long>(seed));
            ExperimentResult res =
                trainer.run((fs::path(out_dir) / sub).string());
            cells.push_back({ratio, seed, std::string(mode_name(cfg.mode)),
                             res.final_oiou});
        }
    }
    std::string table_path = (fs::path(out_dir) / "summary.tsv").string();
    std::ofstream table(table_path, std::ios::trunc);
    if (!table) throw DataError("cannot write sweep summary: " + table_path);
    table << "ratio\tseed\tmode\toIoU\n";
    char row[160];
    for (const SweepCell& c : cells) {
        std::snprintf(row, sizeof row, "%g\t%llu\t%s\t%.6f\n", c.ratio,
                      static_cast<unsigned long long>(c.seed), c.mode.c_str(),
                      c.oiou);
        table << row;
    }
    return cells;
}

// Results-file reader shared by tests and tooling: first line is the config
// echo, every further line one step or evaluation record.
struct ResultsFile {
    nlohmann::json config;
    std::vector<nlohmann::json> records;
};

inline ResultsFile read_results_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file: " + path);
    ResultsFile rf;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw DataError("results file holds a non-JSON line: " + path);
        }
        if (first) {
            if (!j.contains("config"))
                throw DataError("results file lacks the config header: " + path);
            rf.config = j["config"];
            first = false;
        } else {
            rf.records.push_back(std::move(j));
        }
    }
    if (first) throw DataError("results file is empty: " + path);
    return rf;
}

}  // namespace resmatch
