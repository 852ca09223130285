// Command-line front end: training, evaluation, synthetic data generation,
// split management, augmentation preview, and ratio/seed sweeps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
// Failures print a single machine-parsable line `ERROR:<code>:<message>`.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "resmatch/data.hpp"
#include "resmatch/remote_embedder.hpp"
#include "resmatch/trainer.hpp"

namespace fs = std::filesystem;
using namespace resmatch;

namespace {

std::string default_out() {
    const char* env = std::getenv("RESMATCH_OUT");
    return env && *env ? env : "out";
}

// Flag values mirrored from TrainerConfig; only flags the user actually
// passed override the config file (or the defaults).
struct ConfigFlags {
    std::string mode, augmentation, embedder, embedder_endpoint;
    double lambda_x = 0, lambda_u = 0, lambda_t = 0, tau = 0;
    double learning_rate = 0;
    int batch_labeled = 0, batch_unlabeled = 0;
    int epochs = 0, image_size = 0, candidates = 0, eval_every = 0;
    std::uint64_t seed = 0;

    CLI::Option *o_mode = nullptr, *o_aug = nullptr, *o_embedder = nullptr,
                *o_endpoint = nullptr, *o_lx = nullptr, *o_lu = nullptr,
                *o_lt = nullptr, *o_tau = nullptr, *o_lr = nullptr,
                *o_bl = nullptr, *o_bu = nullptr, *o_epochs = nullptr,
                *o_size = nullptr, *o_cand = nullptr, *o_eval = nullptr,
                *o_seed = nullptr;

    void attach(CLI::App* cmd) {
        o_mode = cmd->add_option("--mode", mode,
                                 "training mode: supervised | fixmatch | resmatch "
                                 "(default resmatch)");
        o_lx = cmd->add_option("--lambda-x", lambda_x,
                               "supervised loss weight (default 5)");
        o_lu = cmd->add_option("--lambda-u", lambda_u,
                               "unsupervised loss weight (default 2)");
        o_lt = cmd->add_option("--lambda-t", lambda_t,
                               "text similarity threshold (default 0.8)");
        o_tau = cmd->add_option("--tau", tau,
                                "pixel confidence threshold (default 0.7)");
        o_lr = cmd->add_option("--learning-rate", learning_rate,
                               "optimizer learning rate (default 1e-5)");
        o_bl = cmd->add_option("--batch-labeled", batch_labeled,
                               "labeled batch size (default 2)");
        o_bu = cmd->add_option("--batch-unlabeled", batch_unlabeled,
                               "unlabeled batch size (default 2)");
        o_epochs = cmd->add_option("--epochs", epochs,
                                   "training epochs (default 40)");
        o_size = cmd->add_option("--image-size", image_size,
                                 "training resolution (default 480)");
        o_seed = cmd->add_option("--seed", seed, "root random seed (default 1)");
        o_aug = cmd->add_option("--augmentation", augmentation,
                                "augmentation profile: auto | resmatch | "
                                "fixmatch_baseline (default auto)");
        o_embedder = cmd->add_option("--embedder", embedder,
                                     "text embedder: hash | remote (default hash)");
        o_endpoint = cmd->add_option("--embedder-endpoint", embedder_endpoint,
                                     "HTTP endpoint for the remote embedder");
        o_cand = cmd->add_option("--candidates", candidates,
                                 "strong text candidates per sample (default 10)");
        o_eval = cmd->add_option("--eval-every", eval_every,
                                 "epochs between evaluations, 0 = final only "
                                 "(default 1)");
    }

    void apply(TrainerConfig& cfg) const {
        if (o_mode->count()) cfg.mode = mode_from_name(mode);
        if (o_lx->count()) cfg.lambda_x = lambda_x;
        if (o_lu->count()) cfg.lambda_u = lambda_u;
        if (o_lt->count()) cfg.lambda_t = lambda_t;
        if (o_tau->count()) cfg.tau = tau;
        if (o_lr->count()) cfg.learning_rate = learning_rate;
        if (o_bl->count()) cfg.batch_size_labeled = batch_labeled;
        if (o_bu->count()) cfg.batch_size_unlabeled = batch_unlabeled;
        if (o_epochs->count()) cfg.epochs = epochs;
        if (o_size->count()) cfg.image_size = image_size;
        if (o_seed->count()) cfg.seed = seed;
        if (o_aug->count()) cfg.augmentation = augmentation;
        if (o_embedder->count()) cfg.embedder = embedder;
        if (o_endpoint->count()) cfg.embedder_endpoint = embedder_endpoint;
        if (o_cand->count()) cfg.text_candidate_count = candidates;
        if (o_eval->count()) cfg.eval_every = eval_every;
    }
};

// Resolves the training dataset: an existing manifest directory or a
// freshly generated synthetic one under <out>/data.
DatasetManifest resolve_dataset(const std::string& dataset, int synthetic,
                                const TrainerConfig& cfg,
                                const std::string& out) {
    if (!dataset.empty() && synthetic > 0)
        throw ConfigError("pass either --dataset or --synthetic, not both");
    if (dataset.empty() && synthetic <= 0)
        throw ConfigError("a dataset is required: pass --dataset DIR or --synthetic N");
    if (!dataset.empty()) return load_manifest(dataset);
    return make_synthetic(synthetic, cfg.image_size, cfg.seed,
                          (fs::path(out) / "data").string());
}

EmbedFunction resolve_embedder(const TrainerConfig& cfg) {
    if (cfg.embedder == "remote") {
        auto remote = std::make_shared<RemoteEmbedder>(cfg.embedder_endpoint);
        return [remote](const Expression& e) { return remote->embed(e); };
    }
    return {};  // trainer falls back to the hash embedder
}

int cmd_train(const TrainerConfig& cfg, const DatasetManifest& manifest,
              const std::string& split_path, double ratio,
              const std::string& out, bool resume) {
    SemiSplit split;
    if (!split_path.empty()) {
        split = load_split(split_path);
        validate_split(manifest, split);
    } else {
        split = make_split(manifest, ratio, cfg.seed);
    }
    Trainer trainer(cfg, manifest, split, resolve_embedder(cfg));
    ExperimentResult res = trainer.run(out, resume);
    std::printf("mode=%s labeled=%zu unlabeled=%zu steps=%zu\n",
                std::string(mode_name(cfg.mode)).c_str(),
                split.labeled_ids.size(), split.unlabeled_ids.size(),
                res.steps.size());
    std::printf("final oIoU=%.6f best oIoU=%.6f\n", res.final_oiou,
                res.best_oiou);
    std::printf("results: %s\n", res.results_path.c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset,
             const std::string& split_name, int image_size) {
    Checkpoint ckpt = Checkpoint::load(checkpoint);
    ToyResModel model(ckpt.model_config,
                      Vocabulary::from_tokens(ckpt.vocab_tokens), 0);
    if (ckpt.params.size() != model.parameter_count())
        throw DataError("checkpoint parameter count mismatch");
    model.parameters() = ckpt.params;
    DatasetManifest manifest = load_manifest(dataset);
    std::vector<Sample> samples = manifest.load_samples(split_name);
    EvalResult r = evaluate(model, samples, image_size);
    std::printf("oIoU=%.6f on %zu samples (%s)\n", r.oiou, r.count,
                split_name.c_str());
    return 0;
}

int cmd_gen_data(int count, int size, std::uint64_t seed,
                 const std::string& out) {
    DatasetManifest m = make_synthetic(count, size, seed, out);
    std::printf("wrote %zu records (%zu train) to %s\n", m.records.size(),
                m.split_records("train").size(), m.root.c_str());
    return 0;
}

int cmd_make_split(const std::string& dataset, double ratio,
                   std::uint64_t seed, std::string out_path) {
    DatasetManifest manifest = load_manifest(dataset);
    SemiSplit split = make_split(manifest, ratio, seed);
    validate_split(manifest, split);
    if (out_path.empty())
        out_path = (fs::path(dataset) / "split.json").string();
    save_split(split, out_path);
    std::printf("split: %zu labeled / %zu unlabeled -> %s\n",
                split.labeled_ids.size(), split.unlabeled_ids.size(),
                out_path.c_str());
    return 0;
}

int cmd_preview_aug(const std::string& dataset, int n, std::uint64_t seed,
                    int image_size, double lambda_t, int candidate_count,
                    const std::string& out) {
    DatasetManifest manifest = load_manifest(dataset);
    auto train = manifest.split_records("train");
    if (train.empty()) throw DataError("dataset has no train records");
    n = std::min<int>(n, static_cast<int>(train.size()));

    fs::create_directories(out);
    std::ofstream text((fs::path(out) / "preview.txt").string(),
                       std::ios::trunc);
    if (!text) throw DataError("cannot write preview text file");

    AugmentationProfile profile = AugmentationProfile::resmatch();
    const PositionLexicon mirrors = PositionLexicon::defaults();
    const SynonymLexicon synonyms = SynonymLexicon::defaults();
    TextAugmentParams params;
    char buf[128];

    for (int i = 0; i < n; ++i) {
        Sample s = manifest.load_sample(*train[static_cast<std::size_t>(i)]);
        Rng rng_img = make_rng(seed, "image-aug-unlabeled",
                               static_cast<std::uint64_t>(i));
        Rng rng_txt = make_rng(seed, "text-aug", static_cast<std::uint64_t>(i));

        WeakAugmentResult weak =
            weak_augment(s.image, std::nullopt, profile, rng_img, image_size);
        Expression weak_text =
            weak_text_adapt(s.expression, weak.record, mirrors);
        StrongAugmentResult strong = strong_augment(weak.image, profile, rng_img);
        // preview shows the full-strength strong input (blend weight 1)
        Image blended = mag_blend(strong.image, weak.image, 1.0);

        std::snprintf(buf, sizeof buf, "sample-%03d", i);
        std::string stem = (fs::path(out) / buf).string();
        write_ppm(s.image, stem + "-original.ppm");
        write_ppm(weak.image, stem + "-weak.ppm");
        write_ppm(blended, stem + "-strong.ppm");

        std::uint64_t candidate_seed = rng_txt();
        std::vector<Expression> cands =
            generate_candidates(weak_text, candidate_count, candidate_seed,
                                params, synonyms, default_stopwords());
        TextCandidateSet set = semantic_filter(
            weak_text, cands,
            [](const Expression& e) { return embed_hash(e); }, lambda_t);

        text << "sample " << s.id << "\n";
        text << "  original: " << s.expression.raw << "\n";
        text << "  weak: " << weak_text.raw
             << (weak.record.horizontal_flipped ? " [flipped]" : "") << "\n";
        for (const ScoredCandidate& c : set.candidates) {
            bool kept = c.theta >= lambda_t;
            if (!kept) continue;
            std::snprintf(buf, sizeof buf, "  retained: theta=%.6f ", c.theta);
            text << buf << c.text.raw << "\n";
        }
        text << "\n";
    }
    std::printf("wrote %d preview triplets to %s\n", n, out.c_str());
    return 0;
}

int cmd_sweep(const TrainerConfig& cfg, const DatasetManifest& manifest,
              const std::vector<double>& ratios,
              const std::vector<std::uint64_t>& seeds,
              const std::string& out) {
    std::vector<SweepCell> cells =
        run_sweep(cfg, manifest, ratios, seeds, out, resolve_embedder(cfg));
    for (const SweepCell& c : cells)
        std::printf("ratio=%g seed=%llu mode=%s oIoU=%.6f\n", c.ratio,
                    static_cast<unsigned long long>(c.seed), c.mode.c_str(),
                    c.oiou);
    std::printf("summary: %s\n",
                (fs::path(out) / "summary.tsv").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised referring expression segmentation"};
    app.require_subcommand(1);

    std::string config_path, dataset, split_path, out = default_out();
    int synthetic = 0;
    double ratio = 0.1;
    bool resume = false;

    // train
    CLI::App* train = app.add_subcommand("train", "run a training experiment");
    ConfigFlags train_flags;
    train->add_option("--config", config_path,
                      "JSON config file (flat keys, defaults applied)");
    train->add_option("--dataset", dataset, "manifest directory");
    train->add_option("--synthetic", synthetic,
                      "generate N synthetic train samples instead of --dataset");
    train->add_option("--split", split_path,
                      "labeled/unlabeled split file (default: derived from "
                      "--ratio and --seed)");
    train->add_option("--ratio", ratio, "labeled fraction (default 0.1)");
    train->add_option("--out", out,
                      "output directory (default $RESMATCH_OUT or ./out)");
    train->add_flag("--resume", resume,
                    "continue from <out>/last.ckpt if present");
    train_flags.attach(train);

    // eval
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "score a checkpoint on a dataset split");
    std::string eval_checkpoint, eval_dataset, eval_split = "val";
    int eval_size = 480;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
        ->required();
    eval_cmd->add_option("--dataset", eval_dataset, "manifest directory")
        ->required();
    eval_cmd->add_option("--split-name", eval_split,
                         "split to score: val | testA | testB (default val)");
    eval_cmd->add_option("--image-size", eval_size,
                         "evaluation resolution (default 480)");

    // gen-data
    CLI::App* gen = app.add_subcommand("gen-data",
                                       "write a synthetic shapes dataset");
    int gen_count = 64, gen_size = 64;
    std::uint64_t gen_seed = 1;
    std::string gen_out = default_out();
    gen->add_option("--count", gen_count,
                    "number of train samples (default 64)");
    gen->add_option("--size", gen_size, "image side length (default 64)");
    gen->add_option("--seed", gen_seed, "generation seed (default 1)");
    gen->add_option("--out", gen_out,
                    "output directory (default $RESMATCH_OUT or ./out)");

    // make-split
    CLI::App* mksplit =
        app.add_subcommand("make-split", "partition a train split");
    std::string split_dataset, split_out;
    double split_ratio = 0.1;
    std::uint64_t split_seed = 1;
    mksplit->add_option("--dataset", split_dataset, "manifest directory")
        ->required();
    mksplit->add_option("--ratio", split_ratio,
                        "labeled fraction (default 0.1)");
    mksplit->add_option("--seed", split_seed, "shuffle seed (default 1)");
    mksplit->add_option("--out", split_out,
                        "split file path (default <dataset>/split.json)");

    // preview-aug
    CLI::App* preview = app.add_subcommand(
        "preview-aug", "write weak/strong augmentation previews");
    std::string prev_dataset, prev_out = default_out();
    int prev_n = 4, prev_size = 64, prev_candidates = 10;
    std::uint64_t prev_seed = 1;
    double prev_lambda_t = 0.8;
    preview->add_option("--dataset", prev_dataset, "manifest directory")
        ->required();
    preview->add_option("--n", prev_n, "samples to preview (default 4)");
    preview->add_option("--seed", prev_seed, "augmentation seed (default 1)");
    preview->add_option("--image-size", prev_size,
                        "preview resolution (default 64)");
    preview->add_option("--lambda-t", prev_lambda_t,
                        "text similarity threshold (default 0.8)");
    preview->add_option("--candidates", prev_candidates,
                        "strong text candidates per sample (default 10)");
    preview->add_option("--out", prev_out,
                        "output directory (default $RESMATCH_OUT or ./out)");

    // sweep
    CLI::App* sweep = app.add_subcommand(
        "sweep", "cross-product of labeled ratios and seeds");
    ConfigFlags sweep_flags;
    std::string sweep_config, sweep_dataset, sweep_out = default_out();
    int sweep_synthetic = 0;
    std::vector<double> sweep_ratios;
    std::vector<std::uint64_t> sweep_seeds;
    sweep->add_option("--config", sweep_config, "JSON config file");
    sweep->add_option("--dataset", sweep_dataset, "manifest directory");
    sweep->add_option("--synthetic", sweep_synthetic,
                      "generate N synthetic train samples instead of --dataset");
    sweep->add_option("--ratios", sweep_ratios, "labeled ratios to sweep")
        ->required()
        ->delimiter(',');
    sweep->add_option("--seeds", sweep_seeds, "seeds to sweep")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", sweep_out,
                      "output directory (default $RESMATCH_OUT or ./out)");
    sweep_flags.attach(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR:2:" << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(train)) {
            TrainerConfig cfg;
            if (!config_path.empty()) cfg = load_config_file(config_path);
            train_flags.apply(cfg);
            cfg.validate();
            DatasetManifest manifest =
                resolve_dataset(dataset, synthetic, cfg, out);
            return cmd_train(cfg, manifest, split_path, ratio, out, resume);
        }
        if (app.got_subcommand(eval_cmd))
            return cmd_eval(eval_checkpoint, eval_dataset, eval_split,
                            eval_size);
        if (app.got_subcommand(gen))
            return cmd_gen_data(gen_count, gen_size, gen_seed, gen_out);
        if (app.got_subcommand(mksplit))
            return cmd_make_split(split_dataset, split_ratio, split_seed,
                                  split_out);
        if (app.got_subcommand(preview))
            return cmd_preview_aug(prev_dataset, prev_n, prev_seed, prev_size,
                                   prev_lambda_t, prev_candidates, prev_out);
        if (app.got_subcommand(sweep)) {
            TrainerConfig cfg;
            if (!sweep_config.empty()) cfg = load_config_file(sweep_config);
            sweep_flags.apply(cfg);
            cfg.validate();
            DatasetManifest manifest =
                resolve_dataset(sweep_dataset, sweep_synthetic, cfg, sweep_out);
            return cmd_sweep(cfg, manifest, sweep_ratios, sweep_seeds,
                             sweep_out);
        }
    } catch (const ConfigError& e) {
        std::cerr << "ERROR:2:" << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ERROR:1:" << e.what() << "\n";
        return 1;
    }
    std::cerr << "ERROR:2:no command selected\n";
    return 2;
}
