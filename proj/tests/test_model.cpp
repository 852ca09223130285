#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "resmatch/model.hpp"

using namespace resmatch;

namespace {

Vocabulary toy_vocab() {
    return Vocabulary::build({Expression::from_raw("left blob"),
                              Expression::from_raw("right blob"),
                              Expression::from_raw("red circle")});
}

Image random_image(Rng& rng, int h, int w) {
    Image im = Image::filled(h, w, 0.0);
    for (double& v : im.pixels) v = uniform_real(rng, 0.0, 1.0);
    return im;
}

Mask left_half_mask(int h, int w) {
    Mask m = Mask::zeros(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) m.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("vocabulary is a sorted pure function of the corpus", "[model]") {
    Vocabulary v = toy_vocab();
    REQUIRE(v.tokens()[0] == "<unk>");
    // lexicographic: blob, circle, left, red, right
    REQUIRE(v.tokens() ==
            std::vector<std::string>({"<unk>", "blob", "circle", "left", "red",
                                      "right"}));
    REQUIRE(v.lookup("blob") == 1);
    REQUIRE(v.lookup("never seen") == 0);

    Vocabulary rebuilt = Vocabulary::from_tokens(v.tokens());
    REQUIRE(rebuilt == v);
    REQUIRE(rebuilt.lookup("right") == v.lookup("right"));
    REQUIRE_THROWS_AS(Vocabulary::from_tokens({"blob"}), DataError);
}

TEST_CASE("forward obeys the interface contract", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 11);
    Expression expr = Expression::from_raw("left blob");
    for (auto [h, w] : {std::pair{16, 16}, {17, 23}, {32, 24}}) {
        Rng rng(static_cast<std::uint64_t>(h * 100 + w));
        Image im = random_image(rng, h, w);
        PredictionMap out = model.forward(im, expr);
        REQUIRE(out.height == h);
        REQUIRE(out.width == w);
        REQUIRE_NOTHROW(out.validate(1e-6));
    }
}

TEST_CASE("eval forward is deterministic and text-dependent", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 3);
    model.set_mode(ModelMode::eval);
    Rng rng(9);
    Image im = random_image(rng, 16, 16);

    auto a = model.forward(im, Expression::from_raw("left blob"));
    auto b = model.forward(im, Expression::from_raw("left blob"));
    REQUIRE(a.fg == b.fg);
    REQUIRE(a.bg == b.bg);

    auto other = model.forward(im, Expression::from_raw("red circle"));
    REQUIRE(a.fg != other.fg);

    // out-of-vocabulary tokens all collapse to the reserved index
    auto unk1 = model.forward(im, Expression::from_raw("zzz qqq"));
    auto unk2 = model.forward(im, Expression::from_raw("foo bar"));
    REQUIRE(unk1.fg == unk2.fg);
}

TEST_CASE("same init seed reproduces parameters", "[model]") {
    ToyResModel a(ModelConfig{}, toy_vocab(), 42);
    ToyResModel b(ModelConfig{}, toy_vocab(), 42);
    ToyResModel c(ModelConfig{}, toy_vocab(), 43);
    REQUIRE(a.parameters() == b.parameters());
    REQUIRE(a.parameters() != c.parameters());
}

TEST_CASE("parameter cap is enforced", "[model]") {
    ModelConfig cfg;
    cfg.parameter_cap = 1000;
    REQUIRE_THROWS_AS(ToyResModel(cfg, toy_vocab(), 1), ConfigError);
    ModelConfig bad;
    bad.text_dim = 7;  // must match the deepest encoder width
    REQUIRE_THROWS_AS(ToyResModel(bad, toy_vocab(), 1), ConfigError);
}

TEST_CASE("parameter gradients match finite differences", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 17);
    Rng rng(23);
    Image im = random_image(rng, 16, 16);
    Expression expr = Expression::from_raw("left blob");
    Mask gt = left_half_mask(16, 16);

    ForwardCache cache;
    PredictionMap pred = model.forward_cached(im, expr, cache);
    std::vector<double> grad(model.parameter_count(), 0.0);
    model.backward(cache, supervised_loss_grad(pred, gt), grad);

    auto loss_at = [&]() {
        return supervised_loss(model.forward(im, expr), gt);
    };
    const double h = 1e-5;
    int checked = 0;
    Rng pick(5);
    while (checked < 20) {
        std::size_t idx = static_cast<std::size_t>(uniform_int(
            pick, 0, static_cast<int>(model.parameter_count()) - 1));
        double saved = model.parameters()[idx];
        model.parameters()[idx] = saved + h;
        double up = loss_at();
        model.parameters()[idx] = saved - h;
        double down = loss_at();
        model.parameters()[idx] = saved;
        double fd = (up - down) / (2.0 * h);
        double an = grad[idx];
        if (std::abs(an) > 1e-7)
            REQUIRE(std::abs(fd - an) / std::abs(an) < 1e-3);
        else
            REQUIRE(std::abs(fd) < 1e-6);
        ++checked;
    }
}

TEST_CASE("weak-branch forwards leave gradients untouched", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 29);
    Rng rng(31);
    Image im = random_image(rng, 16, 16);
    Image weak_im = random_image(rng, 16, 16);
    Expression expr = Expression::from_raw("right blob");
    Mask gt = left_half_mask(16, 16);

    auto compute_grad = [&](bool run_weak_forward) {
        std::vector<double> grad(model.parameter_count(), 0.0);
        if (run_weak_forward)
            model.forward(weak_im, expr);  // gradient-free teacher pass
        ForwardCache cache;
        PredictionMap pred = model.forward_cached(im, expr, cache);
        if (run_weak_forward) model.forward(weak_im, expr);
        model.backward(cache, supervised_loss_grad(pred, gt), grad);
        return grad;
    };
    REQUIRE(compute_grad(false) == compute_grad(true));
}

TEST_CASE("optimizer basics", "[model]") {
    SECTION("zero learning rate freezes parameters") {
        ToyResModel model(ModelConfig{}, toy_vocab(), 7);
        std::vector<double> before = model.parameters();
        std::vector<double> grad(model.parameter_count(), 0.5);
        AdamW opt;
        opt.lr = 0.0;
        opt.step(model.parameters(), grad);
        REQUIRE(model.parameters() == before);
    }
    SECTION("descent on a convex scalar probe") {
        std::vector<double> p = {0.0};
        AdamW opt;
        opt.lr = 0.1;
        opt.weight_decay = 0.0;
        auto loss = [&] { return (p[0] - 3.0) * (p[0] - 3.0); };
        double before = loss();
        for (int i = 0; i < 50; ++i) opt.step(p, {2.0 * (p[0] - 3.0)});
        REQUIRE(loss() < before);
        REQUIRE(p[0] > 0.5);
    }
}

TEST_CASE("repeated steps overfit one sample", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 101);
    Rng rng(55);
    Image im = random_image(rng, 16, 16);
    Expression expr = Expression::from_raw("left blob");
    Mask gt = left_half_mask(16, 16);

    AdamW opt;
    opt.lr = 1e-2;
    double loss = 0.0;
    for (int step = 0; step < 500; ++step) {
        ForwardCache cache;
        PredictionMap pred = model.forward_cached(im, expr, cache);
        loss = supervised_loss(pred, gt);
        if (loss < 0.05) break;
        std::vector<double> grad(model.parameter_count(), 0.0);
        model.backward(cache, supervised_loss_grad(pred, gt), grad);
        opt.step(model.parameters(), grad);
    }
    REQUIRE(loss < 0.05);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[model]") {
    ToyResModel model(ModelConfig{}, toy_vocab(), 13);
    Rng rng(77);
    Image im = random_image(rng, 16, 16);
    Expression expr = Expression::from_raw("red circle");
    Mask gt = left_half_mask(16, 16);

    AdamW opt;
    opt.lr = 1e-3;
    for (int i = 0; i < 3; ++i) {
        ForwardCache cache;
        PredictionMap pred = model.forward_cached(im, expr, cache);
        std::vector<double> grad(model.parameter_count(), 0.0);
        model.backward(cache, supervised_loss_grad(pred, gt), grad);
        opt.step(model.parameters(), grad);
    }

    Checkpoint ck;
    ck.config_hash = 0xfeedbeef;
    ck.model_config = model.config();
    ck.vocab_tokens = model.vocabulary().tokens();
    ck.params = model.parameters();
    ck.adam_m = opt.m;
    ck.adam_v = opt.v;
    ck.adam_t = opt.t;
    ck.next_epoch = 4;

    std::string path = "checkpoint_roundtrip_tmp.bin";
    ck.save(path);
    Checkpoint loaded = Checkpoint::load(path);
    std::remove(path.c_str());

    REQUIRE(loaded.config_hash == ck.config_hash);
    REQUIRE(loaded.model_config == ck.model_config);
    REQUIRE(loaded.vocab_tokens == ck.vocab_tokens);
    REQUIRE(loaded.params == ck.params);  // bit-exact double round trip
    REQUIRE(loaded.adam_m == ck.adam_m);
    REQUIRE(loaded.adam_v == ck.adam_v);
    REQUIRE(loaded.adam_t == ck.adam_t);
    REQUIRE(loaded.next_epoch == 4);

    // a model rebuilt from the snapshot reproduces the forward pass
    ToyResModel rebuilt(loaded.model_config,
                        Vocabulary::from_tokens(loaded.vocab_tokens), 999);
    rebuilt.parameters() = loaded.params;
    auto a = model.forward(im, expr);
    auto b = rebuilt.forward(im, expr);
    REQUIRE(a.fg == b.fg);
    REQUIRE(a.bg == b.bg);
}

TEST_CASE("checkpoint loader rejects foreign files", "[model]") {
    std::string path = "not_a_checkpoint_tmp.bin";
    {
        std::ofstream out(path, std::ios::binary);
        out << "garbage content";
    }
    REQUIRE_THROWS_AS(Checkpoint::load(path), DataError);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(Checkpoint::load("/nonexistent/ck.bin"), DataError);
}
