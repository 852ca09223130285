#include <catch2/catch_amalgamated.hpp>

#include "resmatch/rng.hpp"
#include "resmatch/ssl.hpp"

using namespace resmatch;

namespace {

PredictionMap map_from_fg(int h, int w, const std::vector<double>& fg) {
    PredictionMap m = PredictionMap::uniform(h, w, 0.5);
    for (std::size_t i = 0; i < fg.size(); ++i) {
        m.fg[i] = fg[i];
        m.bg[i] = 1.0 - fg[i];
    }
    return m;
}

PredictionMap random_map(Rng& rng, int h, int w, double lo = 0.05,
                         double hi = 0.95) {
    PredictionMap m = PredictionMap::uniform(h, w, 0.5);
    for (int i = 0; i < static_cast<int>(m.pixel_count()); ++i) {
        double p = uniform_real(rng, lo, hi);
        m.fg[static_cast<std::size_t>(i)] = p;
        m.bg[static_cast<std::size_t>(i)] = 1.0 - p;
    }
    return m;
}

// Independent re-derivation of the self-adaptive loss: recomputes validity,
// hard labels and the score directly from the weak map with plain loops.
double unsup_oracle(const std::vector<PredictionMap>& strong,
                    const std::vector<PseudoLabelBundle>& bundles, double tau) {
    double total = 0.0;
    for (std::size_t i = 0; i < strong.size(); ++i) {
        const PredictionMap& pw = bundles[i].weak_prediction;
        double score_sum = 0.0;
        int score_n = 0;
        for (int px = 0; px < static_cast<int>(pw.pixel_count()); ++px) {
            double m = std::max(pw.fg[static_cast<std::size_t>(px)],
                                pw.bg[static_cast<std::size_t>(px)]);
            if (m >= tau) {
                score_sum += m;
                ++score_n;
            }
        }
        double s = score_n == 0 ? 0.0 : score_sum / score_n;
        double inner = 0.0;
        for (int px = 0; px < static_cast<int>(pw.pixel_count()); ++px) {
            double fgw = pw.fg[static_cast<std::size_t>(px)];
            double bgw = pw.bg[static_cast<std::size_t>(px)];
            if (std::max(fgw, bgw) < tau) continue;
            bool label_fg = fgw > bgw;
            double p = label_fg ? strong[i].fg[static_cast<std::size_t>(px)]
                                : strong[i].bg[static_cast<std::size_t>(px)];
            inner += -std::log(clamp_prob(p));
        }
        total += s / pw.pixel_count() * inner;
    }
    return total / static_cast<double>(strong.size());
}

double fixmatch_oracle(const std::vector<PredictionMap>& strong,
                       const std::vector<PseudoLabelBundle>& bundles,
                       double tau) {
    double total = 0.0;
    for (std::size_t i = 0; i < strong.size(); ++i) {
        const PredictionMap& pw = bundles[i].weak_prediction;
        double inner = 0.0;
        int valid = 0;
        for (int px = 0; px < static_cast<int>(pw.pixel_count()); ++px) {
            double fgw = pw.fg[static_cast<std::size_t>(px)];
            double bgw = pw.bg[static_cast<std::size_t>(px)];
            if (std::max(fgw, bgw) < tau) continue;
            ++valid;
            double p = (fgw > bgw) ? strong[i].fg[static_cast<std::size_t>(px)]
                                   : strong[i].bg[static_cast<std::size_t>(px)];
            inner += -std::log(clamp_prob(p));
        }
        if (valid > 0) total += inner / valid;
    }
    return total / static_cast<double>(strong.size());
}

}  // namespace

TEST_CASE("pseudo-label construction ground truths", "[ssl]") {
    SECTION("fully confident foreground") {
        auto b = make_pseudo_labels(map_from_fg(2, 2, {1, 1, 1, 1}), 0.7);
        REQUIRE(b.valid_count() == 4);
        REQUIRE(b.pseudo_labels.area() == 4);
        REQUIRE(b.score == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("uniform map clears nothing") {
        auto b = make_pseudo_labels(PredictionMap::uniform(3, 3, 0.5), 0.7);
        REQUIRE(b.valid_count() == 0);
        REQUIRE(b.score == 0.0);
    }
    SECTION("mixed 2x2 map") {
        auto b = make_pseudo_labels(map_from_fg(2, 2, {0.9, 0.8, 0.3, 0.95}), 0.7);
        // low-foreground pixel is confidently background: max = 0.7 >= tau
        REQUIRE(b.validity == std::vector<std::uint8_t>({1, 1, 1, 1}));
        REQUIRE(b.pseudo_labels.values == std::vector<std::uint8_t>({1, 1, 0, 1}));
        // (0.9 + 0.8 + 0.7 + 0.95) / 4
        REQUIRE(b.score == Catch::Approx(0.8375).margin(1e-12));
    }
}

TEST_CASE("mask-aware confidence score", "[ssl]") {
    SECTION("partial validity averages only confident pixels") {
        // maxes 0.9, 0.8, 0.95 clear tau; 0.6 does not
        auto m = map_from_fg(1, 4, {0.9, 0.2, 0.95, 0.6});
        REQUIRE(mask_confidence_score(m, 0.7) ==
                Catch::Approx(2.65 / 3.0).margin(1e-12));
    }
    SECTION("score is zero or within [tau, 1]") {
        Rng rng(31);
        for (int t = 0; t < 100; ++t) {
            auto m = random_map(rng, 4, 4, 0.01, 0.99);
            double s = mask_confidence_score(m, 0.7);
            if (s != 0.0) {
                REQUIRE(s >= 0.7);
                REQUIRE(s <= 1.0);
            }
            auto b = make_pseudo_labels(m, 0.7);
            if (b.valid_count() == 0) REQUIRE(s == 0.0);
        }
    }
}

TEST_CASE("supervised loss ground truths", "[ssl]") {
    Mask gt = Mask::zeros(2, 2);
    gt.at(0, 0) = 1;
    gt.at(1, 1) = 1;

    SECTION("uniform prediction costs ln 2") {
        REQUIRE(supervised_loss(PredictionMap::uniform(2, 2, 0.5), gt) ==
                Catch::Approx(std::log(2.0)).margin(1e-12));
    }
    SECTION("single pixel at quarter probability costs ln 4") {
        Mask one = Mask::zeros(1, 1);
        one.at(0, 0) = 1;
        REQUIRE(supervised_loss(map_from_fg(1, 1, {0.25}), one) ==
                Catch::Approx(std::log(4.0)).margin(1e-12));
    }
    SECTION("perfect prediction is numerically flat") {
        auto m = map_from_fg(2, 2, {1.0, 0.0, 0.0, 1.0});
        REQUIRE(supervised_loss(m, gt) < 2e-7);
    }
    SECTION("dimension mismatch throws") {
        REQUIRE_THROWS_AS(supervised_loss(PredictionMap::uniform(3, 2, 0.5), gt),
                          StructuralError);
    }
}

TEST_CASE("supervised loss gradient matches finite differences", "[ssl]") {
    Rng rng(7);
    auto pred = random_map(rng, 4, 4);
    Mask gt = Mask::zeros(4, 4);
    for (int i = 0; i < 16; ++i)
        gt.values[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(uniform_int(rng, 0, 1));

    auto grad = supervised_loss_grad(pred, gt);
    const double h = 1e-6;
    for (int i = 0; i < static_cast<int>(pred.pixel_count()); ++i) {
        for (int cls = 0; cls < 2; ++cls) {
            auto& channel = cls == 0 ? pred.fg : pred.bg;
            double saved = channel[static_cast<std::size_t>(i)];
            channel[static_cast<std::size_t>(i)] = saved + h;
            double up = supervised_loss(pred, gt);
            channel[static_cast<std::size_t>(i)] = saved - h;
            double down = supervised_loss(pred, gt);
            channel[static_cast<std::size_t>(i)] = saved;
            double fd = (up - down) / (2.0 * h);
            double an = (cls == 0 ? grad.fg : grad.bg)[static_cast<std::size_t>(i)];
            if (std::abs(an) < 1e-12)
                REQUIRE(std::abs(fd) < 1e-9);
            else
                REQUIRE(std::abs(fd - an) / std::abs(an) < 1e-4);
        }
    }
}

TEST_CASE("self-adaptive loss hand example", "[ssl]") {
    // One sample, 1x2: first pixel confidently foreground (0.9), second
    // inconclusive (max 0.6 < 0.7). Score = 0.9, only pixel one counts.
    auto bundle = make_pseudo_labels(map_from_fg(1, 2, {0.9, 0.6}), 0.7);
    REQUIRE(bundle.score == Catch::Approx(0.9).margin(1e-12));
    REQUIRE(bundle.valid_count() == 1);
    std::vector<PredictionMap> strong = {map_from_fg(1, 2, {0.5, 0.3})};
    double loss = unsupervised_loss(strong, {bundle});
    REQUIRE(loss == Catch::Approx(0.45 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("self-adaptive loss degenerate and consistent cases", "[ssl]") {
    SECTION("zero score silences the sample") {
        auto bundle = make_pseudo_labels(PredictionMap::uniform(4, 4, 0.5), 0.7);
        REQUIRE(bundle.score == 0.0);
        Rng rng(3);
        std::vector<PredictionMap> strong = {random_map(rng, 4, 4)};
        REQUIRE(unsupervised_loss(strong, {bundle}) == 0.0);
    }
    SECTION("perfect consistency is numerically flat") {
        auto weak = map_from_fg(2, 2, {0.95, 0.05, 0.9, 0.1});
        auto bundle = make_pseudo_labels(weak, 0.7);
        std::vector<PredictionMap> strong = {
            map_from_fg(2, 2, {1.0, 0.0, 1.0, 0.0})};
        REQUIRE(unsupervised_loss(strong, {bundle}) < 1e-6);
    }
    SECTION("length mismatch throws") {
        auto bundle = make_pseudo_labels(PredictionMap::uniform(2, 2, 0.5), 0.7);
        REQUIRE_THROWS_AS(unsupervised_loss({}, {bundle}), StructuralError);
    }
    SECTION("shape mismatch throws") {
        auto bundle = make_pseudo_labels(map_from_fg(2, 2, {1, 1, 1, 1}), 0.7);
        std::vector<PredictionMap> strong = {PredictionMap::uniform(3, 3, 0.5)};
        REQUIRE_THROWS_AS(unsupervised_loss(strong, {bundle}), StructuralError);
    }
}

TEST_CASE("self-adaptive loss matches the loop oracle", "[ssl]") {
    Rng rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        int bu = uniform_int(rng, 1, 4);
        int h = uniform_int(rng, 1, 8);
        int w = uniform_int(rng, 1, 8);
        std::vector<PredictionMap> strong;
        std::vector<PseudoLabelBundle> bundles;
        for (int i = 0; i < bu; ++i) {
            bundles.push_back(
                make_pseudo_labels(random_map(rng, h, w, 0.01, 0.99), 0.7));
            strong.push_back(random_map(rng, h, w, 0.01, 0.99));
        }
        REQUIRE(unsupervised_loss(strong, bundles) ==
                Catch::Approx(unsup_oracle(strong, bundles, 0.7)).margin(1e-9));
        REQUIRE(fixmatch_unsupervised_loss(strong, bundles) ==
                Catch::Approx(fixmatch_oracle(strong, bundles, 0.7)).margin(1e-9));
    }
}

TEST_CASE("more confidence on the pseudo-label class never raises the loss",
          "[ssl]") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        auto bundle = make_pseudo_labels(random_map(rng, 3, 3, 0.01, 0.99), 0.7);
        if (bundle.valid_count() == 0) continue;
        std::vector<PredictionMap> strong = {random_map(rng, 3, 3, 0.05, 0.9)};
        double before = unsupervised_loss(strong, {bundle});
        // push one valid pixel toward its pseudo-label class
        for (int px = 0; px < 9; ++px) {
            if (!bundle.validity[static_cast<std::size_t>(px)]) continue;
            bool fg_true = bundle.pseudo_labels.values[static_cast<std::size_t>(px)] != 0;
            auto& channel = fg_true ? strong[0].fg : strong[0].bg;
            channel[static_cast<std::size_t>(px)] =
                std::min(0.99, channel[static_cast<std::size_t>(px)] + 0.05);
        }
        double after = unsupervised_loss(strong, {bundle});
        REQUIRE(after <= before + 1e-12);
    }
}

TEST_CASE("unsupervised gradients match finite differences", "[ssl]") {
    Rng rng(77);
    for (int trial = 0; trial < 4; ++trial) {
        int bu = uniform_int(rng, 1, 3);
        std::vector<PredictionMap> strong;
        std::vector<PseudoLabelBundle> bundles;
        for (int i = 0; i < bu; ++i) {
            bundles.push_back(
                make_pseudo_labels(random_map(rng, 4, 4, 0.01, 0.99), 0.7));
            strong.push_back(random_map(rng, 4, 4));
        }
        auto grads = unsupervised_loss_grad(strong, bundles);
        auto fix_grads = fixmatch_unsupervised_loss_grad(strong, bundles);
        const double h = 1e-6;
        for (int i = 0; i < bu; ++i) {
            for (int px = 0; px < 16; ++px) {
                for (int cls = 0; cls < 2; ++cls) {
                    auto& channel = cls == 0 ? strong[static_cast<std::size_t>(i)].fg
                                             : strong[static_cast<std::size_t>(i)].bg;
                    double saved = channel[static_cast<std::size_t>(px)];
                    channel[static_cast<std::size_t>(px)] = saved + h;
                    double up = unsupervised_loss(strong, bundles);
                    double fix_up = fixmatch_unsupervised_loss(strong, bundles);
                    channel[static_cast<std::size_t>(px)] = saved - h;
                    double down = unsupervised_loss(strong, bundles);
                    double fix_down = fixmatch_unsupervised_loss(strong, bundles);
                    channel[static_cast<std::size_t>(px)] = saved;
                    double fd = (up - down) / (2.0 * h);
                    double fix_fd = (fix_up - fix_down) / (2.0 * h);
                    auto check = [&](double an, double fd_val) {
                        if (std::abs(an) < 1e-12)
                            REQUIRE(std::abs(fd_val) < 1e-10);
                        else
                            REQUIRE(std::abs(fd_val - an) / std::abs(an) < 1e-4);
                    };
                    const auto& g = grads[static_cast<std::size_t>(i)];
                    const auto& fg_ = fix_grads[static_cast<std::size_t>(i)];
                    check((cls == 0 ? g.fg : g.bg)[static_cast<std::size_t>(px)], fd);
                    check((cls == 0 ? fg_.fg : fg_.bg)[static_cast<std::size_t>(px)],
                          fix_fd);
                    // invalid pixels must not leak gradient
                    if (!bundles[static_cast<std::size_t>(i)]
                             .validity[static_cast<std::size_t>(px)]) {
                        REQUIRE(std::abs(fd) < 1e-10);
                        REQUIRE(std::abs(fix_fd) < 1e-10);
                    }
                }
            }
        }
    }
}

TEST_CASE("baseline loss equals the self-adaptive loss at full confidence",
          "[ssl]") {
    // When every pixel is valid with max confidence 1, s = 1 and the
    // normalizers coincide.
    auto weak = map_from_fg(2, 2, {1.0, 0.0, 1.0, 0.0});
    auto bundle = make_pseudo_labels(weak, 0.7);
    REQUIRE(bundle.score == 1.0);
    REQUIRE(bundle.valid_count() == 4);
    Rng rng(13);
    std::vector<PredictionMap> strong = {random_map(rng, 2, 2)};
    REQUIRE(unsupervised_loss(strong, {bundle}) ==
            Catch::Approx(fixmatch_unsupervised_loss(strong, {bundle}))
                .margin(1e-12));
}

TEST_CASE("total objective", "[ssl]") {
    LossWeights w;  // defaults: lambda_x 5, lambda_u 2
    REQUIRE(total_loss(1.0, 0.0, w) == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(total_loss(0.0, 0.0, w) == 0.0);
    REQUIRE(total_loss(1.0, 1.0, w) == Catch::Approx(7.0).margin(1e-12));

    SECTION("linear in each argument") {
        Rng rng(19);
        for (int t = 0; t < 20; ++t) {
            double a = uniform_real(rng, 0.0, 3.0);
            double b = uniform_real(rng, 0.0, 3.0);
            double k = uniform_real(rng, 0.0, 2.0);
            REQUIRE(total_loss(k * a, b, w) ==
                    Catch::Approx(k * total_loss(a, 0, w) + total_loss(0, b, w))
                        .margin(1e-9));
        }
    }
    SECTION("validation rejects bad weights") {
        LossWeights bad;
        bad.lambda_u = -1.0;
        REQUIRE_THROWS_AS(bad.validate(), ConfigError);
        LossWeights bad_tau;
        bad_tau.tau = 1.5;
        REQUIRE_THROWS_AS(bad_tau.validate(), ConfigError);
        LossWeights ok;
        REQUIRE_NOTHROW(ok.validate());
    }
}
