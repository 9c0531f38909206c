#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "pairface/losses.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace pairface;

namespace {

// Central finite difference of a scalar function of one tensor coordinate.
template <class F>
double fd(Tensor& t, std::size_t i, F&& f, double eps = 1e-3) {
    const float saved = t[i];
    t[i] = static_cast<float>(saved + eps);
    const double hi = f();
    t[i] = static_cast<float>(saved - eps);
    const double lo = f();
    t[i] = saved;
    return (hi - lo) / (2.0 * eps);
}

// Floor absorbs float32 evaluation noise when the true gradient is ~0
// (e.g. exactly cancelling sign contributions in GDL).
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

}  // namespace

TEST_CASE("pixel losses match nested-loop references on random tensors", "[losses]") {
    std::mt19937_64 eng(42);
    for (int side = 2; side <= 16; ++side) {
        for (int trial = 0; trial < 100; ++trial) {
            const int c = trial % 2 == 0 ? 3 : 1;
            Tensor gt = fixtures::random_image(eng, c, side, side);
            Tensor y = fixtures::random_image(eng, c, side, side);
            CHECK(l1_loss(gt, y) == Catch::Approx(oracle::l1(gt, y)).margin(1e-6));
            CHECK(gdl_loss(gt, y, {1, true}) == Catch::Approx(oracle::gdl(gt, y, 1)).margin(1e-6));
            CHECK(gdl_loss(gt, y, {2, true}) == Catch::Approx(oracle::gdl(gt, y, 2)).margin(1e-6));
            CHECK(pair_loss(gt, y) == Catch::Approx(oracle::pair(gt, y)).margin(1e-6));
            if (side % 2 == 0)
                CHECK(symmetry_loss(y) == Catch::Approx(oracle::sym(y)).margin(1e-6));
        }
    }
}

TEST_CASE("adversarial losses match per-patch references", "[losses]") {
    std::mt19937_64 eng(7);
    for (int trial = 0; trial < 50; ++trial) {
        PatchGrid real = fixtures::random_grid(eng, 6);
        PatchGrid fake = fixtures::random_grid(eng, 6);
        CHECK(adversarial_g_loss(fake) == Catch::Approx(oracle::adv_g(fake)).margin(1e-9));
        CHECK(adversarial_d_loss(real, fake) == Catch::Approx(oracle::adv_d(real, fake)).margin(1e-9));
    }
}

TEST_CASE("adversarial loss anchors", "[losses]") {
    PatchGrid zeros = fixtures::const_grid(30, 0.0f);
    CHECK(adversarial_g_loss(zeros) == Catch::Approx(std::log(2.0)).margin(1e-9));
    CHECK(adversarial_d_loss(zeros, zeros) == Catch::Approx(std::log(2.0)).margin(1e-9));

    // Perfectly fooled discriminator: G loss -> 0.
    PatchGrid huge = fixtures::const_grid(30, 50.0f);
    CHECK(adversarial_g_loss(huge) < 1e-9);

    // Perfect discriminator: D loss -> 0.
    PatchGrid neg = fixtures::const_grid(30, -50.0f);
    CHECK(adversarial_d_loss(huge, neg) < 1e-9);

    // Mixed logits {0, 0, +large, -large}.
    PatchGrid mixed;
    mixed.logits = Tensor({2, 2});
    mixed.logits.at(0, 0) = 0.0f;
    mixed.logits.at(0, 1) = 0.0f;
    mixed.logits.at(1, 0) = 30.0f;
    mixed.logits.at(1, 1) = -30.0f;
    CHECK(adversarial_g_loss(mixed) == Catch::Approx(oracle::adv_g(mixed)).margin(1e-9));
    CHECK(adversarial_g_loss(mixed) ==
          Catch::Approx((std::log(2.0) + std::log(2.0) + 0.0 + 30.0) / 4.0).margin(1e-6));

    // Stability: finite logits never produce NaN.
    PatchGrid extreme = fixtures::const_grid(4, -1000.0f);
    CHECK(std::isfinite(adversarial_g_loss(extreme)));
    CHECK(std::isfinite(adversarial_d_loss(extreme, extreme)));
}

TEST_CASE("pixel loss anchors", "[losses]") {
    Tensor gt({3, 4, 4}, 1.0f);
    Tensor y({3, 4, 4}, 0.0f);
    CHECK(l1_loss(gt, gt) == 0.0);
    CHECK(l1_loss(gt, y) == Catch::Approx(1.0));

    std::mt19937_64 eng(3);
    Tensor a = fixtures::random_image(eng, 3, 5, 5);
    Tensor b = a;
    CHECK(gdl_loss(a, b, {2, true}) == 0.0);

    // Shift invariance separates GDL from L1.
    Tensor shifted = a;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.25f;
    CHECK(gdl_loss(a, shifted, {1, true}) == Catch::Approx(0.0).margin(1e-6));
    CHECK(gdl_loss(a, shifted, {2, true}) == Catch::Approx(0.0).margin(1e-7));
    CHECK(l1_loss(a, shifted) > 0.1);

    // Mirror-symmetric image scores zero.
    Tensor symmetric({1, 4, 6});
    for (int y_ = 0; y_ < 4; ++y_)
        for (int x = 0; x < 6; ++x) symmetric.at(0, y_, x) = static_cast<float>(std::min(x, 5 - x));
    CHECK(symmetry_loss(symmetric) == 0.0);

    // Left half +1, right half -1: every mirror pair differs by 2.
    Tensor halves({3, 4, 8});
    for (int c = 0; c < 3; ++c)
        for (int y_ = 0; y_ < 4; ++y_)
            for (int x = 0; x < 8; ++x) halves.at(c, y_, x) = x < 4 ? 1.0f : -1.0f;
    CHECK(symmetry_loss(halves) == Catch::Approx(2.0));

    CHECK_THROWS_AS(symmetry_loss(fixtures::random_image(eng, 1, 4, 5)), ShapeMismatch);

    // Pair loss symmetry and zero case.
    Tensor p = fixtures::random_image(eng, 3, 8, 8);
    Tensor q = fixtures::random_image(eng, 3, 8, 8);
    CHECK(pair_loss(p, p) == 0.0);
    CHECK(pair_loss(p, q) == Catch::Approx(pair_loss(q, p)).margin(1e-12));

    CHECK_THROWS_AS(l1_loss(gt, Tensor({3, 4, 5})), ShapeMismatch);
}

TEST_CASE("identity loss composes through a callable generator", "[losses]") {
    struct IdentityGen {
        Tensor forward(const Tensor& x) { return x; }
    } idg;
    struct ZeroGen {
        Tensor forward(const Tensor& x) { return Tensor(x.shape(), 0.0f); }
    } zg;
    Tensor gt({3, 6, 6}, 1.0f);
    CHECK(identity_loss(gt, idg) == 0.0);
    CHECK(identity_loss(gt, zg) == Catch::Approx(1.0));
}

TEST_CASE("loss gradients match central finite differences away from kinks", "[losses]") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<float> unif(-1.0f, 1.0f);

    // Redraw 4x4 tensors until every |.| argument is comfortably away from 0
    // so the +-1e-3 probes cannot cross a kink.
    auto draw_pair = [&](Tensor& gt, Tensor& y) {
        while (true) {
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = unif(eng);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = unif(eng);
            bool ok = true;
            const int c_n = y.channels(), h = y.height(), w = y.width();
            for (std::size_t i = 0; i < y.size() && ok; ++i)
                ok = std::abs(y[i] - gt[i]) >= 1e-2f;
            for (int c = 0; c < c_n && ok; ++c)
                for (int yy = 0; yy < h && ok; ++yy)
                    for (int x = 1; x < w && ok; ++x) {
                        const float dy = y.at(c, yy, x) - y.at(c, yy, x - 1);
                        const float dt = gt.at(c, yy, x) - gt.at(c, yy, x - 1);
                        ok = std::abs(dy) >= 1e-2f && std::abs(std::abs(dy) - std::abs(dt)) >= 1e-2f;
                    }
            for (int c = 0; c < c_n && ok; ++c)
                for (int yy = 1; yy < h && ok; ++yy)
                    for (int x = 0; x < w && ok; ++x) {
                        const float dy = y.at(c, yy - 1, x) - y.at(c, yy, x);
                        const float dt = gt.at(c, yy - 1, x) - gt.at(c, yy, x);
                        ok = std::abs(dy) >= 1e-2f && std::abs(std::abs(dy) - std::abs(dt)) >= 1e-2f;
                    }
            for (int c = 0; c < c_n && ok; ++c)
                for (int yy = 0; yy < h && ok; ++yy)
                    for (int x = 0; x < w / 2 && ok; ++x)
                        ok = std::abs(y.at(c, yy, x) - y.at(c, yy, w - 1 - x)) >= 1e-2f;
            if (ok) return;
        }
    };

    Tensor gt({1, 4, 4}), y({1, 4, 4});
    for (int trial = 0; trial < 20; ++trial) {
        draw_pair(gt, y);

        Tensor g_l1 = l1_loss_grad(gt, y);
        Tensor g_gdl1 = gdl_loss_grad(gt, y, {1, true});
        Tensor g_gdl2 = gdl_loss_grad(gt, y, {2, true});
        Tensor g_sym = symmetry_loss_grad(y);
        Tensor g_pair = pair_loss_grad(y, gt);  // treat gt as the other branch

        for (std::size_t i = 0; i < y.size(); ++i) {
            CHECK(rel_err(g_l1[i], fd(y, i, [&] { return l1_loss(gt, y); })) < 1e-2);
            CHECK(rel_err(g_gdl1[i], fd(y, i, [&] { return gdl_loss(gt, y, {1, true}); })) < 1e-2);
            CHECK(rel_err(g_gdl2[i], fd(y, i, [&] { return gdl_loss(gt, y, {2, true}); })) < 1e-2);
            CHECK(rel_err(g_sym[i], fd(y, i, [&] { return symmetry_loss(y); })) < 1e-2);
            CHECK(rel_err(g_pair[i], fd(y, i, [&] { return pair_loss(y, gt); })) < 1e-2);
        }
    }

    // Adversarial gradients are smooth; check on random logits directly.
    PatchGrid fake = fixtures::random_grid(eng, 4);
    PatchGrid real = fixtures::random_grid(eng, 4);
    Tensor g_adv = adversarial_g_loss_grad(fake);
    DiscLossGrads g_d = adversarial_d_loss_grad(real, fake);
    for (std::size_t i = 0; i < fake.logits.size(); ++i) {
        CHECK(rel_err(g_adv[i], fd(fake.logits, i, [&] { return adversarial_g_loss(fake); })) < 1e-2);
        CHECK(rel_err(g_d.fake[i],
                      fd(fake.logits, i, [&] { return adversarial_d_loss(real, fake); })) < 1e-2);
        CHECK(rel_err(g_d.real[i],
                      fd(real.logits, i, [&] { return adversarial_d_loss(real, fake); })) < 1e-2);
    }
}

TEST_CASE("composite loss wiring and linearity", "[losses]") {
    std::mt19937_64 eng(5);
    Tensor gt = fixtures::random_image(eng, 3, 8, 8);
    Tensor y = fixtures::random_image(eng, 3, 8, 8);
    Tensor gi = fixtures::random_image(eng, 3, 8, 8);
    PatchGrid zeros = fixtures::const_grid(4, 0.0f);

    BranchInputs branch{&y, &gt, &zeros, &gi};

    SECTION("adv-only composite equals ln 2 on zero logits") {
        LossBreakdown b = composite_generator_loss({branch}, {1, 0, 0, 0, 0, 0});
        REQUIRE(b.terms.size() == 1);
        CHECK(b.total == Catch::Approx(std::log(2.0)).margin(1e-9));
    }

    SECTION("l1-only composite on identical tensors is zero") {
        BranchInputs perfect{&gt, &gt, nullptr, nullptr};
        LossBreakdown b = composite_generator_loss({perfect}, {0, 1, 0, 0, 0, 0});
        CHECK(b.total == 0.0);
    }

    SECTION("best pix2pix row computes exactly adv, l1, gdl, id") {
        LossBreakdown b = composite_generator_loss({branch}, {20, 3, 0.1, 0, 5, 0});
        REQUIRE(b.terms.size() == 4);
        CHECK(b.terms[0].name == "adv");
        CHECK(b.terms[1].name == "l1");
        CHECK(b.terms[2].name == "gdl");
        CHECK(b.terms[3].name == "id");
        CHECK(b.find("sym") == nullptr);
        CHECK(b.find("pair") == nullptr);
        double total = 0.0;
        for (const auto& t : b.terms) total += t.weighted;
        CHECK(b.total == Catch::Approx(total).margin(1e-12));
    }

    SECTION("doubling a weight doubles that term and shifts total by the delta") {
        LossWeights w{2, 3, 0, 0, 0, 0};
        LossBreakdown b1 = composite_generator_loss({branch}, w);
        w.l1 *= 2;
        LossBreakdown b2 = composite_generator_loss({branch}, w);
        CHECK(b2.find("l1")->weighted == Catch::Approx(2 * b1.find("l1")->weighted));
        CHECK(b2.total - b1.total == Catch::Approx(b1.find("l1")->weighted).margin(1e-12));
    }

    SECTION("positive-weight terms demand their tensors") {
        BranchInputs no_logits{&y, &gt, nullptr, nullptr};
        CHECK_THROWS_AS(composite_generator_loss({no_logits}, {1, 0, 0, 0, 0, 0}), MissingInput);
        CHECK_THROWS_AS(composite_generator_loss({no_logits}, {0, 0, 0, 0, 1, 0}), MissingInput);
        CHECK_THROWS_AS(composite_generator_loss({no_logits}, {0, 0, 0, 0, 0, 1}), MissingInput);
    }

    SECTION("pairwise mode averages branches and adds the pair term once") {
        Tensor y2 = fixtures::random_image(eng, 3, 8, 8);
        BranchInputs right{&y2, &gt, &zeros, &gi};
        LossBreakdown b = composite_generator_loss({branch, right}, {0, 1, 0, 0, 0, 2},
                                                   GdlConfig{}, CompositeMode::pairwise);
        CHECK(b.find("l1")->raw ==
              Catch::Approx((l1_loss(gt, y) + l1_loss(gt, y2)) / 2.0).margin(1e-12));
        CHECK(b.find("pair")->raw == Catch::Approx(pair_loss(y, y2)).margin(1e-12));

        // Identical outputs zero the pair term.
        BranchInputs same{&y, &gt, &zeros, &gi};
        LossBreakdown b0 = composite_generator_loss({branch, same}, {0, 0, 0, 0, 0, 1},
                                                    GdlConfig{}, CompositeMode::pairwise);
        CHECK(b0.find("pair")->raw == 0.0);
    }

    SECTION("weights validation") {
        CHECK_THROWS_AS(composite_generator_loss({branch}, {0, 0, 0, 0, 0, 0}), Error);
        CHECK_THROWS_AS(composite_generator_loss({branch}, {-1, 1, 0, 0, 0, 0}), Error);
    }

    SECTION("raw pixel losses are non-negative on random data") {
        for (int t = 0; t < 20; ++t) {
            Tensor a = fixtures::random_image(eng, 3, 6, 6);
            Tensor b = fixtures::random_image(eng, 3, 6, 6);
            CHECK(l1_loss(a, b) >= 0.0);
            CHECK(gdl_loss(a, b, {1, true}) >= 0.0);
            CHECK(gdl_loss(a, b, {2, true}) >= 0.0);
            CHECK(symmetry_loss(a) >= 0.0);
            CHECK(pair_loss(a, b) >= 0.0);
            PatchGrid g = fixtures::random_grid(eng, 5);
            CHECK(adversarial_g_loss(g) >= 0.0);
        }
    }
}

TEST_CASE("gdl unnormalized variant is the plain equation sum", "[losses]") {
    std::mt19937_64 eng(9);
    Tensor gt = fixtures::random_image(eng, 3, 5, 7);
    Tensor y = fixtures::random_image(eng, 3, 5, 7);
    CHECK(gdl_loss(gt, y, {1, false}) == Catch::Approx(oracle::gdl(gt, y, 1, false)).margin(1e-6));
    const double pairs = (7 - 1) * 5 + 7 * (5 - 1);
    CHECK(gdl_loss(gt, y, {1, false}) ==
          Catch::Approx(gdl_loss(gt, y, {1, true}) * pairs).margin(1e-6));
}
