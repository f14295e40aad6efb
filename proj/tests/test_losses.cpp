#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fdcheck_suite.hpp"
#include "oracles.hpp"
#include "ssvif/losses.hpp"
#include "testutil.hpp"

using namespace ssvif;
using testutil::random_tensor;

namespace {

oracles::Plane to_plane(const TensorD& t) {
    return {t.dim(1), t.dim(2), t.values()};
}

SegPredT<double> pred_from_probs(const std::vector<double>& probs, int n, int h, int w) {
    auto t = TensorD::from_vector({n, h, w}, probs);
    return {t, t};
}

} // namespace

TEST_CASE("intensity loss hand cases") {
    auto f = TensorD::from_vector({1, 1, 1}, {0.1});
    auto ir = TensorD::from_vector({1, 1, 1}, {0.2});
    auto vis = TensorD::from_vector({1, 1, 1}, {0.6});
    CHECK(intensity_loss(f, ir, vis).item() == doctest::Approx(0.5));

    // fused == max -> exactly zero
    auto f2 = TensorD::from_vector({1, 1, 1}, {0.6});
    CHECK(intensity_loss(f2, ir, vis).item() == doctest::Approx(0.0));

    // mean scaling: replicated tiles leave the value unchanged
    auto f4 = TensorD::filled({1, 2, 2}, 0.1);
    auto i4 = TensorD::filled({1, 2, 2}, 0.2);
    auto v4 = TensorD::filled({1, 2, 2}, 0.6);
    CHECK(intensity_loss(f4, i4, v4).item() == doctest::Approx(0.5));

    CHECK_THROWS_AS(intensity_loss(f, ir, TensorD::zeros({1, 2, 2})), DimensionError);
}

TEST_CASE("loss oracles agree on random 8x8 inputs") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        auto f = random_tensor(rng, {1, 8, 8}, 0, 1, false);
        auto ir = random_tensor(rng, {1, 8, 8}, 0, 1, false);
        auto vis = random_tensor(rng, {1, 8, 8}, 0, 1, false);
        CHECK(intensity_loss(f, ir, vis).item() ==
              doctest::Approx(oracles::intensity(to_plane(f), to_plane(ir), to_plane(vis)))
                  .epsilon(1e-6));
        CHECK(gradient_loss(f, ir, vis).item() ==
              doctest::Approx(oracles::gradient(to_plane(f), to_plane(ir), to_plane(vis)))
                  .epsilon(1e-6));

        auto frgb = random_tensor(rng, {3, 8, 8}, 0, 1, false);
        auto vrgb = random_tensor(rng, {3, 8, 8}, 0, 1, false);
        CHECK(color_loss(frgb, vrgb).item() ==
              doctest::Approx(oracles::color(frgb.values(), vrgb.values(), 64)).epsilon(1e-6));
    }
}

TEST_CASE("gradient loss vanishes for constant or matching inputs") {
    auto c = TensorD::filled({1, 8, 8}, 0.5);
    CHECK(gradient_loss(c, c, c).item() == doctest::Approx(0.0).epsilon(1e-5));

    Rng rng(7);
    auto tex = random_tensor(rng, {1, 8, 8}, 0, 1, false);
    auto flat = TensorD::filled({1, 8, 8}, 0.3);
    // fused identical to the higher-gradient source
    CHECK(gradient_loss(tex, tex, flat).item() == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("ssim loss identity, bounds, and anti-correlated case") {
    Rng rng(13);
    auto x = random_tensor(rng, {1, 16, 16}, 0, 1, false);
    CHECK(ssim_loss(x, x, x).item() == doctest::Approx(0.0).epsilon(1e-9));

    // binary checkerboard against its inverse: local ssim < 0, loss > 1
    std::vector<double> cb(256);
    for (int y = 0; y < 16; ++y) {
        for (int x2 = 0; x2 < 16; ++x2) cb[size_t(y * 16 + x2)] = double((y + x2) % 2);
    }
    auto a = TensorD::from_vector({1, 16, 16}, cb);
    std::vector<double> inv(256);
    for (size_t i = 0; i < 256; ++i) inv[i] = 1.0 - cb[i];
    auto b = TensorD::from_vector({1, 16, 16}, inv);
    CHECK(ssim_loss(a, b, b).item() > 1.0);

    // loss in [0,2] on random inputs
    for (int t = 0; t < 20; ++t) {
        auto f = random_tensor(rng, {1, 12, 12}, 0, 1, false);
        auto i = random_tensor(rng, {1, 12, 12}, 0, 1, false);
        auto v = random_tensor(rng, {1, 12, 12}, 0, 1, false);
        const double l = ssim_loss(f, i, v).item();
        CHECK(l >= 0.0);
        CHECK(l <= 2.0);
    }
    CHECK_THROWS_AS(ssim_loss(TensorD::zeros({1, 8, 8}), TensorD::zeros({1, 8, 8}),
                              TensorD::zeros({1, 8, 8})),
                    ContractError);
}

TEST_CASE("per-window ssim never exceeds one") {
    Rng rng(14);
    for (int t = 0; t < 50; ++t) {
        auto x = random_tensor(rng, {1, 12, 12}, 0, 1, false);
        auto y = random_tensor(rng, {1, 12, 12}, 0, 1, false);
        CHECK(mean_ssim(x, y).item() <= 1.0 + 1e-12);
    }
}

TEST_CASE("color loss zero cases") {
    Rng rng(15);
    auto v = random_tensor(rng, {3, 6, 6}, 0, 1, false);
    CHECK(color_loss(v, v).item() == doctest::Approx(0.0));

    // achromatic images of different brightness still match in chroma
    auto g1 = TensorD::filled({3, 4, 4}, 0.2);
    auto g2 = TensorD::filled({3, 4, 4}, 0.8);
    CHECK(color_loss(g1, g2).item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fusion loss combines terms and honors the weights") {
    Rng rng(16);
    auto f = random_tensor(rng, {3, 12, 12}, 0.05, 0.95, false);
    auto ir = random_tensor(rng, {3, 12, 12}, 0.05, 0.95, false);
    auto vis = random_tensor(rng, {3, 12, 12}, 0.05, 0.95, false);

    auto terms = fusion_loss(f, ir, vis, {20, 20, 10, 20});
    const double combo = 20 * terms.l_int.item() + 20 * terms.l_grad.item() +
                         10 * terms.l_ssim.item() + 20 * terms.l_color.item();
    CHECK(terms.total.item() == doctest::Approx(combo).epsilon(1e-6));

    // lambda = (1,0,0,0) reduces to the intensity loss
    auto only_int = fusion_loss(f, ir, vis, {1, 0, 0, 0});
    CHECK(only_int.total.item() == doctest::Approx(only_int.l_int.item()).epsilon(1e-9));

    // identical inputs: every term vanishes
    auto same = fusion_loss(vis, vis, vis, {20, 20, 10, 20});
    CHECK(same.total.item() == doctest::Approx(0.0).epsilon(1e-5));

    CHECK_THROWS_AS(fusion_loss(f, ir, vis, {-1, 0, 0, 0}), ConfigError);
}

TEST_CASE("pseudo-label hand cases") {
    // pixel where A is more confident
    auto pa = pred_from_probs({0.9, 0.4, 0.1, 0.6}, 2, 1, 2);
    auto pb = pred_from_probs({0.4, 0.7, 0.6, 0.3}, 2, 1, 2);
    auto label = build_pseudo_label(pa, pb);
    CHECK(label.classes[0] == 0);        // A wins 0.9 > 0.4
    CHECK(label.source[0] == PseudoSource::A);
    CHECK(label.confidence[0] == doctest::Approx(0.9));
    CHECK(label.classes[1] == 0);        // B wins 0.7 > 0.6, B's argmax is class 0
    CHECK(label.source[1] == PseudoSource::B);

    // exact tie goes to B
    auto ta = pred_from_probs({0.5, 0.5}, 2, 1, 1);
    auto tb = pred_from_probs({0.5, 0.5}, 2, 1, 1);
    auto tie = build_pseudo_label(ta, tb);
    CHECK(tie.source[0] == PseudoSource::B);

    // equal predictions: argmax of either, all sources B
    auto eq = build_pseudo_label(pa, pa);
    for (auto s : eq.source) CHECK(s == PseudoSource::B);

    auto mismatched = pred_from_probs(std::vector<double>(3 * 1 * 2, 0.33), 3, 1, 2);
    CHECK_THROWS_AS(build_pseudo_label(mismatched, pb), DimensionError);
}

TEST_CASE("exhaustive pseudo-label lattice (2 classes, 2 pixels, 0.1 grid)") {
    // class-0 probability of each branch at each pixel sweeps the 0.1 lattice
    int checked = 0;
    for (int a0 = 0; a0 <= 10; ++a0) {
        for (int a1 = 0; a1 <= 10; ++a1) {
            for (int b0 = 0; b0 <= 10; ++b0) {
                for (int b1 = 0; b1 <= 10; ++b1) {
                    const double pa0 = a0 / 10.0, pa1 = a1 / 10.0;
                    const double pb0 = b0 / 10.0, pb1 = b1 / 10.0;
                    auto pa = pred_from_probs({pa0, pa1, 1 - pa0, 1 - pa1}, 2, 1, 2);
                    auto pb = pred_from_probs({pb0, pb1, 1 - pb0, 1 - pb1}, 2, 1, 2);
                    auto label = build_pseudo_label(pa, pb);
                    const double pav[2] = {pa0, pa1}, pbv[2] = {pb0, pb1};
                    for (int px = 0; px < 2; ++px) {
                        const double max_a = std::max(pav[px], 1 - pav[px]);
                        const double max_b = std::max(pbv[px], 1 - pbv[px]);
                        const int arg_a = pav[px] >= 1 - pav[px] ? 0 : 1;
                        const int arg_b = pbv[px] >= 1 - pbv[px] ? 0 : 1;
                        if (max_a > max_b) {
                            CHECK(label.source[size_t(px)] == PseudoSource::A);
                            CHECK(label.classes[size_t(px)] == arg_a);
                        } else {
                            CHECK(label.source[size_t(px)] == PseudoSource::B);
                            CHECK(label.classes[size_t(px)] == arg_b);
                        }
                        ++checked;
                    }
                }
            }
        }
    }
    CHECK(checked == 2 * 11 * 11 * 11 * 11);
}

TEST_CASE("hybrid loss hand cases and oracle") {
    // near-one-hot prediction matching the target: both terms near zero
    const int n = 4, h = 2, w = 2;
    std::vector<double> probs(size_t(n * h * w), 1e-9);
    std::vector<int> cls = {0, 1, 2, 3};
    for (int p = 0; p < 4; ++p) probs[size_t(cls[size_t(p)] * 4 + p)] = 1.0 - 3e-9;
    PseudoLabelT<double> label{n, h, w, cls, std::vector<double>(4, 1.0),
                               std::vector<PseudoSource>(4, PseudoSource::B)};
    auto terms = hybrid_loss(pred_from_probs(probs, n, h, w), label);
    CHECK(terms.l_ce.item() == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(terms.l_dice.item() == doctest::Approx(0.0).epsilon(1e-5));

    // uniform prediction over 4 classes: ce = ln 4
    std::vector<double> uni(size_t(n * h * w), 0.25);
    auto terms_u = hybrid_loss(pred_from_probs(uni, n, h, w), label);
    CHECK(terms_u.l_ce.item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    // random inputs against the naive oracle, including absent classes
    Rng rng(77);
    for (int t = 0; t < 100; ++t) {
        const int nn = 3, hh = 8, ww = 8;
        auto pr = fdcheck::detail::random_probs(rng, nn, hh * ww);
        std::vector<int> cc(size_t(hh * ww));
        for (auto& c : cc) c = rng.uniform_int(2); // class 2 absent from targets
        PseudoLabelT<double> lab{nn, hh, ww, cc, std::vector<double>(64, 1.0),
                                 std::vector<PseudoSource>(64, PseudoSource::B)};
        auto ht = hybrid_loss(pred_from_probs(pr, nn, hh, ww), lab);
        CHECK(ht.l_ce.item() ==
              doctest::Approx(oracles::cross_entropy(pr, cc, nn, 64, true)).epsilon(1e-6));
        CHECK(ht.l_dice.item() == doctest::Approx(oracles::dice(pr, cc, nn, 64)).epsilon(1e-6));
    }
}

TEST_CASE("csc loss oracle and symmetry") {
    Rng rng(78);
    for (int t = 0; t < 100; ++t) {
        const int n = 3, h = 8, w = 8;
        auto pa = fdcheck::detail::random_probs(rng, n, h * w);
        auto pb = fdcheck::detail::random_probs(rng, n, h * w);
        auto terms = csc_loss(pred_from_probs(pa, n, h, w), pred_from_probs(pb, n, h, w));
        CHECK(terms.l_csc.item() == doctest::Approx(oracles::csc(pa, pb, n, 64)).epsilon(1e-6));
        CHECK(terms.l_csc.item() ==
              doctest::Approx(0.5 * (terms.l_hyb_a.item() + terms.l_hyb_b.item())).epsilon(1e-9));

        // tie-free swap invariance of the pseudo-label classes
        if (fdcheck::detail::csc_margins_ok(pa, pb, n, 64, 1e-6)) {
            auto fwd = build_pseudo_label(pred_from_probs(pa, n, h, w), pred_from_probs(pb, n, h, w));
            auto rev = build_pseudo_label(pred_from_probs(pb, n, h, w), pred_from_probs(pa, n, h, w));
            CHECK(fwd.classes == rev.classes);
        }
    }

    // consistent confident one-hot branches: csc ~ 0
    const int n = 2, h = 2, w = 2;
    std::vector<double> onehot(size_t(n * h * w), 1e-9);
    for (int p = 0; p < 4; ++p) onehot[size_t((p % 2) * 4 + p)] = 1.0 - 1e-9;
    auto same = csc_loss(pred_from_probs(onehot, n, h, w), pred_from_probs(onehot, n, h, w));
    CHECK(same.l_csc.item() == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("disagreement never decreases the csc loss") {
    // start from two identical confident predictions, then flip argmaxes of
    // pixels in branch A one at a time
    const int n = 3, h = 2, w = 2;
    std::vector<double> base(size_t(n * h * w), 0.05);
    std::vector<int> cls = {0, 1, 2, 0};
    for (int p = 0; p < 4; ++p) base[size_t(cls[size_t(p)] * 4 + p)] = 0.9;
    double prev = csc_loss(pred_from_probs(base, n, h, w), pred_from_probs(base, n, h, w))
                      .l_csc.item();
    auto flipped = base;
    for (int p = 0; p < 4; ++p) {
        // flip pixel p in branch A to a different confident class
        const int from = cls[size_t(p)];
        const int to = (from + 1) % n;
        flipped[size_t(from * 4 + p)] = 0.05;
        flipped[size_t(to * 4 + p)] = 0.9;
        const double cur =
            csc_loss(pred_from_probs(flipped, n, h, w), pred_from_probs(base, n, h, w))
                .l_csc.item();
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
}

TEST_CASE("losses are nonnegative on random inputs") {
    Rng rng(79);
    for (int t = 0; t < 30; ++t) {
        auto f = random_tensor(rng, {3, 12, 12}, 0, 1, false);
        auto ir = random_tensor(rng, {3, 12, 12}, 0, 1, false);
        auto vis = random_tensor(rng, {3, 12, 12}, 0, 1, false);
        auto terms = fusion_loss(f, ir, vis, {20, 20, 10, 20});
        CHECK(terms.l_int.item() >= 0.0);
        CHECK(terms.l_grad.item() >= 0.0);
        CHECK(terms.l_ssim.item() >= 0.0);
        CHECK(terms.l_color.item() >= 0.0);
        CHECK(terms.total.item() >= 0.0);

        auto pa = fdcheck::detail::random_probs(rng, 3, 16);
        auto pb = fdcheck::detail::random_probs(rng, 3, 16);
        CHECK(csc_loss(pred_from_probs(pa, 3, 4, 4), pred_from_probs(pb, 3, 4, 4)).l_csc.item() >=
              0.0);
    }
}

TEST_CASE("loss gradients match finite differences") {
    for (const auto& sweep : fdcheck::loss_sweeps(8)) {
        INFO(sweep.name << " max_err=" << sweep.max_err);
        CHECK(sweep.ok);
    }
}
