#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssvif/gdwa.hpp"
#include "ssvif/rng.hpp"

using namespace ssvif;

TEST_CASE("worked example: g=(3,1), r=(1,1), T=2") {
    auto w = gdwa_weights(3.0, 1.0, 1.0, 1.0, 2.0);
    CHECK(std::abs(w.lambda_a - 0.75) < 1e-9);
    CHECK(std::abs(w.lambda_b - 0.25) < 1e-9);
    CHECK(std::abs(w.omega_csc - 1.0 / 3.0) < 1e-9);
}

TEST_CASE("full symmetry gives equal weights") {
    auto w = gdwa_weights(2.5, 2.5, 0.9, 0.9, 2.0);
    CHECK(std::abs(w.lambda_a - 0.5) < 1e-12);
    CHECK(std::abs(w.omega_csc - 1.0) < 1e-12);
}

TEST_CASE("slower-converging task gets more weight") {
    // g=(1,1), r=(0.5,1.0), T=1
    auto w = gdwa_weights(1.0, 1.0, 0.5, 1.0, 1.0);
    const double s_a = std::exp(0.5) / (std::exp(0.5) + std::exp(1.0));
    CHECK(std::abs(w.lambda_a - s_a) < 1e-12);
    CHECK(w.omega_csc == doctest::Approx(1.649).epsilon(1e-3));
    CHECK(w.lambda_b > w.lambda_a);
}

TEST_CASE("normalization, monotonicity, scale robustness on random inputs") {
    Rng rng(99);
    for (int t = 0; t < 1000; ++t) {
        const double ga = rng.uniform(1e-3, 10.0);
        const double gb = rng.uniform(1e-3, 10.0);
        const double ra = rng.uniform(0.3, 2.0);
        const double rb = rng.uniform(0.3, 2.0);
        const double temp = rng.uniform(0.5, 5.0);
        auto w = gdwa_weights(ga, gb, ra, rb, temp);
        CHECK(std::abs(w.lambda_a + w.lambda_b - 1.0) < 1e-9);
        CHECK(w.lambda_a > 0.0);
        CHECK(w.lambda_a < 1.0);
        CHECK(std::abs(w.omega_csc - w.lambda_b / w.lambda_a) < 1e-9);

        // lambda_b strictly increases in g_b
        auto w_up = gdwa_weights(ga, gb * 1.3, ra, rb, temp);
        CHECK(w_up.lambda_b > w.lambda_b);

        // lambda_b strictly increases in r_b
        auto w_rb = gdwa_weights(ga, gb, ra, rb + 0.2, temp);
        CHECK(w_rb.lambda_b > w.lambda_b);

        // joint rescale of both norms changes nothing
        const double c = rng.uniform(0.1, 100.0);
        auto w_scaled = gdwa_weights(c * ga, c * gb, ra, rb, temp);
        CHECK(std::abs(w_scaled.lambda_a - w.lambda_a) < 1e-9);
        CHECK(std::abs(w_scaled.omega_csc - w.omega_csc) < 1e-9);
    }
}

TEST_CASE("accumulation means and divergence guard") {
    GdwaConfig cfg;
    GdwaState st(cfg);
    st.accumulate_step(3.0, 1.0, 0.5, 0.7);
    CHECK(st.mean_norm_fusion() == doctest::Approx(3.0));
    CHECK(st.mean_norm_csc() == doctest::Approx(1.0));

    GdwaState st2(cfg);
    st2.accumulate_norms(2.0, 0.0);
    st2.accumulate_norms(4.0, 0.0);
    CHECK(st2.mean_norm_fusion() == doctest::Approx(3.0));
    CHECK(st2.mean_norm_csc() == doctest::Approx(0.0));

    CHECK_THROWS_AS(st.accumulate_losses(std::nan(""), 1.0), DivergenceError);
    CHECK_THROWS_AS(st.accumulate_norms(-1.0, 0.0), ContractError);
}

TEST_CASE("epoch update pipeline with first-epoch neutral rates") {
    GdwaConfig cfg;
    cfg.temperature = 2.0;
    GdwaState st(cfg);
    CHECK(st.omega_csc() == doctest::Approx(1.0)); // neutral before statistics

    st.accumulate_step(3.0, 1.0, 0.5, 0.8);
    const double omega = st.end_of_epoch_update();
    // first epoch: r = (1,1) by construction -> pure gradient-norm weighting
    CHECK(omega == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    // second epoch with equal norms: descent rates drive the weights
    st.accumulate_step(1.0, 1.0, 0.25, 0.8); // fusion halves, csc stalls
    const double omega2 = st.end_of_epoch_update();
    CHECK(omega2 > 1.0); // csc converges slower, gets more weight

    CHECK_THROWS_AS(GdwaState(cfg).end_of_epoch_update(), ContractError);
}

TEST_CASE("zero gradient norms fall back to equal weighting") {
    GdwaConfig cfg;
    GdwaState st(cfg);
    st.accumulate_step(0.0, 0.0, 1.0, 1.0);
    CHECK(st.end_of_epoch_update() == doctest::Approx(1.0));
}

TEST_CASE("omega clamps to [0.01, 100]") {
    auto w = gdwa_weights(1e9, 1e-9, 1.0, 1.0, 2.0);
    CHECK(w.omega_csc < 0.01); // raw value below the clamp
    GdwaConfig cfg;
    GdwaState st(cfg);
    st.accumulate_step(1e9, 1e-9, 1.0, 1.0);
    CHECK(st.end_of_epoch_update() == doctest::Approx(0.01));
}

TEST_CASE("dwa baseline") {
    CHECK(dwa_weights(1.0, 1.0, 2.0).omega_csc == doctest::Approx(1.0));
    CHECK(dwa_weights(0.9, 1.1, 2.0).omega_csc == doctest::Approx(std::exp(0.1)).epsilon(1e-12));
    CHECK(dwa_weights(1.0, 1.2, 2.0).omega_csc > 1.0);
    // lambda scale: sums to the number of tasks
    auto w = dwa_weights(0.7, 1.3, 1.5);
    CHECK(w.lambda_a + w.lambda_b == doctest::Approx(2.0));
}

TEST_CASE("fixed scheduler") {
    GdwaConfig cfg;
    cfg.kind = SchedulerKind::fixed;
    cfg.fixed_wcsc = 0.1;
    GdwaState st(cfg);
    CHECK(st.omega_csc() == doctest::Approx(0.1));
    st.accumulate_step(5.0, 2.0, 1.0, 1.0);
    CHECK(st.end_of_epoch_update() == doctest::Approx(0.1));

    cfg.fixed_wcsc = 1.0;
    GdwaState st1(cfg);
    CHECK(st1.omega_csc() == doctest::Approx(1.0));

    cfg.fixed_wcsc = 0.0;
    CHECK_THROWS_AS(GdwaState{cfg}, ConfigError);
}

TEST_CASE("state round trips through meta") {
    GdwaConfig cfg;
    GdwaState st(cfg);
    st.accumulate_step(3.0, 1.0, 0.5, 0.8);
    st.end_of_epoch_update();
    auto meta = st.to_meta();
    GdwaState back = GdwaState::from_meta(cfg, meta);
    CHECK(back.omega_csc() == st.omega_csc());
    CHECK(back.epoch_index() == st.epoch_index());

    // continuing from restored state matches the original trajectory exactly
    st.accumulate_step(1.0, 1.0, 0.4, 0.8);
    back.accumulate_step(1.0, 1.0, 0.4, 0.8);
    CHECK(st.end_of_epoch_update() == back.end_of_epoch_update());
}

TEST_CASE("scheduler name parsing") {
    CHECK(scheduler_from_string("gdwa") == SchedulerKind::gdwa);
    CHECK(scheduler_from_string("dwa") == SchedulerKind::dwa);
    CHECK(scheduler_from_string("fixed") == SchedulerKind::fixed);
    CHECK_THROWS_AS(scheduler_from_string("frobnicate"), ConfigError);
}
