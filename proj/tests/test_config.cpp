#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "ssvif/config.hpp"

using namespace ssvif;

TEST_CASE("empty config takes all defaults") {
    Config cfg = parse_config_text("");
    CHECK(cfg.n_classes == 15);
    CHECK(cfg.lambda1 == 20.0);
    CHECK(cfg.lambda2 == 20.0);
    CHECK(cfg.lambda3 == 10.0);
    CHECK(cfg.lambda4 == 20.0);
    CHECK(cfg.lr == 1e-4);
    CHECK(cfg.batch_size == 10);
    CHECK(cfg.crop == 64);
    CHECK(cfg.patience == 10);
    CHECK(cfg.scheduler == SchedulerKind::gdwa);
    CHECK(cfg.gdwa_temperature == 2.0);
    CHECK(cfg.fixed_wcsc == 0.1);
    CHECK(cfg.gdwa_norm_sample_every == 4);
    CHECK(cfg.dice_eps == 1e-6);
    CHECK(cfg.ce_normalization == CeNormalization::mean);
    CHECK(cfg.csc_enabled);
    CHECK(cfg.two_stage);
}

TEST_CASE("values parse with comments and whitespace") {
    Config cfg = parse_config_text(
        "# a comment\n"
        "lambda4 = 20   # trailing comment\n"
        "seed=123\n"
        "scheduler = dwa\n"
        "ce_normalization = sum\n"
        "crop = 32\n"
        "deterministic = false\n");
    CHECK(cfg.lambda4 == 20.0);
    CHECK(cfg.seed == 123);
    CHECK(cfg.scheduler == SchedulerKind::dwa);
    CHECK(cfg.ce_normalization == CeNormalization::sum);
    CHECK(cfg.crop == 32);
    CHECK_FALSE(cfg.deterministic);
}

TEST_CASE("unknown keys and bad values carry line numbers") {
    try {
        parse_config_text("seed = 1\nfrobnicate = 2\n");
        FAIL("expected throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("frobnicate") != std::string::npos);
    }

    try {
        parse_config_text("scheduler = frobnicate\n");
        FAIL("expected throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config_text("lr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("batch_size = 3.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("deterministic = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed = \n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("just a line\n"), ConfigError);
}

TEST_CASE("validation rejects nonsense") {
    CHECK_THROWS_AS(parse_config_text("lr = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("lambda2 = -3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_classes = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("crop = 30\n"), ConfigError); // not divisible by 4
    CHECK_THROWS_AS(parse_config_text("crop = 8\n"), ConfigError);  // below the SSIM window
    CHECK_THROWS_AS(parse_config_text("fixed_wcsc = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("patience = 0\n"), ConfigError);
}

TEST_CASE("echo round trips through the parser") {
    Config cfg = parse_config_text("seed = 9\nlr = 0.001\nscheduler = fixed\n");
    cfg.dataset_root = "/tmp/ds"; // echo emits every key; empty values do not parse
    Config back = parse_config_text(cfg.echo());
    CHECK(back.seed == cfg.seed);
    CHECK(back.lr == cfg.lr);
    CHECK(back.scheduler == cfg.scheduler);
    CHECK(back.crop == cfg.crop);
}

TEST_CASE("missing file is a config error") {
    CHECK_THROWS_AS(parse_config("/nonexistent/path.cfg"), ConfigError);
}
