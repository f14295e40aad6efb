#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssvif/diagnostics.hpp"
#include "ssvif/errors.hpp"
#include "ssvif/rng.hpp"

using namespace ssvif;

namespace {

std::vector<float> randvec(Rng& rng, size_t n, double lo = -1, double hi = 1) {
    std::vector<float> v(n);
    for (auto& x : v) x = float(rng.uniform(lo, hi));
    return v;
}

} // namespace

TEST_CASE("constructed projection pairs") {
    std::vector<float> g = {1.0f, 2.0f, -0.5f, 3.0f};
    auto p = projection_coefficient(g, g);
    CHECK(p.alpha_cf == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.cos_phi == doctest::Approx(1.0).epsilon(1e-9));

    std::vector<float> a = {1.0f, 0.0f};
    std::vector<float> b = {0.0f, 1.0f};
    auto q = projection_coefficient(a, b);
    CHECK(q.alpha_cf == doctest::Approx(0.0));
    CHECK(q.cos_phi == doctest::Approx(0.0));

    std::vector<float> minus2(g.size());
    for (size_t i = 0; i < g.size(); ++i) minus2[i] = -2.0f * g[i];
    auto r = projection_coefficient(minus2, g);
    CHECK(r.alpha_cf == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(r.cos_phi == doctest::Approx(-1.0).epsilon(1e-9));

    CHECK_THROWS_AS(projection_coefficient(a, std::vector<float>{0.0f, 0.0f}), ContractError);
    CHECK_THROWS_AS(projection_coefficient(a, std::vector<float>{1.0f, 2.0f, 3.0f}),
                    DimensionError);
}

TEST_CASE("alpha relates to cosine by the norm ratio") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        auto gc = randvec(rng, 64);
        auto gf = randvec(rng, 64);
        auto p = projection_coefficient(gc, gf);
        double nc = 0, nf = 0;
        for (float v : gc) nc += double(v) * v;
        for (float v : gf) nf += double(v) * v;
        CHECK(std::abs(p.alpha_cf - std::sqrt(nc / nf) * p.cos_phi) < 1e-6);
        // sign agreement (conflict iff cosine negative iff alpha negative)
        CHECK((p.alpha_cf < 0) == (p.cos_phi < 0));
    }
}

TEST_CASE("cosine scale invariance and alpha linearity") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        auto g1 = randvec(rng, 32);
        auto g2 = randvec(rng, 32);
        const double a = rng.uniform(0.1, 10.0), b = rng.uniform(0.1, 10.0);
        std::vector<float> g1s(32), g2s(32);
        for (size_t i = 0; i < 32; ++i) {
            g1s[i] = float(a * g1[i]);
            g2s[i] = float(b * g2[i]);
        }
        CHECK(std::abs(projection_coefficient(g1s, g2s).cos_phi -
                       projection_coefficient(g1, g2).cos_phi) < 1e-6);

        // alpha(g1 + g2, f) == alpha(g1, f) + alpha(g2, f)
        auto f = randvec(rng, 32);
        std::vector<float> sum12(32);
        for (size_t i = 0; i < 32; ++i) sum12[i] = g1[i] + g2[i];
        CHECK(std::abs(projection_coefficient(sum12, f).alpha_cf -
                       projection_coefficient(g1, f).alpha_cf -
                       projection_coefficient(g2, f).alpha_cf) < 1e-6);
    }
}

TEST_CASE("report summarization") {
    ProjectionReport rep;
    std::vector<float> f = {1.0f, 1.0f};
    std::vector<float> plus = {2.0f, 2.0f};
    std::vector<float> minus = {-1.0f, -1.0f};
    rep.add(1, plus, f);  // alpha = 2
    rep.add(2, minus, f); // alpha = -1, conflicting
    auto s = summarize(rep);
    CHECK(s.count == 2);
    CHECK(s.mean_alpha == doctest::Approx(0.5));
    CHECK(s.conflict_fraction == doctest::Approx(0.5));

    // single record passthrough
    ProjectionReport one;
    one.add(3, plus, f);
    auto s1 = summarize(one);
    CHECK(s1.mean_alpha == doctest::Approx(2.0));
    CHECK(s1.conflict_fraction == doctest::Approx(0.0));

    // zero fusion gradient -> skipped record
    ProjectionReport skip;
    std::vector<float> zero = {0.0f, 0.0f};
    skip.add(4, plus, zero);
    CHECK(skip.records[0].skipped);
    CHECK_THROWS_AS(summarize(skip), ContractError);
    CHECK_THROWS_AS(summarize(ProjectionReport{}), ContractError);
}

TEST_CASE("alphas [1,-1] average to zero with half conflicts") {
    ProjectionReport rep;
    std::vector<float> f = {1.0f, 0.0f};
    std::vector<float> same = {1.0f, 0.0f};
    std::vector<float> anti = {-1.0f, 0.0f};
    rep.add(1, same, f);
    rep.add(2, anti, f);
    auto s = summarize(rep);
    CHECK(s.mean_alpha == doctest::Approx(0.0));
    CHECK(s.conflict_fraction == doctest::Approx(0.5));
}
