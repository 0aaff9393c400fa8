#include <doctest.h>

#include <cmath>

#include "kcal/error.hpp"
#include "kcal/loss.hpp"
#include "kcal/rng.hpp"
#include "support/oracles.hpp"

using namespace kcal;

TEST_CASE("mse hand cases and loop oracle") {
    std::vector<double> p{2, 4}, t{1, 2};
    CHECK(mse(p, t) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(mse(p, p) == 0.0);

    SplitMix64 rng(1);
    std::vector<double> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
        a[i] = rng.next_uniform(0, 500);
        b[i] = rng.next_uniform(0, 500);
    }
    CHECK(std::fabs(mse(a, b) - kcal::test::mse_oracle(a, b)) < 1e-9);
}

TEST_CASE("mae and rmse hand cases") {
    std::vector<double> p{100, 300}, t{150, 250};
    CHECK(mae(p, t) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(rmse(p, t) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(mae(p, p) == 0.0);
    CHECK(rmse(p, p) == 0.0);
}

TEST_CASE("rmse squared equals mse") {
    SplitMix64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng.next_below(64);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.next_uniform(0, 500);
            b[i] = rng.next_uniform(0, 500);
        }
        double r = rmse(a, b);
        CHECK(std::fabs(r * r - mse(a, b)) < 1e-9);
    }
}

TEST_CASE("vector losses validate their inputs") {
    std::vector<double> a{1, 2}, b{1};
    CHECK_THROWS_AS(mse(a, b), error);
    CHECK_THROWS_AS(mae(a, b), error);
    CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), error);
}

TEST_CASE("categorical cross-entropy") {
    std::vector<double> certain{0.0, 1.0, 0.0};
    CHECK(categorical_crossentropy(certain, 1) == 0.0);

    std::vector<double> uniform4(4, 0.25);
    CHECK(categorical_crossentropy(uniform4, 2) ==
          doctest::Approx(1.3862943611198906).epsilon(1e-9));

    // clamp keeps confident misses finite
    CHECK(categorical_crossentropy(certain, 0) ==
          doctest::Approx(-std::log(1e-12)).epsilon(1e-9));

    SplitMix64 rng(3);
    std::vector<double> simplex(101);
    double sum = 0.0;
    for (auto& v : simplex) {
        v = rng.next_double() + 1e-3;
        sum += v;
    }
    for (auto& v : simplex) v /= sum;
    int cls = static_cast<int>(rng.next_below(101));
    CHECK(categorical_crossentropy(simplex, cls) ==
          doctest::Approx(-std::log(simplex[static_cast<std::size_t>(cls)])).epsilon(1e-9));

    std::vector<double> not_simplex{0.5, 0.4};
    CHECK_THROWS_AS(categorical_crossentropy(not_simplex, 0), error);
    CHECK_THROWS_AS(categorical_crossentropy(uniform4, 4), error);
    CHECK_THROWS_AS(categorical_crossentropy(uniform4, -1), error);
}

TEST_CASE("saliency loss") {
    FloatMap a(7, 7, 0.0), b(7, 7, 1.0);
    CHECK(saliency_loss(a, a) == 0.0);
    CHECK(saliency_loss(a, b) == 1.0);

    SplitMix64 rng(4);
    FloatMap m(7, 7), h(7, 7);
    for (auto& v : m.v) v = rng.next_double();
    for (auto& v : h.v) v = rng.next_double();
    double expect = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
        expect += (m.v[i] - h.v[i]) * (m.v[i] - h.v[i]);
    expect /= static_cast<double>(m.size());
    CHECK(std::fabs(saliency_loss(m, h) - expect) < 1e-9);
    CHECK(saliency_loss(m, h) >= 0.0);
    CHECK(saliency_loss(m, h) <= 1.0);

    FloatMap wrong(6, 7, 0.0);
    CHECK_THROWS_AS(saliency_loss(m, wrong), error);
}

TEST_CASE("cyborg_weighted is a convex combination") {
    CHECK(cyborg_weighted(0.4, 100.0, 0.5) == doctest::Approx(50.2).epsilon(1e-12));
    CHECK(cyborg_weighted(0.4, 100.0, 1.0) == 100.0);
    CHECK(cyborg_weighted(0.4, 100.0, 0.0) == 0.4);

    SplitMix64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        double lm = rng.next_uniform(0, 1);
        double lc = rng.next_uniform(0, 1000);
        double alpha = rng.next_double();
        double v = cyborg_weighted(lm, lc, alpha);
        CHECK(v >= std::min(lm, lc) - 1e-12);
        CHECK(v <= std::max(lm, lc) + 1e-12);
        // equal weights: exactly the average
        CHECK(std::fabs(cyborg_weighted(lm, lc, 0.5) - (lm + lc) / 2.0) < 1e-9);
    }
    CHECK_THROWS_AS(cyborg_weighted(0.1, 0.1, 1.5), error);
    CHECK_THROWS_AS(cyborg_weighted(0.1, 0.1, -0.1), error);
}

TEST_CASE("cyborg_multiplied is a symmetric annihilating product") {
    CHECK(cyborg_multiplied(0.4, 100.0) == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(cyborg_multiplied(0.0, 12345.6) == 0.0);
    CHECK(cyborg_multiplied(12345.6, 0.0) == 0.0);

    SplitMix64 rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        double lm = rng.next_uniform(0, 1);
        double lc = rng.next_uniform(0, 1000);
        double c = rng.next_uniform(0, 10);
        CHECK(cyborg_multiplied(lm, lc) == cyborg_multiplied(lc, lm));
        CHECK(std::fabs(cyborg_multiplied(c * lm, lc) - c * cyborg_multiplied(lm, lc)) <
              1e-9 * std::max(1.0, c * lm * lc));
    }
}

TEST_CASE("relative improvement reproduces the self-consistent reference rows") {
    CHECK(relative_improvement(321.60, 240.65) == doctest::Approx(25.17).epsilon(0.0004));
    CHECK(relative_improvement(321.60, 229.67) == doctest::Approx(28.59).epsilon(0.0004));
    CHECK(relative_improvement(321.60, 228.13) == doctest::Approx(29.06).epsilon(0.0004));
    CHECK(relative_improvement(321.60, 301.09) == doctest::Approx(6.38).epsilon(0.002));
    CHECK(relative_improvement(321.60, 376.0) == doctest::Approx(-16.9).epsilon(0.001));
    CHECK(relative_improvement(5.0, 5.0) == 0.0);
    CHECK_THROWS_AS(relative_improvement(0.0, 1.0), error);
    CHECK_THROWS_AS(relative_improvement(-3.0, 1.0), error);
}

TEST_CASE("three published rows are inconsistent with the formula") {
    // the formula's own values, frozen; the printed figures differ
    CHECK(relative_improvement(321.60, 214.05) == doctest::Approx(33.4422).epsilon(1e-4));
    CHECK(std::fabs(relative_improvement(321.60, 214.05) - 32.18) > 0.5);

    CHECK(relative_improvement(321.60, 255.43) == doctest::Approx(20.5753).epsilon(1e-4));
    CHECK(std::fabs(relative_improvement(321.60, 255.43) - 25.91) > 0.5);

    CHECK(relative_improvement(321.60, 376.98) == doctest::Approx(-17.2201).epsilon(1e-4));
    CHECK(std::fabs(relative_improvement(321.60, 376.98) - (-14.69)) > 0.5);
}
