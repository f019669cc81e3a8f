#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "psidiff/numerics.hpp"
#include "psidiff/rng.hpp"

using namespace psidiff;

namespace {

// log Phi(x) through the long double complementary error function.
double reference_log_ndtr(double x) {
    const long double v = 0.5L * boost::math::erfc(-static_cast<long double>(x) / std::sqrt(2.0L));
    return static_cast<double>(std::log(v));
}

}  // namespace

TEST(LogNdtr, MatchesErfcAcrossRange) {
    for (double x = -35.0; x <= 8.0; x += 0.173) {
        const double ref = reference_log_ndtr(x);
        EXPECT_NEAR(log_ndtr(x), ref, 1e-13 * std::max(1.0, std::abs(ref))) << "x=" << x;
    }
}

TEST(LogNdtr, FarTailStaysFiniteAndAccurate) {
    for (double x : {-36.0, -40.0, -60.0, -100.0}) {
        const double ref = reference_log_ndtr(x);
        EXPECT_NEAR(log_ndtr(x), ref, 1e-12 * std::abs(ref)) << "x=" << x;
    }
    EXPECT_TRUE(std::isfinite(log_ndtr(-1e6)));
    EXPECT_NEAR(log_ndtr(-1e6), -0.5e12 - std::log(1e6) - 0.5 * std::log(2 * M_PI), 1e-3);
}

TEST(NormalQuantile, InvertsUpperTail) {
    for (double q : {0.5, 0.1, 1e-3, 1e-10, 1e-100, 1e-300}) {
        const double x = normal_upper_quantile(q);
        const double back = 0.5 * std::erfc(x / std::sqrt(2.0));
        EXPECT_NEAR(back / q, 1.0, 1e-10) << "q=" << q;
    }
    EXPECT_NEAR(normal_upper_quantile(0.5), 0.0, 1e-15);
}

TEST(LogSumExp, StableForLargeInputs) {
    const std::vector<double> v = {1000.0, 1000.0, 999.0};
    EXPECT_NEAR(log_sum_exp(v), 1000.0 + std::log(2.0 + std::exp(-1.0)), 1e-12);
    EXPECT_NEAR(log_add_exp(-1e4, -1e4), -1e4 + std::log(2.0), 1e-9);
    EXPECT_EQ(log_sum_exp(std::vector<double>{}), -std::numeric_limits<double>::infinity());
}

TEST(PairwiseSum, MatchesLongDoubleAccumulation) {
    Rng rng(1);
    std::vector<double> v(10001);
    for (double& x : v) x = rng.uniform() * 1e3 - 500.0;
    long double ref = 0.0L;
    for (double x : v) ref += x;
    EXPECT_NEAR(pairwise_sum(v), static_cast<double>(ref), 1e-9);
}

TEST(Normalize, RejectsZeroMass) {
    std::vector<double> p = {0.0, 0.0};
    EXPECT_THROW(normalize(p), NumericalError);
    std::vector<double> q = {1.0, 3.0};
    normalize(q);
    EXPECT_DOUBLE_EQ(q[1], 0.75);
}

TEST(Simplex, TotalVariationAndFloor) {
    const std::vector<double> p = {0.5, 0.5, 0.0};
    const std::vector<double> q = {0.0, 0.5, 0.5};
    EXPECT_TRUE(is_simplex(p));
    EXPECT_FALSE(is_simplex(std::vector<double>{0.5, 0.6}));
    EXPECT_FALSE(is_simplex(std::vector<double>{-0.1, 1.1}));
    EXPECT_DOUBLE_EQ(total_variation(p, q), 0.5);
    std::vector<double> f = {1.0, 0.0};
    floor_and_normalize(f, 1e-12);
    EXPECT_GT(f[1], 0.0);
    EXPECT_NEAR(f[0] + f[1], 1.0, 1e-15);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(100, 3,
                              [](std::size_t i) {
                                  if (i == 57) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}

TEST(Rng, SplitStreamsAreReproducibleAndDistinct) {
    const Rng root(42);
    Rng a = root.split(3);
    Rng b = root.split(3);
    Rng c = root.split(4);
    for (int i = 0; i < 10; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        EXPECT_NE(x, c.uniform());
    }
}

TEST(Rng, UniformIsInOpenInterval) {
    Rng rng(0);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}
