#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <json.hpp>

#include "psidiff/numerics.hpp"
#include "psidiff/synthetic.hpp"

using namespace psidiff;

namespace {

double emission(const Prior& prior, int x, int z, double alpha) {
    return (x == z ? alpha : 0.0) + (1.0 - alpha) * prior.prob(z);
}

// Per-position posterior P(x^l | z) for a Markov source by forward-backward.
std::vector<double> forward_backward(const SyntheticSource& src, const Prior& prior, std::span<const int> z,
                                     double alpha) {
    const int K = src.K();
    const int L = src.L();
    std::vector<std::vector<double>> fwd(L, std::vector<double>(K)), bwd(L, std::vector<double>(K, 1.0));
    for (int x = 0; x < K; ++x) fwd[0][x] = src.initial()[x] * emission(prior, x, z[0], alpha);
    for (int l = 1; l < L; ++l)
        for (int b = 0; b < K; ++b) {
            double s = 0.0;
            for (int a = 0; a < K; ++a) s += fwd[l - 1][a] * src.transition()[a][b];
            fwd[l][b] = s * emission(prior, b, z[l], alpha);
        }
    for (int l = L - 2; l >= 0; --l)
        for (int a = 0; a < K; ++a) {
            double s = 0.0;
            for (int b = 0; b < K; ++b) s += src.transition()[a][b] * emission(prior, b, z[l + 1], alpha) * bwd[l + 1][b];
            bwd[l][a] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(L) * K);
    for (int l = 0; l < L; ++l) {
        double total = 0.0;
        for (int x = 0; x < K; ++x) total += out[l * K + x] = fwd[l][x] * bwd[l][x];
        for (int x = 0; x < K; ++x) out[l * K + x] /= total;
    }
    return out;
}

std::vector<std::vector<int>> all_sequences(int K, int L) {
    std::vector<std::vector<int>> out;
    std::vector<int> s(L, 0);
    while (true) {
        out.push_back(s);
        int l = L - 1;
        while (l >= 0 && ++s[l] == K) s[l--] = 0;
        if (l < 0) break;
    }
    return out;
}

}  // namespace

TEST(Enumerate, SmallExamples) {
    const auto d = enumerate_distribution(SyntheticSource::iid({0.5, 0.5}, 2));
    ASSERT_EQ(d.probs.size(), 4u);
    for (double p : d.probs) EXPECT_DOUBLE_EQ(p, 0.25);
    EXPECT_EQ(d.sequences[2], (std::vector<int>{1, 0}));

    const auto ident = SyntheticSource::markov({0.2, 0.3, 0.5}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 3);
    const auto e = enumerate_distribution(ident);
    for (std::size_t i = 0; i < e.probs.size(); ++i) {
        const auto& s = e.sequences[i];
        const bool constant = s[0] == s[1] && s[1] == s[2];
        if (!constant) EXPECT_EQ(e.probs[i], 0.0);
        else EXPECT_DOUBLE_EQ(e.probs[i], ident.initial()[s[0]]);
    }
}

TEST(Enumerate, RandomSourcesSumToOne) {
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const auto src = SyntheticSource::random_markov(2 + i % 4, 1 + i % 5, rng);
        const auto d = enumerate_distribution(src);
        EXPECT_NEAR(pairwise_sum(d.probs), 1.0, 1e-12);
        for (std::size_t j = 0; j < d.sequences.size(); ++j) EXPECT_EQ(sequence_code(d.sequences[j], src.K()), j);
    }
}

TEST(Enumerate, RejectsHugeSupport) {
    EXPECT_THROW(enumerate_distribution(SyntheticSource::iid({0.5, 0.5}, 21)), std::invalid_argument);
    EXPECT_NO_THROW(enumerate_distribution(SyntheticSource::iid({0.5, 0.5}, 20)));
}

TEST(Source, ValidationAndMarginals) {
    EXPECT_THROW(SyntheticSource::iid({0.5, 0.6}, 1), std::invalid_argument);
    EXPECT_THROW(SyntheticSource::iid({0.5, 0.5}, 0), std::invalid_argument);
    EXPECT_THROW(SyntheticSource::markov({1.0, 0.0}, {{1.0, 0.0}}, 2), std::invalid_argument);
    EXPECT_THROW(SyntheticSource::fixture("nope"), std::invalid_argument);
    const auto src = SyntheticSource::fixture("pair4");
    const auto d = enumerate_distribution(src);
    for (int l = 0; l < src.L(); ++l) {
        std::vector<double> m(src.K(), 0.0);
        for (std::size_t i = 0; i < d.probs.size(); ++i) m[d.sequences[i][l]] += d.probs[i];
        const auto got = src.marginal(l);
        for (int k = 0; k < src.K(); ++k) EXPECT_NEAR(got[k], m[k], 1e-14);
    }
}

TEST(Source, SamplesFollowProbabilities) {
    const auto src = SyntheticSource::fixture("pair4");
    Rng rng(2);
    std::vector<double> counts(16, 0.0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) counts[sequence_code(src.sample(rng), 4)] += 1.0;
    const auto d = enumerate_distribution(src);
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(counts[j] / n, d.probs[j], 4 * std::sqrt(d.probs[j] / n) + 1e-12);
}

TEST(Source, JsonRoundTripAndRejection) {
    Rng rng(3);
    for (const auto& src : {SyntheticSource::random_iid(3, 2, rng), SyntheticSource::random_markov(4, 3, rng)}) {
        const auto back = SyntheticSource::from_json(src.to_json());
        EXPECT_EQ(back.to_json(), src.to_json());
    }
    EXPECT_EQ(SyntheticSource::from_json({{"fixture", "skewed4"}}).to_json(),
              SyntheticSource::fixture("skewed4").to_json());
    const auto r1 = SyntheticSource::from_json({{"kind", "random-markov"}, {"K", 3}, {"L", 2}, {"seed", 9}});
    const auto r2 = SyntheticSource::from_json({{"kind", "random-markov"}, {"K", 3}, {"L", 2}, {"seed", 9}});
    EXPECT_EQ(r1.to_json(), r2.to_json());
    EXPECT_THROW(SyntheticSource::from_json({{"kind", "iid"}, {"L", 1}, {"weights", {1.0}}, {"extra", 1}}),
                 std::invalid_argument);
    EXPECT_THROW(SyntheticSource::from_json({{"kind", "zipf"}}), std::invalid_argument);
    EXPECT_THROW(SyntheticSource::from_json({{"fixture", "skewed4"}, {"L", 2}}), std::invalid_argument);
}

TEST(Source, RestrictedSupportLeavesTrailingCategoriesEmpty) {
    Rng rng(4);
    const auto src = SyntheticSource::random_markov(5, 2, rng, 4);
    for (int l = 0; l < 2; ++l) EXPECT_EQ(src.marginal(l)[4], 0.0);
    EXPECT_NO_THROW(BayesOracleDenoiser(src, Prior::masked(5)));
    const auto full = SyntheticSource::random_iid(5, 1, rng);
    EXPECT_THROW(BayesOracleDenoiser(full, Prior::masked(5)), std::invalid_argument);
}

TEST(Oracle, MatchesForwardBackwardOnMarkovChain) {
    Rng rng(5);
    const auto src = SyntheticSource::random_markov(3, 3, rng);
    for (const Prior& prior : {Prior::uniform(3), Prior::masked(4)}) {
        const auto s = prior.is_masked() ? SyntheticSource::random_markov(4, 3, rng, 3) : src;
        const BayesOracleDenoiser d(s, prior, false, OracleTarget::posterior_mean);
        for (const auto& z : all_sequences(prior.K(), 3)) {
            for (double a : {0.2, 0.5, 0.8}) {
                const auto got = d.predict(z, 0.5, a);
                const auto want = forward_backward(s, prior, z, a);
                for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-10);
            }
        }
    }
}

TEST(Oracle, LimitsOfTheSignalLevel) {
    const auto src = SyntheticSource::fixture("skewed4");
    const BayesOracleDenoiser d(src, Prior::uniform(4), false, OracleTarget::posterior_mean);
    for (int z = 0; z < 4; ++z) {
        const int zs[] = {z};
        EXPECT_EQ(d.predict(zs, 0.0, 1.0), one_hot(4, z));
        const auto far = d.predict(zs, 1.0, 0.0);
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(far[j], src.marginal(0)[j], 1e-15);
    }
}

TEST(Oracle, OutputsAreSimplices) {
    Rng rng(6);
    const auto src = SyntheticSource::random_markov(3, 4, rng);
    for (bool factored : {false, true}) {
        for (auto target : {OracleTarget::reverse_exact, OracleTarget::posterior_mean}) {
            const BayesOracleDenoiser d(src, Prior::uniform(3), factored, target);
            for (const auto& z : all_sequences(3, 4)) {
                const auto out = d.predict(z, 0.3, 0.37);
                for (int l = 0; l < 4; ++l) ASSERT_TRUE(is_simplex(std::span(out).subspan(l * 3, 3)));
            }
        }
    }
}

TEST(Oracle, FactoredIsExactForIidSources) {
    Rng rng(7);
    const auto src = SyntheticSource::random_iid(3, 3, rng);
    const BayesOracleDenoiser joint(src, Prior::uniform(3), false, OracleTarget::posterior_mean);
    const BayesOracleDenoiser fact(src, Prior::uniform(3), true, OracleTarget::posterior_mean);
    for (const auto& z : all_sequences(3, 3)) {
        const auto a = joint.predict(z, 0.5, 0.6);
        const auto b = fact.predict(z, 0.5, 0.6);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
    }
}

TEST(Oracle, ReverseTargetReproducesExactReverseMixture) {
    Rng rng(8);
    for (const bool masked : {false, true}) {
        const int K = masked ? 4 : 3;
        const Prior prior = masked ? Prior::masked(K) : Prior::uniform(K);
        const auto src = SyntheticSource::random_markov(K, 2, rng, masked ? K - 1 : 0);
        const BayesOracleDenoiser rev(src, prior);
        const BayesOracleDenoiser mean(src, prior, false, OracleTarget::posterior_mean);
        const double a_t = 0.3;
        const double a_s = 0.65;
        for (const auto& z : all_sequences(K, 2)) {
            const auto pm = mean.predict(z, 0.5, a_t);
            const auto xr = rev.predict(z, 0.5, a_t);
            for (int l = 0; l < 2; ++l) {
                // Exact: sum_x P(x^l | z) q(z_s | z_t, x^l).
                std::vector<double> want(K, 0.0), row(K);
                for (int x = 0; x < K; ++x) {
                    if (pm[l * K + x] == 0.0) continue;
                    reverse_posterior(prior, one_hot(K, x), z[l], a_s, a_t, row);
                    for (int j = 0; j < K; ++j) want[j] += pm[l * K + x] * row[j];
                }
                const auto got = reverse_posterior(prior, std::span(xr).subspan(l * K, K), z[l], a_s, a_t);
                for (int j = 0; j < K; ++j) ASSERT_NEAR(got[j], want[j], 1e-12) << masked;
            }
        }
    }
}

TEST(Oracle, RejectsBadQueries) {
    const auto src = SyntheticSource::fixture("pair4");
    const BayesOracleDenoiser d(src, Prior::uniform(4));
    EXPECT_THROW(d.predict(std::vector<int>{0}, 0.5, 0.5), std::invalid_argument);
    EXPECT_THROW(d.predict(std::vector<int>{0, 4}, 0.5, 0.5), std::invalid_argument);
    EXPECT_THROW(d.predict(std::vector<int>{0, 1}, 0.5, 1.5), std::invalid_argument);
    EXPECT_THROW(BayesOracleDenoiser(src, Prior::uniform(3)), std::invalid_argument);
}

TEST(Oracle, MaskAtFullSignalFallsBackToPosterior) {
    Rng rng(9);
    const Prior prior = Prior::masked(3);
    const auto src = SyntheticSource::random_iid(3, 1, rng, 2);
    const BayesOracleDenoiser d(src, prior);
    const int z[] = {2};
    const auto out = d.predict(z, 0.0, 1.0);
    EXPECT_TRUE(is_simplex(out));
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(out[j], src.marginal(0)[j], 1e-15);
}
