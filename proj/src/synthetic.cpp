#include "psidiff/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "psidiff/numerics.hpp"

namespace psidiff {

namespace {

constexpr std::size_t kMaxSupport = std::size_t{1} << 20;

std::vector<double> dirichlet(int K, int support, Rng& rng) {
    if (support <= 0 || support > K) support = K;
    std::gamma_distribution<double> gamma(1.0, 1.0);
    std::vector<double> w(K, 0.0);
    for (int j = 0; j < support; ++j) w[j] = gamma(rng.engine()) + 1e-3;
    normalize(w);
    return w;
}

std::size_t support_size(int K, int L) {
    std::size_t n = 1;
    for (int l = 0; l < L; ++l) {
        n *= static_cast<std::size_t>(K);
        if (n > kMaxSupport) throw std::invalid_argument("synthetic source: K^L exceeds 2^20, cannot enumerate");
    }
    return n;
}

std::vector<int> decode(std::size_t code, int K, int L) {
    std::vector<int> seq(L);
    for (int l = L - 1; l >= 0; --l) {
        seq[l] = static_cast<int>(code % K);
        code /= K;
    }
    return seq;
}

}  // namespace

void SyntheticSource::validate() const {
    require(K_ >= 2 && L_ >= 1, "synthetic source: need K >= 2 and L >= 1");
    require(initial_.size() == static_cast<std::size_t>(K_) && is_simplex(initial_, 1e-12),
            "synthetic source: weights must be a simplex over K");
    if (kind_ == SourceKind::markov) {
        require(transition_.size() == static_cast<std::size_t>(K_), "synthetic source: transition must be K x K");
        for (const auto& row : transition_) {
            require(row.size() == static_cast<std::size_t>(K_) && is_simplex(row, 1e-12),
                    "synthetic source: transition rows must be simplices");
        }
    }
}

SyntheticSource SyntheticSource::iid(std::vector<double> weights, int L) {
    SyntheticSource s;
    s.kind_ = SourceKind::iid;
    s.K_ = static_cast<int>(weights.size());
    s.L_ = L;
    s.initial_ = std::move(weights);
    s.validate();
    return s;
}

SyntheticSource SyntheticSource::markov(std::vector<double> initial, std::vector<std::vector<double>> transition,
                                        int L) {
    SyntheticSource s;
    s.kind_ = SourceKind::markov;
    s.K_ = static_cast<int>(initial.size());
    s.L_ = L;
    s.initial_ = std::move(initial);
    s.transition_ = std::move(transition);
    s.validate();
    return s;
}

SyntheticSource SyntheticSource::random_iid(int K, int L, Rng& rng, int support) {
    return iid(dirichlet(K, support, rng), L);
}

SyntheticSource SyntheticSource::random_markov(int K, int L, Rng& rng, int support) {
    auto init = dirichlet(K, support, rng);
    std::vector<std::vector<double>> rows(K);
    for (auto& row : rows) row = dirichlet(K, support, rng);
    return markov(std::move(init), std::move(rows), L);
}

std::vector<std::string> SyntheticSource::fixture_names() { return {"skewed4", "pair4", "masked4"}; }

SyntheticSource SyntheticSource::fixture(const std::string& name) {
    if (name == "skewed4") return iid({0.5, 0.25, 0.15, 0.1}, 1);
    if (name == "pair4") {
        return markov({0.4, 0.3, 0.2, 0.1},
                      {{0.7, 0.1, 0.1, 0.1}, {0.2, 0.5, 0.2, 0.1}, {0.25, 0.25, 0.25, 0.25}, {0.1, 0.1, 0.1, 0.7}}, 2);
    }
    if (name == "masked4") return iid({0.6, 0.3, 0.1, 0.0}, 1);
    throw std::invalid_argument("unknown source fixture: " + name);
}

double SyntheticSource::probability(std::span<const int> seq) const {
    require(seq.size() == static_cast<std::size_t>(L_), "synthetic source: sequence length mismatch");
    double p = 1.0;
    for (int l = 0; l < L_; ++l) {
        const int v = seq[l];
        require(v >= 0 && v < K_, "synthetic source: token out of range");
        if (kind_ == SourceKind::iid || l == 0) {
            p *= initial_[v];
        } else {
            p *= transition_[seq[l - 1]][v];
        }
    }
    return p;
}

std::vector<int> SyntheticSource::sample(Rng& rng) const {
    std::vector<int> seq(L_);
    for (int l = 0; l < L_; ++l) {
        const auto& w = (kind_ == SourceKind::iid || l == 0) ? initial_ : transition_[seq[l - 1]];
        std::discrete_distribution<int> d(w.begin(), w.end());
        seq[l] = d(rng.engine());
    }
    return seq;
}

std::vector<double> SyntheticSource::marginal(int position) const {
    require(position >= 0 && position < L_, "synthetic source: position out of range");
    std::vector<double> p = initial_;
    if (kind_ == SourceKind::iid) return p;
    for (int l = 1; l <= position; ++l) {
        std::vector<double> next(K_, 0.0);
        for (int a = 0; a < K_; ++a) {
            for (int b = 0; b < K_; ++b) next[b] += p[a] * transition_[a][b];
        }
        p = std::move(next);
    }
    return p;
}

nlohmann::json SyntheticSource::to_json() const {
    nlohmann::json j;
    j["kind"] = kind_ == SourceKind::iid ? "iid" : "markov";
    j["L"] = L_;
    if (kind_ == SourceKind::iid) {
        j["weights"] = initial_;
    } else {
        j["initial"] = initial_;
        j["transition"] = transition_;
    }
    return j;
}

SyntheticSource SyntheticSource::from_json(const nlohmann::json& j) {
    require(j.is_object(), "source: expected an object");
    if (j.contains("fixture")) {
        require(j.size() == 1, "source: 'fixture' takes no other keys");
        return fixture(j.at("fixture").get<std::string>());
    }
    const auto kind = j.at("kind").get<std::string>();
    auto allow = [&](std::initializer_list<const char*> keys) {
        for (const auto& item : j.items()) {
            const bool ok = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; });
            if (!ok) throw std::invalid_argument("source: unknown key '" + item.key() + "'");
        }
    };
    if (kind == "iid") {
        allow({"kind", "L", "weights"});
        return iid(j.at("weights").get<std::vector<double>>(), j.at("L").get<int>());
    }
    if (kind == "markov") {
        allow({"kind", "L", "initial", "transition"});
        return markov(j.at("initial").get<std::vector<double>>(),
                      j.at("transition").get<std::vector<std::vector<double>>>(), j.at("L").get<int>());
    }
    if (kind == "random-iid" || kind == "random-markov") {
        allow({"kind", "K", "L", "seed", "support"});
        Rng rng(j.value("seed", std::uint64_t{0}));
        const int K = j.at("K").get<int>();
        const int L = j.at("L").get<int>();
        const int support = j.value("support", 0);
        return kind == "random-iid" ? random_iid(K, L, rng, support) : random_markov(K, L, rng, support);
    }
    throw std::invalid_argument("source: unknown kind '" + kind + "'");
}

std::size_t sequence_code(std::span<const int> seq, int K) {
    std::size_t code = 0;
    for (int v : seq) code = code * static_cast<std::size_t>(K) + static_cast<std::size_t>(v);
    return code;
}

Distribution enumerate_distribution(const SyntheticSource& source) {
    const std::size_t n = support_size(source.K(), source.L());
    Distribution d;
    d.sequences.reserve(n);
    d.probs.reserve(n);
    for (std::size_t code = 0; code < n; ++code) {
        d.sequences.push_back(decode(code, source.K(), source.L()));
        d.probs.push_back(source.probability(d.sequences.back()));
    }
    return d;
}

BayesOracleDenoiser::BayesOracleDenoiser(const SyntheticSource& source, const Prior& prior, bool factored,
                                         OracleTarget target)
    : prior_(prior), L_(source.L()), factored_(factored), target_(target) {
    require(source.K() == prior.K(), "oracle denoiser: source and prior disagree on K");
    const auto dist = enumerate_distribution(source);
    for (std::size_t i = 0; i < dist.probs.size(); ++i) {
        if (dist.probs[i] <= 0.0) continue;
        if (prior.is_masked()) {
            const auto& seq = dist.sequences[i];
            require(std::find(seq.begin(), seq.end(), prior.mask()) == seq.end(),
                    "oracle denoiser: data puts mass on the mask token");
        }
        support_.push_back(dist.sequences[i]);
        support_probs_.push_back(dist.probs[i]);
    }
    for (int l = 0; l < L_; ++l) marginals_.push_back(source.marginal(l));
}

void BayesOracleDenoiser::predict_factored(std::span<const int> z, double alpha, std::span<double> out) const {
    const int K = prior_.K();
    for (int l = 0; l < L_; ++l) {
        auto row = out.subspan(static_cast<std::size_t>(l) * K, K);
        double total = 0.0;
        for (int x = 0; x < K; ++x) {
            const double lik = (x == z[l] ? alpha : 0.0) + (1.0 - alpha) * prior_.prob(z[l]);
            row[x] = marginals_[l][x] * lik;
            total += row[x];
        }
        if (total > 0.0) {
            for (double& v : row) v /= total;
        } else {
            std::copy(marginals_[l].begin(), marginals_[l].end(), row.begin());
        }
    }
}

void BayesOracleDenoiser::predict(std::span<const int> z, double, double alpha, std::span<double> out) const {
    require(z.size() == static_cast<std::size_t>(L_), "oracle denoiser: length mismatch");
    require(out.size() == static_cast<std::size_t>(L_) * prior_.K(), "oracle denoiser: output size");
    require(alpha >= 0.0 && alpha <= 1.0, "oracle denoiser: alpha must lie in [0,1]");
    for (int v : z) prior_.check_token(v);
    posterior(z, alpha, out);
    if (target_ == OracleTarget::posterior_mean) return;
    const int K = prior_.K();
    for (int l = 0; l < L_; ++l) {
        auto row = out.subspan(static_cast<std::size_t>(l) * K, K);
        // A z_t the forward process cannot produce (the mask at alpha = 1)
        // has no reverse step to match; keep the posterior there.
        if ((1.0 - alpha) * prior_.prob(z[l]) <= 0.0 && row[z[l]] <= 0.0) continue;
        for (int x = 0; x < K; ++x) {
            if (row[x] > 0.0) row[x] /= (x == z[l] ? alpha : 0.0) + (1.0 - alpha) * prior_.prob(z[l]);
        }
        normalize(row);
    }
}

void BayesOracleDenoiser::posterior(std::span<const int> z, double alpha, std::span<double> out) const {
    if (factored_) {
        predict_factored(z, alpha, out);
        return;
    }
    const int K = prior_.K();
    std::fill(out.begin(), out.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        const auto& x = support_[i];
        double w = support_probs_[i];
        for (int l = 0; l < L_ && w > 0.0; ++l) {
            w *= (x[l] == z[l] ? alpha : 0.0) + (1.0 - alpha) * prior_.prob(z[l]);
        }
        if (w == 0.0) continue;
        total += w;
        for (int l = 0; l < L_; ++l) out[static_cast<std::size_t>(l) * K + x[l]] += w;
    }
    if (!(total > 0.0)) {
        // z_t is impossible under the source; fall back to per-position evidence.
        predict_factored(z, alpha, out);
        return;
    }
    for (double& v : out) v /= total;
}

}  // namespace psidiff
