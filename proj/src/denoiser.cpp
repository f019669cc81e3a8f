#include "psidiff/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "psidiff/numerics.hpp"
#include "psidiff/rng.hpp"

namespace psidiff {

namespace {

void softmax(std::span<double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double& x : v) {
        x = std::exp(x - m);
        s += x;
    }
    for (double& x : v) x /= s;
}

}  // namespace

void Denoiser::predict_soft(std::span<const SoftToken> z, double t, double alpha, std::span<double> out) const {
    std::vector<int> hard(z.size());
    for (std::size_t l = 0; l < z.size(); ++l) {
        const auto& s = z[l];
        require(!s.indices.empty() && s.indices.size() == s.weights.size(), "predict_soft: malformed soft token");
        const auto best = std::max_element(s.weights.begin(), s.weights.end()) - s.weights.begin();
        hard[l] = s.indices[best];
    }
    predict(hard, t, alpha, out);
}

std::vector<double> Denoiser::predict(std::span<const int> z, double t, double alpha) const {
    std::vector<double> out(z.size() * static_cast<std::size_t>(vocab_size()));
    predict(z, t, alpha, out);
    return out;
}

TeacherForcedDenoiser::TeacherForcedDenoiser(int K, std::vector<int> x) : K_(K), x_(std::move(x)) {
    for (int v : x_) require(v >= 0 && v < K_, "teacher-forced denoiser: token out of range");
}

void TeacherForcedDenoiser::predict(std::span<const int> z, double, double, std::span<double> out) const {
    require(z.size() == x_.size(), "teacher-forced denoiser: length mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t l = 0; l < x_.size(); ++l) out[l * K_ + x_[l]] = 1.0;
}

CorruptedDenoiser::CorruptedDenoiser(std::shared_ptr<const Denoiser> base, double power, double noise,
                                     std::vector<double> wrong)
    : base_(std::move(base)), power_(power), noise_(noise), wrong_(std::move(wrong)) {
    require(base_ != nullptr, "corrupted denoiser: null base");
    require(power_ > 0.0, "corrupted denoiser: power must be positive");
    require(noise_ >= 0.0 && noise_ <= 1.0, "corrupted denoiser: noise must lie in [0,1]");
    require(wrong_.size() == static_cast<std::size_t>(base_->vocab_size()) && is_simplex(wrong_),
            "corrupted denoiser: wrong distribution must be a simplex over K");
}

void CorruptedDenoiser::predict(std::span<const int> z, double t, double alpha, std::span<double> out) const {
    base_->predict(z, t, alpha, out);
    const std::size_t K = wrong_.size();
    for (std::size_t l = 0; l < z.size(); ++l) {
        auto row = out.subspan(l * K, K);
        for (double& v : row) v = std::pow(std::max(v, 0.0), power_);
        normalize(row);
        for (std::size_t j = 0; j < K; ++j) row[j] = (1.0 - noise_) * row[j] + noise_ * wrong_[j];
    }
}

EmbeddingDenoiser::EmbeddingDenoiser(int K, int dim, std::uint64_t seed, double scale)
    : K_(K), dim_(dim), scale_(scale), embed_(static_cast<std::size_t>(K) * dim),
      head_(static_cast<std::size_t>(K) * dim) {
    require(K >= 2 && dim >= 1, "embedding denoiser: bad shape");
    Rng rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : embed_) v = s * rng.normal();
    for (double& v : head_) v = s * rng.normal();
}

void EmbeddingDenoiser::readout(std::span<const double> e, std::span<double> out) const {
    for (int j = 0; j < K_; ++j) {
        double acc = 0.0;
        for (int c = 0; c < dim_; ++c) acc += head_[static_cast<std::size_t>(j) * dim_ + c] * e[c];
        out[j] = scale_ * acc;
    }
    softmax(out);
}

void EmbeddingDenoiser::predict(std::span<const int> z, double, double, std::span<double> out) const {
    for (std::size_t l = 0; l < z.size(); ++l) {
        require(z[l] >= 0 && z[l] < K_, "embedding denoiser: token out of range");
        readout(std::span<const double>(embed_).subspan(static_cast<std::size_t>(z[l]) * dim_, dim_),
                out.subspan(l * K_, K_));
    }
}

void EmbeddingDenoiser::predict_soft(std::span<const SoftToken> z, double, double, std::span<double> out) const {
    std::vector<double> e(dim_);
    for (std::size_t l = 0; l < z.size(); ++l) {
        std::fill(e.begin(), e.end(), 0.0);
        const auto& s = z[l];
        for (std::size_t i = 0; i < s.indices.size(); ++i) {
            const int idx = s.indices[i];
            require(idx >= 0 && idx < K_, "embedding denoiser: index out of range");
            const double w = s.weights[i];
            if (w == 0.0) continue;
            for (int c = 0; c < dim_; ++c) e[c] += w * embed_[static_cast<std::size_t>(idx) * dim_ + c];
        }
        readout(e, out.subspan(l * K_, K_));
    }
}

TabularDenoiser::TabularDenoiser(int K, int L, int buckets)
    : K_(K), L_(L), buckets_(buckets), table_(static_cast<std::size_t>(L) * K * buckets * K, 0.0) {
    require(K >= 2 && K <= 64 && L >= 1 && L <= 8 && buckets >= 1, "tabular denoiser: K <= 64, L <= 8");
}

int TabularDenoiser::bucket(double t) const {
    return std::clamp(static_cast<int>(t * buckets_), 0, buckets_ - 1);
}

std::span<double> TabularDenoiser::logits(int position, int token, int b) {
    const std::size_t row = (static_cast<std::size_t>(position) * K_ + token) * buckets_ + b;
    return std::span<double>(table_).subspan(row * K_, K_);
}

void TabularDenoiser::predict(std::span<const int> z, double t, double, std::span<double> out) const {
    require(z.size() == static_cast<std::size_t>(L_), "tabular denoiser: length mismatch");
    const int b = bucket(t);
    for (int l = 0; l < L_; ++l) {
        const std::size_t row = (static_cast<std::size_t>(l) * K_ + z[l]) * buckets_ + b;
        auto dst = out.subspan(static_cast<std::size_t>(l) * K_, K_);
        std::copy_n(table_.begin() + row * K_, K_, dst.begin());
        softmax(dst);
    }
}

}  // namespace psidiff
