#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace psidiff {

// Relaxed input at one position: a weighted set of vocabulary rows.
struct SoftToken {
    std::span<const int> indices;
    std::span<const double> weights;
};

// Maps a noisy sequence to per-position clean-data predictions.
// `out` has L*K entries, row-major by position, each row a simplex.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual int vocab_size() const = 0;
    virtual void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const = 0;
    // Relaxed inputs. The default hardens each position to its heaviest index.
    virtual void predict_soft(std::span<const SoftToken> z, double t, double alpha, std::span<double> out) const;
    // False when predict must not be called from several threads at once.
    virtual bool thread_safe() const { return true; }

    std::vector<double> predict(std::span<const int> z, double t, double alpha) const;
};

// Predicts the given clean sequence as one-hot rows.
class TeacherForcedDenoiser : public Denoiser {
public:
    TeacherForcedDenoiser(int K, std::vector<int> x);
    using Denoiser::predict;
    int vocab_size() const override { return K_; }
    void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const override;

private:
    int K_;
    std::vector<int> x_;
};

// Wraps another denoiser and distorts it: out ∝ base^power mixed with a
// fixed wrong distribution with weight `noise`.
class CorruptedDenoiser : public Denoiser {
public:
    CorruptedDenoiser(std::shared_ptr<const Denoiser> base, double power, double noise, std::vector<double> wrong);
    using Denoiser::predict;
    int vocab_size() const override { return base_->vocab_size(); }
    void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const override;
    bool thread_safe() const override { return base_->thread_safe(); }

private:
    std::shared_ptr<const Denoiser> base_;
    double power_;
    double noise_;
    std::vector<double> wrong_;
};

// Fixed random embedding model: each position embeds its (soft) input through
// a K x dim table and reads out logits with another K x dim table.
// Positions are treated independently.
class EmbeddingDenoiser : public Denoiser {
public:
    EmbeddingDenoiser(int K, int dim, std::uint64_t seed, double scale = 3.0);
    using Denoiser::predict;
    int vocab_size() const override { return K_; }
    void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const override;
    void predict_soft(std::span<const SoftToken> z, double t, double alpha, std::span<double> out) const override;

    std::span<const double> embeddings() const { return embed_; }
    int dim() const { return dim_; }

private:
    void readout(std::span<const double> e, std::span<double> out) const;
    int K_;
    int dim_;
    double scale_;
    std::vector<double> embed_;
    std::vector<double> head_;
};

// Lookup-table denoiser: logits indexed by (position, noisy token, time bucket).
// Trained by stochastic gradient on the pointwise loss (see objectives).
class TabularDenoiser : public Denoiser {
public:
    TabularDenoiser(int K, int L, int buckets);
    using Denoiser::predict;
    int vocab_size() const override { return K_; }
    int length() const { return L_; }
    int buckets() const { return buckets_; }
    void predict(std::span<const int> z, double t, double alpha, std::span<double> out) const override;

    int bucket(double t) const;
    std::span<double> logits(int position, int token, int bucket);

private:
    int K_;
    int L_;
    int buckets_;
    std::vector<double> table_;
};

}  // namespace psidiff
