#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>

#include "psidiff/config.hpp"
#include "psidiff/denoiser.hpp"

namespace psidiff {

// Peak heap bytes of a code region. Supplied by the caller so the library
// itself does not replace the global allocator.
struct MemoryProbe {
    std::function<void()> begin;
    std::function<std::size_t()> end;  // returns the peak live bytes since begin
};

struct CommandOptions {
    std::optional<std::uint64_t> seed;  // replaces the config's seed list
    unsigned threads = 1;
    bool timing = true;                 // false writes 0 in timing columns
    std::ostream* samples = nullptr;    // line records of sampled sequences
    const MemoryProbe* probe = nullptr;
    std::ostream* log = nullptr;        // human-readable progress and verdicts
};

inline constexpr double kMarginalTolerance = 1e-10;

// Each returns the process exit code: 0 on success, 1 when a checked
// property fails.
int cmd_verify_marginals(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv);
int cmd_fit_transform(int K, int n_terms, const std::filesystem::path& cache_path, const CommandOptions& opts,
                      std::ostream& csv);
int cmd_sample_sweep(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv);
int cmd_curriculum_bench(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv);
int cmd_nelbo_check(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv);

std::shared_ptr<const Denoiser> make_denoiser(const DenoiserSpec& spec, const SyntheticSource& source,
                                              const Prior& prior, const NoiseSchedule& training, std::uint64_t seed);

}  // namespace psidiff
