#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "psidiff/denoiser.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/schedules.hpp"
#include "psidiff/synthetic.hpp"

namespace psidiff {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DenoiserSpec {
    std::string kind = "oracle";  // oracle, factored-oracle, posterior-mean, corrupted, tabular
    double power = 3.0;           // corrupted: sharpen (>1) or flatten (<1)
    double noise = 0.2;           // corrupted: mass moved to a wrong simplex
    std::size_t train_steps = 20000;
    double learning_rate = 0.05;
    int buckets = 16;
};

struct SamplingSection {
    double nucleus_p = 1.0;
    bool greedy_final = false;
    double guidance_gamma = 1.0;
    bool high_precision_logits = true;
    std::size_t num_samples = 10000;
    std::size_t trajectories = 0;  // runs whose full trajectories are recorded
    DenoiserSpec denoiser;
};

struct VerifySection {
    std::vector<int> K = {2, 3, 4};
    std::vector<int> T = {2, 4, 8};
    std::vector<PriorKind> priors = {PriorKind::uniform, PriorKind::masked};
    int random_kappa_trials = 0;
};

struct CurriculumSection {
    std::vector<int> K = {1000};
    std::vector<int> k = {5};
    std::vector<double> tau = {1e-3};
    std::vector<double> t = {0.1, 0.5, 0.9};
    std::size_t trials = 100000;
    std::size_t naive_trials = 0;  // 0 means same as trials
    std::size_t z_trials = 10000;
    std::size_t memory_probes = 100;
};

struct NelboSection {
    std::size_t n_mc = 100000;
    std::vector<std::vector<int>> sequences;  // empty means the mode of the source
    std::vector<std::string> estimators = {"discrete-induced", "gaussian"};
    int curriculum_k = 2;
    double curriculum_tau = 1e-3;
    double curriculum_beta = 0.0;
    double curriculum_gamma = 1.0;
    int n_terms = 150;
    std::string cache;  // transform cache sidecar, optional
    DenoiserSpec denoiser;
};

struct ExperimentConfig {
    nlohmann::json document;  // canonical form, defaults filled in
    std::string hash;

    PriorKind prior = PriorKind::uniform;
    SyntheticSource source = SyntheticSource::fixture("skewed4");
    NoiseSchedule training = NoiseSchedule::log_linear();
    NoiseSchedule sampling_schedule = NoiseSchedule::log_linear();
    NoiseSchedule gaussian = NoiseSchedule::cosine();
    std::vector<KappaSchedule> kappa = {KappaSchedule::constant(1.0)};
    std::vector<int> steps = {16, 64, 256};
    SamplingSection sampling;
    VerifySection verify;
    CurriculumSection curriculum;
    NelboSection nelbo;
    std::vector<std::uint64_t> seeds = {0};
    std::string output;
    std::string samples_output;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

Prior make_prior(PriorKind kind, int K);
std::string prior_name(PriorKind kind);
NoiseSchedule parse_noise_schedule(const nlohmann::json& j);
KappaSchedule parse_kappa_schedule(const nlohmann::json& j);

// FNV-1a over the compact dump of a JSON document, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

// Shortest round-trip decimal form.
std::string format_double(double v);

// Comma-separated output with a header row; every row must match its width.
class CsvWriter {
public:
    CsvWriter(std::ostream& os, std::vector<std::string> header);
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& os_;
    std::size_t width_;
};

}  // namespace psidiff
