#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "alloc_counter.hpp"
#include "psidiff/commands.hpp"
#include "psidiff/config.hpp"

namespace {

// Opens `path` for writing, or falls back to stdout when empty.
class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty()) return;
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw std::runtime_error("cannot open output '" + path + "'");
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Predictor-corrector discrete diffusion toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_path;
    unsigned threads = 1;
    bool no_timing = false;
    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--seed", seed, "replace the config's seeds with a single seed");
    app.add_option("--out", out_path, "output path (CSV; the cache sidecar for fit-transform)");
    app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));
    app.add_flag("--no-timing", no_timing, "write 0 in timing columns so reruns are byte-identical");

    auto* verify = app.add_subcommand("verify-marginals", "exact marginal-preservation check");
    auto* fit = app.add_subcommand("fit-transform", "build the transform cache sidecar");
    int K = 0;
    int n_terms = 150;
    std::string report_path;
    fit->add_option("--K", K, "vocabulary size")->required()->check(CLI::Range(2, 1 << 30));
    fit->add_option("--terms", n_terms, "series terms")->check(CLI::Range(1, 10000));
    fit->add_option("--report", report_path, "fit report CSV (default stdout)");
    auto* sweep = app.add_subcommand("sample-sweep", "TV and entropy versus sampling steps");
    std::string samples_path;
    sweep->add_option("--samples", samples_path, "line records of sampled sequences");
    auto* bench = app.add_subcommand("curriculum-bench", "sparse versus dense curriculum draws");
    auto* nelbo = app.add_subcommand("nelbo-check", "NELBO estimators");

    CLI11_PARSE(app, argc, argv);

    try {
        psidiff::CommandOptions opts;
        opts.seed = seed;
        opts.threads = threads;
        opts.timing = !no_timing;
        opts.log = &std::cerr;

        if (fit->parsed()) {
            if (out_path.empty()) throw psidiff::ConfigError("fit-transform: --out names the cache sidecar");
            Output report(report_path);
            return psidiff::cmd_fit_transform(K, n_terms, out_path, opts, report.stream());
        }

        const auto config = config_path.empty() ? psidiff::parse_config(nlohmann::json::object())
                                                : psidiff::load_config(config_path);
        Output csv(out_path.empty() ? config.output : out_path);

        if (verify->parsed()) return psidiff::cmd_verify_marginals(config, opts, csv.stream());
        if (sweep->parsed()) {
            const std::string path = samples_path.empty() ? config.samples_output : samples_path;
            std::unique_ptr<Output> samples;
            if (!path.empty()) {
                samples = std::make_unique<Output>(path);
                opts.samples = &samples->stream();
            }
            return psidiff::cmd_sample_sweep(config, opts, csv.stream());
        }
        if (bench->parsed()) {
            psidiff::MemoryProbe probe{[] { psidiff::alloc::begin(); },
                                       [] {
                                           psidiff::alloc::end();
                                           return psidiff::alloc::peak_bytes();
                                       }};
            opts.probe = &probe;
            return psidiff::cmd_curriculum_bench(config, opts, csv.stream());
        }
        if (nelbo->parsed()) return psidiff::cmd_nelbo_check(config, opts, csv.stream());
    } catch (const psidiff::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
