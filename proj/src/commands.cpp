#include "psidiff/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "psidiff/curriculum.hpp"
#include "psidiff/duality.hpp"
#include "psidiff/numerics.hpp"
#include "psidiff/objectives.hpp"
#include "psidiff/processes.hpp"
#include "psidiff/rng.hpp"
#include "psidiff/sampling.hpp"
#include "psidiff/stats.hpp"
#include "psidiff/synthetic.hpp"

namespace psidiff {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::uint64_t> seeds_of(const ExperimentConfig& c, const CommandOptions& opts) {
    if (opts.seed) return {*opts.seed};
    return c.seeds;
}

std::ostream& log_of(const CommandOptions& opts) {
    static std::ostream discard(nullptr);
    return opts.log ? *opts.log : discard;
}

std::string join_tokens(std::span<const int> seq, char sep) {
    std::string s;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(seq[i]);
    }
    return s;
}

std::vector<double> data_uniform(const Prior& prior) {
    std::vector<double> w(prior.K(), 1.0);
    if (prior.is_masked()) w[prior.mask()] = 0.0;
    normalize(w);
    return w;
}

std::vector<double> pooled_marginal(const SyntheticSource& source) {
    std::vector<double> m(source.K(), 0.0);
    for (int l = 0; l < source.L(); ++l) {
        const auto p = source.marginal(l);
        for (int j = 0; j < source.K(); ++j) m[j] += p[j] / source.L();
    }
    return m;
}

// log of the exact normalizer of the full latent that agrees with `d` on its
// top entries: the unsampled zero-mean entries are drawn below the k-th
// largest zero-mean value.
double completed_log_normalizer(const TopKDraw& d, const CurriculumParams& p, Rng& rng) {
    std::vector<double> terms;
    terms.reserve(d.values.size() + 2);
    for (double v : d.values) terms.push_back(v / p.tau);
    if (!d.delta) terms.push_back(d.special_value / p.tau);
    if (!std::isnan(d.displaced)) terms.push_back(d.displaced / p.tau);
    const double top = *std::max_element(terms.begin(), terms.end());
    double sum = 0.0;
    for (double v : terms) sum += std::exp(v - top);
    const std::int64_t remaining = static_cast<std::int64_t>(p.K) - 1 - p.k;
    if (remaining > 0) {
        const double cutoff = std::isnan(d.displaced) ? d.values.back() : d.displaced;
        for (std::int64_t i = 0; i < remaining; ++i) {
            sum += std::exp(truncated_normal_below(cutoff, p.sigma, rng) / p.tau - top);
        }
    }
    return top + std::log(sum);
}

}  // namespace

std::shared_ptr<const Denoiser> make_denoiser(const DenoiserSpec& spec, const SyntheticSource& source,
                                              const Prior& prior, const NoiseSchedule& training, std::uint64_t seed) {
    if (spec.kind == "oracle") return std::make_shared<BayesOracleDenoiser>(source, prior);
    if (spec.kind == "factored-oracle") return std::make_shared<BayesOracleDenoiser>(source, prior, true);
    if (spec.kind == "posterior-mean") {
        return std::make_shared<BayesOracleDenoiser>(source, prior, false, OracleTarget::posterior_mean);
    }
    if (spec.kind == "corrupted") {
        auto base = std::make_shared<BayesOracleDenoiser>(source, prior);
        return std::make_shared<CorruptedDenoiser>(base, spec.power, spec.noise, data_uniform(prior));
    }
    if (spec.kind == "tabular") {
        if (prior.is_masked()) throw ConfigError("denoiser: tabular training needs the uniform prior");
        auto model = std::make_shared<TabularDenoiser>(source.K(), source.L(), spec.buckets);
        TrainOptions t;
        t.steps = spec.train_steps;
        t.learning_rate = spec.learning_rate;
        t.seed = seed;
        train_tabular_denoiser(*model, source, training, t);
        return model;
    }
    throw ConfigError("denoiser: unknown kind '" + spec.kind + "'");
}

int cmd_verify_marginals(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv) {
    CsvWriter out(csv, {"config_hash", "prior", "K", "T", "schedule", "max_tv"});
    auto& log = log_of(opts);
    const std::uint64_t seed = seeds_of(config, opts).front();
    double worst = 0.0;
    for (PriorKind pk : config.verify.priors) {
        for (int K : config.verify.K) {
            const Prior prior = make_prior(pk, K);
            for (int T : config.verify.T) {
                auto emit = [&](const std::string& name, double dev) {
                    out.row({config.hash, prior_name(pk), std::to_string(K), std::to_string(T), name,
                             format_double(dev)});
                    worst = std::max(worst, std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev);
                };
                for (const auto& kappa : config.kappa) {
                    const TimeGrid grid = make_time_grid(T, config.sampling_schedule, kappa);
                    const auto kappas = step_kappas(grid, kappa);
                    emit(kappa.name(), psi_marginal_deviation(prior, grid, kappas));
                }
                const TimeGrid plain = make_time_grid(T, config.sampling_schedule, KappaSchedule::constant(1.0));
                for (int r = 0; r < config.verify.random_kappa_trials; ++r) {
                    Rng rng = Rng(seed).split(static_cast<std::uint64_t>(r));
                    std::vector<double> kappas(T);
                    for (double& k : kappas) k = rng.uniform();
                    emit("random-" + std::to_string(r), psi_marginal_deviation(prior, plain, kappas));
                }
            }
        }
    }
    const bool ok = worst < kMarginalTolerance;
    log << "verify-marginals: max deviation " << format_double(worst) << (ok ? " (ok)" : " exceeds 1e-10") << '\n';
    return ok ? 0 : 1;
}

int cmd_fit_transform(int K, int n_terms, const std::filesystem::path& cache_path, const CommandOptions& opts,
                      std::ostream& csv) {
    auto& log = log_of(opts);
    const std::string hash = config_hash(nlohmann::json{{"command", "fit-transform"}, {"K", K}, {"n_terms", n_terms}});
    const auto t0 = Clock::now();
    bool reused = false;
    const TransformCache cache = load_or_build_cache(cache_path, K, n_terms, &reused);
    const double elapsed = seconds_since(t0);

    double series_err = 0.0;
    for (int j = 0; j < 20; ++j) {
        const double a = cache.series_ceiling * j / 19.0;
        series_err = std::max(series_err, std::abs(transform_series(cache, a) - transform_quadrature(K, a)));
    }
    double poly_err = 0.0;
    for (int j = 0; j < 20; ++j) {
        const double a = (j + 0.5) / 20.0;
        poly_err = std::max(poly_err, std::abs(transform_polynomial(cache, a) - transform(cache, a)));
    }
    CsvWriter out(csv, {"config_hash", "K", "n_terms", "series_ceiling", "series_vs_quadrature_max_error",
                        "poly_max_error", "poly_fit_bound", "cache_reused", "build_seconds"});
    out.row({hash, std::to_string(K), std::to_string(n_terms), format_double(cache.series_ceiling),
             format_double(series_err), format_double(poly_err), format_double(cache.poly_max_abs_error),
             reused ? "1" : "0", format_double(opts.timing ? elapsed : 0.0)});
    log << "fit-transform: " << (reused ? "reused " : "wrote ") << cache_path.string() << '\n';
    return poly_err <= cache.poly_max_abs_error ? 0 : 1;
}

int cmd_sample_sweep(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv) {
    CsvWriter out(csv, {"config_hash", "sampler", "T", "tv_distance", "tv_stderr", "unigram_entropy",
                        "runtime_seconds", "seed"});
    const SyntheticSource& source = config.source;
    const Prior prior = make_prior(config.prior, source.K());
    const Distribution truth = enumerate_distribution(source);
    const std::size_t n = config.sampling.num_samples;
    const int L = source.L();

    std::shared_ptr<const Denoiser> unconditional;
    if (config.sampling.guidance_gamma != 1.0) {
        auto base = std::make_shared<BayesOracleDenoiser>(source, prior);
        unconditional = std::make_shared<CorruptedDenoiser>(base, 1.0, 1.0, pooled_marginal(source));
    }

    for (std::uint64_t seed : seeds_of(config, opts)) {
        const auto denoiser = make_denoiser(config.sampling.denoiser, source, prior, config.training, seed);
        const unsigned threads = denoiser->thread_safe() ? std::max(1u, opts.threads) : 1u;

        auto report = [&](const std::string& sampler, int T, const std::vector<std::vector<int>>& samples,
                          double elapsed) {
            std::vector<std::size_t> codes(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i) codes[i] = sequence_code(samples[i], source.K());
            const auto emp = empirical_distribution(codes, truth.probs.size());
            const auto tv = tv_with_stderr(emp, truth.probs, samples.size());
            out.row({config.hash, sampler, std::to_string(T), format_double(tv.tv), format_double(tv.stderr),
                     format_double(unigram_entropy(samples, source.K())), format_double(opts.timing ? elapsed : 0.0),
                     std::to_string(seed)});
            if (opts.samples) {
                for (std::size_t i = 0; i < samples.size(); ++i) {
                    *opts.samples << "final " << seed << ' ' << T << ' ' << sampler << ' ' << i << ' '
                                  << join_tokens(samples[i], ' ') << '\n';
                }
            }
        };

        for (int T : config.steps) {
            if (T == 0) {
                const auto t0 = Clock::now();
                const Rng root = Rng(seed).split(0);
                const auto pi = prior.probs();
                std::vector<std::vector<int>> samples(n, std::vector<int>(L));
                for (std::size_t i = 0; i < n; ++i) {
                    Rng r = root.split(i);
                    for (int& v : samples[i]) v = sample_gumbel(pi, r, true);
                }
                report("prior", 0, samples, seconds_since(t0));
                continue;
            }
            for (std::size_t ki = 0; ki < config.kappa.size(); ++ki) {
                const auto& kappa = config.kappa[ki];
                SamplerConfig sc;
                sc.steps = T;
                sc.kappa = kappa;
                sc.noise = config.sampling_schedule;
                sc.nucleus_p = config.sampling.nucleus_p;
                sc.greedy_final = config.sampling.greedy_final;
                sc.guidance_gamma = config.sampling.guidance_gamma;
                sc.high_precision_logits = config.sampling.high_precision_logits;
                sc.validate();
                const bool ancestral = kappa.kind() == KappaKind::constant && kappa.value() == 1.0;
                const std::string name = ancestral ? "ancestral" : kappa.name();

                const auto t0 = Clock::now();
                const Rng root = Rng(seed).split((static_cast<std::uint64_t>(T) << 16) | (ki + 1));
                std::vector<std::vector<int>> samples(n);
                parallel_for(n, threads, [&](std::size_t i) {
                    Rng r = root.split(i);
                    samples[i] = psi_sample_final(*denoiser, prior, sc, L, r, unconditional.get());
                });
                const double elapsed = seconds_since(t0);
                if (opts.samples) {
                    const std::size_t m = std::min(n, config.sampling.trajectories);
                    for (std::size_t i = 0; i < m; ++i) {
                        Rng r = root.split(i);
                        const auto traj = psi_sample(*denoiser, prior, sc, L, r, unconditional.get());
                        for (std::size_t s = 0; s < traj.states.size(); ++s) {
                            *opts.samples << "step " << seed << ' ' << T << ' ' << name << ' ' << i << ' '
                                          << format_double(traj.times[s]) << ' ' << join_tokens(traj.states[s], ' ')
                                          << '\n';
                        }
                    }
                }
                report(name, T, samples, elapsed);
            }
        }
    }
    return 0;
}

int cmd_curriculum_bench(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv) {
    CsvWriter out(csv, {"config_hash", "K", "k", "tau", "t", "trials", "ks_statistic_per_rank", "z_rel_err_p50",
                        "z_rel_err_p99", "ns_per_draw", "bytes_peak"});
    auto& log = log_of(opts);
    const auto& cc = config.curriculum;
    const std::uint64_t seed = seeds_of(config, opts).front();
    const int o = 0;
    bool ok = true;
    std::uint64_t setting = 0;
    for (int K : cc.K) {
        for (int k : cc.k) {
            if (k < 1 || k > K) throw ConfigError("curriculum: k must lie in [1, K]");
            for (double tau : cc.tau) {
                for (double t : cc.t) {
                    const Rng base = Rng(seed).split(setting++);
                    const auto params = CurriculumParams::at(K, k, tau, config.gaussian.alpha(t));
                    const std::size_t n = cc.trials;
                    const std::size_t m = cc.naive_trials ? cc.naive_trials : cc.trials;

                    std::vector<std::vector<double>> sparse(k, std::vector<double>(n));
                    std::size_t sparse_delta = 0;
                    Rng rs = base.split(0);
                    const auto t0 = Clock::now();
                    for (std::size_t i = 0; i < n; ++i) {
                        const TopKDraw d = draw_sparse_softmax(params, o, rs);
                        for (int j = 0; j < k; ++j) sparse[j][i] = d.log_weights[j];
                        sparse_delta += d.delta;
                    }
                    const double ns = opts.timing ? 1e9 * seconds_since(t0) / static_cast<double>(n) : 0.0;

                    std::vector<std::vector<double>> naive(k, std::vector<double>(m));
                    std::size_t naive_delta = 0;
                    Rng rn = base.split(1);
                    for (std::size_t i = 0; i < m; ++i) {
                        const TopKDraw d = draw_dense_softmax(params, o, rn);
                        for (int j = 0; j < k; ++j) naive[j][i] = d.log_weights[j];
                        naive_delta += d.delta;
                    }

                    std::string ks_field;
                    const double crit = ks_critical_value(n, m, 0.01);
                    for (int j = 0; j < k; ++j) {
                        const double ks = ks_two_sample(sparse[j], naive[j]);
                        if (j) ks_field += ';';
                        ks_field += format_double(ks);
                        if (ks > crit) {
                            log << "curriculum-bench: K=" << K << " k=" << k << " tau=" << tau << " t=" << t
                                << " rank " << j + 1 << " KS " << ks << " above critical " << crit << '\n';
                        }
                    }
                    const double ps = static_cast<double>(sparse_delta) / static_cast<double>(n);
                    const double pn = static_cast<double>(naive_delta) / static_cast<double>(m);
                    const double se = std::sqrt(ps * (1 - ps) / n + pn * (1 - pn) / m);
                    if (std::abs(ps - pn) > 3.0 * se && se > 0.0) {
                        log << "curriculum-bench: delta frequency " << ps << " vs " << pn << " beyond 3 SE\n";
                    }

                    std::vector<double> rel(std::max<std::size_t>(cc.z_trials, 1));
                    Rng rz = base.split(2);
                    for (std::size_t i = 0; i < cc.z_trials; ++i) {
                        const TopKDraw d = draw_sparse_softmax(params, o, rz);
                        rel[i] = std::abs(std::expm1(d.log_normalizer - completed_log_normalizer(d, params, rz)));
                    }

                    std::size_t sparse_peak = 0;
                    std::size_t dense_peak = 0;
                    if (opts.probe) {
                        Rng rp = base.split(3);
                        for (std::size_t i = 0; i < cc.memory_probes; ++i) {
                            opts.probe->begin();
                            { const TopKDraw d = draw_sparse_softmax(params, o, rp); }
                            sparse_peak = std::max(sparse_peak, opts.probe->end());
                            opts.probe->begin();
                            { const TopKDraw d = draw_dense_softmax(params, o, rp); }
                            dense_peak = std::max(dense_peak, opts.probe->end());
                        }
                        if (K >= 10 * k && !(sparse_peak < dense_peak)) {
                            ok = false;
                            log << "curriculum-bench: sparse peak " << sparse_peak << " bytes not below dense peak "
                                << dense_peak << " at K=" << K << '\n';
                        }
                    }
                    out.row({config.hash, std::to_string(K), std::to_string(k), format_double(tau), format_double(t),
                             std::to_string(n), ks_field, format_double(cc.z_trials ? quantile(rel, 0.5) : 0.0),
                             format_double(cc.z_trials ? quantile(rel, 0.99) : 0.0), format_double(ns),
                             std::to_string(sparse_peak)});
                }
            }
        }
    }
    return ok ? 0 : 1;
}

int cmd_nelbo_check(const ExperimentConfig& config, const CommandOptions& opts, std::ostream& csv) {
    CsvWriter out(csv, {"config_hash", "estimator", "sequence", "estimate", "stderr", "n_mc", "seed"});
    if (config.prior != PriorKind::uniform) throw ConfigError("nelbo-check: the NELBO estimators need the uniform prior");
    const auto& nc = config.nelbo;
    const SyntheticSource& source = config.source;
    const Prior prior = Prior::uniform(source.K());

    std::vector<std::vector<int>> sequences = nc.sequences;
    if (sequences.empty()) {
        const auto d = enumerate_distribution(source);
        const auto best = std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin();
        sequences.push_back(d.sequences[best]);
    }
    for (const auto& s : sequences) {
        if (static_cast<int>(s.size()) != source.L()) throw ConfigError("nelbo.sequences: wrong length");
        for (int v : s) {
            if (v < 0 || v >= source.K()) throw ConfigError("nelbo.sequences: token out of range");
        }
    }

    const bool need_cache = std::any_of(nc.estimators.begin(), nc.estimators.end(),
                                        [](const std::string& e) { return e != "discrete"; });
    std::optional<TransformCache> cache;
    if (need_cache) {
        cache = nc.cache.empty() ? build_transform_cache(source.K(), nc.n_terms)
                                 : load_or_build_cache(nc.cache, source.K(), nc.n_terms);
    }

    for (std::uint64_t seed : seeds_of(config, opts)) {
        const auto denoiser = make_denoiser(nc.denoiser, source, prior, config.training, seed);
        McOptions mc;
        mc.n_mc = nc.n_mc;
        mc.seed = seed;
        mc.threads = denoiser->thread_safe() ? std::max(1u, opts.threads) : 1u;
        for (const auto& seq : sequences) {
            for (const auto& name : nc.estimators) {
                Estimate e;
                if (name == "discrete") {
                    e = nelbo_discrete(seq, *denoiser, alpha_fn(config.training), mc);
                } else if (name == "discrete-induced") {
                    e = nelbo_discrete(seq, *denoiser, induced_alpha_fn(config.gaussian, *cache), mc);
                } else if (name == "gaussian") {
                    e = nelbo_gaussian_latents(seq, *denoiser, config.gaussian, *cache, mc);
                } else {
                    CurriculumLossParams p;
                    p.k = std::min(nc.curriculum_k, source.K());
                    p.tau = nc.curriculum_tau;
                    p.beta = nc.curriculum_beta;
                    p.gamma = nc.curriculum_gamma;
                    p.mode = name == "curriculum-sparse" ? CurriculumMode::sparse : CurriculumMode::dense;
                    e = curriculum_loss(seq, *denoiser, config.gaussian, *cache, p, mc);
                }
                out.row({config.hash, name, join_tokens(seq, '-'), format_double(e.estimate), format_double(e.stderr),
                         std::to_string(e.n_mc), std::to_string(seed)});
            }
        }
    }
    return 0;
}

}  // namespace psidiff
