#include "psidiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>

namespace psidiff {
namespace {

using nlohmann::json;

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& item : j.items()) {
        const bool ok = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; });
        if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
T read(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

PriorKind parse_prior(const std::string& s) {
    if (s == "uniform") return PriorKind::uniform;
    if (s == "masked") return PriorKind::masked;
    throw ConfigError("prior: expected 'uniform' or 'masked', got '" + s + "'");
}

DenoiserSpec parse_denoiser(const json& j, const std::string& where) {
    DenoiserSpec d;
    if (j.is_string()) {
        d.kind = j.get<std::string>();
    } else {
        allow_keys(j, {"kind", "power", "noise", "train_steps", "learning_rate", "buckets"}, where);
        d.kind = read(j, "kind", d.kind, where);
        d.power = read(j, "power", d.power, where);
        d.noise = read(j, "noise", d.noise, where);
        d.train_steps = read(j, "train_steps", d.train_steps, where);
        d.learning_rate = read(j, "learning_rate", d.learning_rate, where);
        d.buckets = read(j, "buckets", d.buckets, where);
    }
    if (d.kind != "oracle" && d.kind != "factored-oracle" && d.kind != "posterior-mean" && d.kind != "corrupted" &&
        d.kind != "tabular") {
        throw ConfigError(where + ": unknown denoiser kind '" + d.kind + "'");
    }
    if (!(d.power > 0.0) || d.noise < 0.0 || d.noise > 1.0 || d.buckets < 1) {
        throw ConfigError(where + ": invalid denoiser parameters");
    }
    return d;
}

template <typename Fn>
void wrap(const std::string& where, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

}  // namespace

Prior make_prior(PriorKind kind, int K) {
    return kind == PriorKind::uniform ? Prior::uniform(K) : Prior::masked(K);
}

std::string prior_name(PriorKind kind) { return kind == PriorKind::uniform ? "uniform" : "masked"; }

NoiseSchedule parse_noise_schedule(const json& j) {
    std::string kind;
    double eps = 1e-5;
    if (j.is_string()) {
        kind = j.get<std::string>();
    } else {
        allow_keys(j, {"kind", "eps"}, "schedule");
        kind = read<std::string>(j, "kind", "", "schedule");
        eps = read(j, "eps", eps, "schedule");
    }
    if (kind == "log-linear") {
        if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("schedule: eps must lie in (0, 0.5)");
        return NoiseSchedule::log_linear(eps);
    }
    if (kind == "cosine") return NoiseSchedule::cosine();
    throw ConfigError("schedule: unknown kind '" + kind + "'");
}

KappaSchedule parse_kappa_schedule(const json& j) {
    const std::string where = "kappa";
    const auto kind = read<std::string>(j, "kind", "", where);
    if (kind == "constant") allow_keys(j, {"kind", "value"}, where);
    else if (kind == "cap" || kind == "rescale") allow_keys(j, {"kind", "eta"}, where);
    else if (kind == "loop") allow_keys(j, {"kind", "eta", "t_on", "t_off"}, where);
    else allow_keys(j, {"kind", "value", "t_on", "t_off"}, where);
    auto need = [&](const char* key) {
        if (!j.contains(key)) throw ConfigError(where + ": '" + kind + "' requires '" + key + "'");
        return read(j, key, 0.0, where);
    };
    KappaSchedule out = KappaSchedule::constant(1.0);
    wrap(where, [&] {
        if (kind == "constant") {
            out = KappaSchedule::constant(need("value"));
        } else if (kind == "cap") {
            out = KappaSchedule::cap(need("eta"));
        } else if (kind == "rescale") {
            out = KappaSchedule::rescale(need("eta"));
        } else if (kind == "loop") {
            out = KappaSchedule::loop(need("eta"), need("t_on"), need("t_off"));
        } else if (kind == "window") {
            out = KappaSchedule::window(need("value"), need("t_on"), need("t_off"));
        } else {
            throw ConfigError(where + ": unknown kind '" + kind + "'");
        }
    });
    return out;
}

ExperimentConfig parse_config(const json& j) {
    allow_keys(j, {"prior", "source", "schedules", "kappa", "steps", "sampling", "verify", "curriculum", "nelbo",
                   "seeds", "output", "samples_output"},
               "config");
    ExperimentConfig c;
    c.document = j;
    c.hash = config_hash(j);

    if (j.contains("prior")) c.prior = parse_prior(read<std::string>(j, "prior", "", "config"));
    if (j.contains("source")) wrap("source", [&] { c.source = SyntheticSource::from_json(j.at("source")); });

    if (j.contains("schedules")) {
        const auto& s = j.at("schedules");
        allow_keys(s, {"training", "sampling", "gaussian"}, "schedules");
        if (s.contains("training")) c.training = parse_noise_schedule(s.at("training"));
        if (s.contains("sampling")) c.sampling_schedule = parse_noise_schedule(s.at("sampling"));
        if (s.contains("gaussian")) c.gaussian = parse_noise_schedule(s.at("gaussian"));
    }

    if (j.contains("kappa")) {
        const auto& k = j.at("kappa");
        if (!k.is_array() || k.empty()) throw ConfigError("kappa: expected a non-empty array");
        c.kappa.clear();
        for (const auto& item : k) c.kappa.push_back(parse_kappa_schedule(item));
    }

    c.steps = read(j, "steps", c.steps, "config");
    if (c.steps.empty()) throw ConfigError("steps: expected at least one step count");
    for (int s : c.steps) {
        if (s < 0) throw ConfigError("steps: step counts must be non-negative");
    }

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        const std::string w = "sampling";
        allow_keys(s, {"nucleus_p", "greedy_final", "guidance_gamma", "high_precision_logits", "num_samples",
                       "trajectories", "denoiser"},
                   w);
        auto& o = c.sampling;
        o.nucleus_p = read(s, "nucleus_p", o.nucleus_p, w);
        o.greedy_final = read(s, "greedy_final", o.greedy_final, w);
        o.guidance_gamma = read(s, "guidance_gamma", o.guidance_gamma, w);
        o.high_precision_logits = read(s, "high_precision_logits", o.high_precision_logits, w);
        o.num_samples = read(s, "num_samples", o.num_samples, w);
        o.trajectories = read(s, "trajectories", o.trajectories, w);
        if (s.contains("denoiser")) o.denoiser = parse_denoiser(s.at("denoiser"), "sampling.denoiser");
        if (!(o.nucleus_p > 0.0 && o.nucleus_p <= 1.0)) throw ConfigError("sampling.nucleus_p must lie in (0, 1]");
        if (o.num_samples == 0) throw ConfigError("sampling.num_samples must be positive");
    }

    if (j.contains("verify")) {
        const auto& s = j.at("verify");
        const std::string w = "verify";
        allow_keys(s, {"K", "T", "priors", "random_kappa_trials"}, w);
        auto& o = c.verify;
        o.K = read(s, "K", o.K, w);
        o.T = read(s, "T", o.T, w);
        if (s.contains("priors")) {
            o.priors.clear();
            for (const auto& p : s.at("priors")) o.priors.push_back(parse_prior(p.get<std::string>()));
        }
        o.random_kappa_trials = read(s, "random_kappa_trials", o.random_kappa_trials, w);
        for (int K : o.K) {
            if (K < 2 || K > 64) throw ConfigError("verify.K: vocabulary sizes must lie in [2, 64]");
        }
        for (int T : o.T) {
            if (T < 1 || T > 4096) throw ConfigError("verify.T: step counts must lie in [1, 4096]");
        }
    }

    if (j.contains("curriculum")) {
        const auto& s = j.at("curriculum");
        const std::string w = "curriculum";
        allow_keys(s, {"K", "k", "tau", "t", "trials", "naive_trials", "z_trials", "memory_probes"}, w);
        auto& o = c.curriculum;
        o.K = read(s, "K", o.K, w);
        o.k = read(s, "k", o.k, w);
        o.tau = read(s, "tau", o.tau, w);
        o.t = read(s, "t", o.t, w);
        o.trials = read(s, "trials", o.trials, w);
        o.naive_trials = read(s, "naive_trials", o.naive_trials, w);
        o.z_trials = read(s, "z_trials", o.z_trials, w);
        o.memory_probes = read(s, "memory_probes", o.memory_probes, w);
        if (o.trials == 0) throw ConfigError("curriculum.trials must be positive");
        for (double t : o.t) {
            if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("curriculum.t: times must lie in [0, 1]");
        }
    }

    if (j.contains("nelbo")) {
        const auto& s = j.at("nelbo");
        const std::string w = "nelbo";
        allow_keys(s, {"n_mc", "sequences", "estimators", "curriculum", "n_terms", "cache", "denoiser"}, w);
        auto& o = c.nelbo;
        o.n_mc = read(s, "n_mc", o.n_mc, w);
        o.sequences = read(s, "sequences", o.sequences, w);
        o.estimators = read(s, "estimators", o.estimators, w);
        o.n_terms = read(s, "n_terms", o.n_terms, w);
        o.cache = read(s, "cache", o.cache, w);
        if (s.contains("denoiser")) o.denoiser = parse_denoiser(s.at("denoiser"), "nelbo.denoiser");
        if (s.contains("curriculum")) {
            const auto& cu = s.at("curriculum");
            allow_keys(cu, {"k", "tau", "beta", "gamma"}, "nelbo.curriculum");
            o.curriculum_k = read(cu, "k", o.curriculum_k, w);
            o.curriculum_tau = read(cu, "tau", o.curriculum_tau, w);
            o.curriculum_beta = read(cu, "beta", o.curriculum_beta, w);
            o.curriculum_gamma = read(cu, "gamma", o.curriculum_gamma, w);
        }
        for (const auto& e : o.estimators) {
            if (e != "discrete" && e != "discrete-induced" && e != "gaussian" && e != "curriculum-sparse" &&
                e != "curriculum-dense") {
                throw ConfigError("nelbo.estimators: unknown estimator '" + e + "'");
            }
        }
        if (o.n_mc < 4 || o.n_mc % 2 != 0) throw ConfigError("nelbo.n_mc must be even and at least 4");
    }

    c.seeds = read(j, "seeds", c.seeds, "config");
    if (c.seeds.empty()) throw ConfigError("seeds: expected at least one seed");
    c.output = read(j, "output", c.output, "config");
    c.samples_output = read(j, "samples_output", c.samples_output, "config");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    return parse_config(j);
}

std::string config_hash(const json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), width_(header.size()) {
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw std::logic_error("CsvWriter: row width does not match the header");
    for (const auto& f : fields) {
        if (f.find_first_of(",\"\n\r") != std::string::npos) throw std::logic_error("CsvWriter: field needs quoting: " + f);
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os_ << ',';
        os_ << fields[i];
    }
    os_ << '\n';
}

}  // namespace psidiff
