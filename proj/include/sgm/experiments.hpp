// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipeline (data → schedule → train → generate → evaluate) and the
// rate sweep over n. Random streams hang off Rng(seed) by stage tag, so every
// stage is reproducible on its own and independent of the worker count.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgm/config.hpp"
#include "sgm/error.hpp"
#include "sgm/forward.hpp"
#include "sgm/io.hpp"
#include "sgm/metrics.hpp"
#include "sgm/oracle.hpp"
#include "sgm/sampler.hpp"
#include "sgm/schedule.hpp"
#include "sgm/scorenet.hpp"
#include "sgm/targets.hpp"
#include "sgm/trainer.hpp"

namespace sgm {

namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kGenerate = 3;
inline constexpr std::uint64_t kFresh = 4;
inline constexpr std::uint64_t kFreshAlt = 5;
inline constexpr std::uint64_t kFisher = 6;
inline constexpr std::uint64_t kProjections = 7;
inline constexpr std::uint64_t kBootstrap = 8;
inline constexpr std::uint64_t kVerify = 9;
}  // namespace stream

struct ExperimentConfig {
    std::string target_name = "two_gaussian";
    MixtureTarget target = presets::two_gaussian(3);
    ForwardSpec forward;
    ScheduleParams schedule;
    TrainConfig train;

    std::size_t n_paths = 0;  ///< generated samples; 0 means n
    std::size_t n_steps = 256;
    Integrator integrator = Integrator::EulerMaruyama;
    DiffusionProfile profile = DiffusionProfile::ddpm();
    bool geometric_steps = false;
    double blowup_radius = 1e6;
    std::string sample_format = "bin";

    std::size_t n_eval = 0;  ///< fresh target sample size; 0 means n_paths
    std::string w1_method = "auto";
    std::size_t projections = kDefaultProjections;
    std::size_t fisher_mc = 2048;
    std::size_t fisher_nodes = 2;  ///< per fine interval

    std::vector<std::size_t> n_grid{512, 1024, 2048, 4096, 8192};
    std::size_t repetitions = 3;
    std::size_t bootstrap = 2000;

    std::uint64_t seed = 0;
    std::string config_hash;

    [[nodiscard]] std::size_t paths() const { return n_paths ? n_paths : schedule.n; }
    [[nodiscard]] std::size_t eval_size() const { return n_eval ? n_eval : paths(); }

    [[nodiscard]] SampleRun sample_run(const TimeSchedule& s) const {
        SampleRun run;
        run.t_low = s.t_low();
        run.t_high = s.t_high();
        run.sigma = forward.sigma;
        run.dim = target.dim();
        run.profile = profile;
        run.n_steps = n_steps;
        run.integrator = integrator;
        run.geometric_steps = geometric_steps;
        run.blowup_radius = blowup_radius;
        return run;
    }
};

/// Every accepted key, as full-match patterns over "section.key".
inline std::vector<std::string> config_schema() {
    return {
        R"(target\.(preset|d|offset|variance|components))",
        R"(target\.(weight|mean|cov|cov_diag)\.\d+)",
        R"(forward\.(sigma|schedule|ramp_start|ramp_slope))",
        R"(schedule\.(n|beta|C|C2|C_high|mode|width_clamp|depth_override|t_low|t_high|upsilon|widths))",
        R"(train\.(epochs|iterations|min_iterations|batch|learning_rate|final_lr_fraction|time_nodes|z_draws|control_variate|antithetic|penalty_weight|rescale_slack|lipschitz_probes|refit_draws|log_every))",
        R"(sample\.(n_paths|n_steps|integrator|profile|profile_c|profile_period|geometric_steps|blowup_radius|format))",
        R"(evaluate\.(n_eval|w1_method|projections|fisher_mc|fisher_nodes))",
        R"(sweep\.(n_grid|repetitions|bootstrap))",
        R"(verify\.[a-z_]+)",
        R"(oracle_check\.[a-z_]+)",
        R"(run\.seed)",
    };
}

inline MixtureTarget target_from_config(const Config& c, std::string* name = nullptr) {
    const std::size_t d = c.get_uint("target.d", 3);
    if (c.has("target.components")) {
        const std::size_t m = c.get_uint("target.components", 0);
        if (m == 0) throw Error(ErrorCode::Config, "target.components must be positive");
        std::vector<GaussianComponent> comps;
        for (std::size_t l = 0; l < m; ++l) {
            const std::string i = std::to_string(l);
            GaussianComponent g;
            g.weight = c.get_double("target.weight." + i, 1.0 / static_cast<double>(m));
            g.mean = c.get_list("target.mean." + i, Vector(d, 0.0));
            if (g.mean.size() != d) throw Error(ErrorCode::Config, "target.mean." + i + " must have d entries");
            if (c.has("target.cov." + i)) {
                const auto rows = c.get_rows("target.cov." + i);
                if (rows.size() != d) throw Error(ErrorCode::Config, "target.cov." + i + " must have d rows");
                g.covariance = Matrix(d, d);
                for (std::size_t a = 0; a < d; ++a) {
                    if (rows[a].size() != d) throw Error(ErrorCode::Config, "target.cov." + i + " must be d x d");
                    for (std::size_t b = 0; b < d; ++b) g.covariance(a, b) = rows[a][b];
                }
            } else {
                const Vector diag = c.get_list("target.cov_diag." + i, Vector(d, 1.0));
                if (diag.size() != d) throw Error(ErrorCode::Config, "target.cov_diag." + i + " must have d entries");
                g.covariance = Matrix(d, d);
                for (std::size_t a = 0; a < d; ++a) g.covariance(a, a) = diag[a];
            }
            comps.push_back(std::move(g));
        }
        if (name) *name = "custom";
        return MixtureTarget(std::move(comps));
    }
    const std::string preset = c.get_string("target.preset", "two_gaussian");
    if (name) *name = preset;
    if (preset == "two_gaussian")
        return presets::two_gaussian(d, c.get_double("target.offset", 1.5), c.get_double("target.variance", 0.25));
    if (preset == "isotropic_gaussian" || preset == "stationary") {
        const double sigma = c.get_double("forward.sigma", 1.0);
        const double var = preset == "stationary" ? sigma * sigma : c.get_double("target.variance", 1.0);
        return presets::isotropic_gaussian(d, var);
    }
    throw Error(ErrorCode::Config, "unknown target.preset '" + preset + "'");
}

inline DiffusionProfile profile_from_name(const std::string& name, double c, double period) {
    if (name == "ode") return DiffusionProfile::ode();
    if (name == "ddpm") return DiffusionProfile::ddpm();
    if (name == "constant") return DiffusionProfile::constant(c);
    if (name == "alternating") return DiffusionProfile::alternating(c, period);
    throw Error(ErrorCode::Config, "unknown sample.profile '" + name + "'");
}

inline Integrator integrator_from_name(const std::string& name) {
    if (name == "euler_maruyama" || name == "em") return Integrator::EulerMaruyama;
    if (name == "exponential") return Integrator::Exponential;
    throw Error(ErrorCode::Config, "unknown sample.integrator '" + name + "'");
}

inline ExperimentConfig experiment_from_config(const Config& c) {
    c.validate(config_schema());
    ExperimentConfig e;
    e.target = target_from_config(c, &e.target_name);
    const std::size_t d = e.target.dim();

    e.forward.sigma = c.get_double("forward.sigma", 1.0);
    const std::string fs = c.get_string("forward.schedule", "constant");
    if (fs == "constant")
        e.forward.schedule = NoiseSchedule::constant();
    else if (fs == "linear-ramp")
        e.forward.schedule = NoiseSchedule::linear_ramp(c.get_double("forward.ramp_start", 1.0),
                                                        c.get_double("forward.ramp_slope", 0.0));
    else
        throw Error(ErrorCode::Config, "unknown forward.schedule '" + fs + "'");
    e.forward.validate();

    auto& s = e.schedule;
    s.n = c.get_uint("schedule.n", 4096);
    s.beta = c.get_double("schedule.beta", 1.0);
    s.d = d;
    s.c = c.get_double("schedule.C", 1.0);
    s.c2 = c.get_double("schedule.C2", 1.0);
    s.c_high = c.get_double("schedule.C_high", 0.0);
    s.sigma = e.forward.sigma;
    const auto clamp = c.get_list("schedule.width_clamp", {4.0, 512.0});
    if (clamp.size() != 2 || clamp[0] < 1.0 || clamp[1] < clamp[0])
        throw Error(ErrorCode::Config, "schedule.width_clamp must be 'min, max' with 1 <= min <= max");
    s.width_min = static_cast<std::size_t>(clamp[0]);
    s.width_max = static_cast<std::size_t>(clamp[1]);
    s.depth = c.get_uint("schedule.depth_override", 0);
    const std::string mode = c.get_string("schedule.mode", "formula");
    if (mode == "formula" || mode == "paper") {
        s.mode = ScheduleMode::Formula;
    } else if (mode == "manual") {
        s.mode = ScheduleMode::Manual;
        s.t_low = c.get_double("schedule.t_low", 0.0);
        s.t_high = c.get_double("schedule.t_high", 0.0);
        for (double v : c.get_list("schedule.upsilon")) s.upsilon.push_back(static_cast<std::size_t>(v));
        for (double v : c.get_list("schedule.widths")) s.widths.push_back(static_cast<std::size_t>(v));
    } else {
        throw Error(ErrorCode::Config, "schedule.mode must be formula or manual");
    }

    auto& t = e.train;
    t.epochs = c.get_double("train.epochs", t.epochs);
    t.iterations = c.get_uint("train.iterations", t.iterations);
    t.min_iterations = c.get_uint("train.min_iterations", t.min_iterations);
    t.batch = c.get_uint("train.batch", t.batch);
    t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
    t.final_lr_fraction = c.get_double("train.final_lr_fraction", t.final_lr_fraction);
    t.time_nodes = c.get_uint("train.time_nodes", t.time_nodes);
    t.z_draws = c.get_uint("train.z_draws", t.z_draws);
    t.control_variate = c.get_bool("train.control_variate", t.control_variate);
    t.antithetic = c.get_bool("train.antithetic", t.antithetic);
    t.penalty_weight = c.get_double("train.penalty_weight", t.penalty_weight);
    t.rescale_slack = c.get_double("train.rescale_slack", t.rescale_slack);
    t.lipschitz_probes = c.get_uint("train.lipschitz_probes", t.lipschitz_probes);
    t.refit_draws = c.get_uint("train.refit_draws", t.refit_draws);
    t.log_every = c.get_uint("train.log_every", t.log_every);
    t.validate();

    e.n_paths = c.get_uint("sample.n_paths", 0);
    e.n_steps = c.get_uint("sample.n_steps", e.n_steps);
    e.integrator = integrator_from_name(c.get_string("sample.integrator", "euler_maruyama"));
    e.profile = profile_from_name(c.get_string("sample.profile", "ddpm"), c.get_double("sample.profile_c", 1.0),
                                  c.get_double("sample.profile_period", 1.0));
    e.geometric_steps = c.get_bool("sample.geometric_steps", false);
    e.blowup_radius = c.get_double("sample.blowup_radius", e.blowup_radius);
    e.sample_format = c.get_string("sample.format", "bin");
    if (e.sample_format != "bin" && e.sample_format != "csv")
        throw Error(ErrorCode::Config, "sample.format must be bin or csv");

    e.n_eval = c.get_uint("evaluate.n_eval", 0);
    e.w1_method = c.get_string("evaluate.w1_method", "auto");
    if (e.w1_method != "auto" && e.w1_method != "exact" && e.w1_method != "sliced")
        throw Error(ErrorCode::Config, "evaluate.w1_method must be auto, exact or sliced");
    e.projections = c.get_uint("evaluate.projections", e.projections);
    e.fisher_mc = c.get_uint("evaluate.fisher_mc", e.fisher_mc);
    e.fisher_nodes = c.get_uint("evaluate.fisher_nodes", e.fisher_nodes);

    const auto grid = c.get_list("sweep.n_grid", {512, 1024, 2048, 4096, 8192});
    e.n_grid.clear();
    for (double v : grid) e.n_grid.push_back(static_cast<std::size_t>(v));
    e.repetitions = c.get_uint("sweep.repetitions", 3);
    e.bootstrap = c.get_uint("sweep.bootstrap", 2000);

    e.seed = c.get_uint("run.seed", 0);
    e.config_hash = c.hash();
    return e;
}

/// Runs fn, prefixing any library error with the stage name.
template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
    }
}

inline W1Estimate w1_by_method(const Matrix& xs, const Matrix& ys, const std::string& method, std::size_t projections,
                               const Rng& rng) {
    if (method == "sliced") return w1_sliced(xs, ys, projections, rng);
    if (method == "exact") {
        W1Estimate e;
        e.value = w1_exact(xs, ys);
        e.method = "exact_assignment";
        e.n_points = xs.rows();
        return e;
    }
    return w1_auto(xs, ys, rng, projections);
}

/// Per-interval Fisher loss of s against the oracle; draws depend only on the
/// interval, so two candidates evaluated with the same rng are paired.
inline std::vector<Estimate> fisher_by_interval(const ScoreFn& s, const ScoreOracle& oracle, const TimeSchedule& sched,
                                                const Rng& rng, std::size_t n_mc, std::size_t nodes) {
    std::vector<Estimate> out(sched.interval_count());
    for (std::size_t f = 0; f < sched.interval_count(); ++f)
        out[f] = fisher_loss(s, oracle, sched.interval_start(f), sched.interval_end(f), rng.substream(f), n_mc, nodes);
    return out;
}

inline Estimate sum_estimates(const std::vector<Estimate>& v) {
    Estimate e;
    double var = 0.0;
    for (const auto& x : v) {
        e.value += x.value;
        var += x.std_error * x.std_error;
    }
    e.std_error = std::sqrt(var);
    return e;
}

struct PipelineResult {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string checkpoint_hash;
    std::uint64_t schedule_hash = 0;
    std::size_t total_parameters = 0;
    W1Estimate w1, w1_baseline, noise_floor;
    Estimate fisher, fisher_baseline;
    std::vector<Estimate> fisher_intervals, fisher_baseline_intervals;
    std::vector<double> interval_tau_k;  ///< τ_k of each fine interval's coarse block
    MomentReport moments;
    std::vector<IntervalLog> train_logs;
    std::optional<ScoreModel> model;
    Matrix samples;
    Provenance provenance;
    std::map<std::string, double> wall_s;  ///< per stage; kept out of metrics.json

    /// Deterministic record: equal seeds and configs give identical text.
    [[nodiscard]] nlohmann::json metrics_json() const {
        nlohmann::json per = nlohmann::json::array();
        for (std::size_t f = 0; f < fisher_intervals.size(); ++f)
            per.push_back({{"flat", f}, {"tau_k", interval_tau_k[f]}, {"model", fisher_intervals[f].value},
                           {"model_se", fisher_intervals[f].std_error}, {"baseline", fisher_baseline_intervals[f].value},
                           {"baseline_se", fisher_baseline_intervals[f].std_error}});
        return {{"n", n},
                {"seed", seed},
                {"seeds",
                 {{"data", {seed, stream::kData}}, {"train", {seed, stream::kTrain}},
                  {"generate", {seed, stream::kGenerate}}, {"fresh", {seed, stream::kFresh}},
                  {"fisher", {seed, stream::kFisher}}}},
                {"config_hash", config_hash},
                {"checkpoint_hash", checkpoint_hash},
                {"schedule_hash", hex64(schedule_hash)},
                {"total_parameters", total_parameters},
                {"w1", w1.to_json(seed)},
                {"w1_baseline", w1_baseline.to_json(seed)},
                {"noise_floor", noise_floor.to_json(seed)},
                {"fisher_loss", {{"metric", "fisher_loss"}, {"value", fisher.value}, {"std_error", fisher.std_error}}},
                {"fisher_loss_baseline",
                 {{"metric", "fisher_loss"}, {"value", fisher_baseline.value}, {"std_error", fisher_baseline.std_error}}},
                {"fisher_by_interval", per},
                {"moments", moments.to_json()}};
    }
};

struct PipelineOptions {
    std::string out_dir;               ///< empty: keep everything in memory
    std::string config_snapshot;       ///< written verbatim as config.snapshot
    bool evaluate_baseline = true;
    bool keep_model = true;
};

/// Data → schedule → train → generate → evaluate at sample size cfg.schedule.n.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt = {}) {
    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };
    if (cfg.forward.schedule.kind != NoiseSchedule::Kind::Constant)
        throw Error(ErrorCode::Config, "the training pipeline requires forward.schedule = constant");
    const Rng root(cfg.seed);
    PipelineResult r;
    r.n = cfg.schedule.n;
    r.seed = cfg.seed;
    r.config_hash = cfg.config_hash;
    const ScoreOracle oracle(cfg.target, cfg.forward);

    auto t0 = clock::now();
    const Matrix data = run_stage("data", [&] { return cfg.target.sample(root.substream(stream::kData), cfg.schedule.n); });
    r.wall_s["data"] = seconds_since(t0);

    const TimeSchedule sched = run_stage("schedule", [&] { return build_schedule(cfg.schedule); });
    r.schedule_hash = sched.hash();
    for (std::size_t f = 0; f < sched.interval_count(); ++f) r.interval_tau_k.push_back(sched.tau()[sched.interval(f).k]);

    t0 = clock::now();
    ScoreModel model(sched, cfg.forward.sigma);
    r.train_logs = run_stage("train", [&] { return train_all(model, data, root.substream(stream::kTrain), cfg.train); });
    r.total_parameters = model.total_parameters();
    const auto ckpt = model.serialize();
    r.checkpoint_hash = git_blob_hash(ckpt);
    r.wall_s["train"] = seconds_since(t0);

    t0 = clock::now();
    const SampleRun run = cfg.sample_run(sched);
    const Rng gen = root.substream(stream::kGenerate);
    auto generated = run_stage("generate", [&] { return generate(as_score_fn(model), run, cfg.paths(), gen, cfg.config_hash); });
    r.samples = std::move(generated.samples);
    r.provenance = generated.provenance;
    r.provenance.wall_s = 0.0;
    r.wall_s["generate"] = seconds_since(t0);

    t0 = clock::now();
    run_stage("evaluate", [&] {
        const std::size_t ne = cfg.eval_size();
        if (ne != r.samples.rows())
            throw Error(ErrorCode::InvalidParams, "evaluate.n_eval must equal the number of generated samples");
        const Matrix fresh = cfg.target.sample(root.substream(stream::kFresh), ne);
        const Matrix fresh_alt = cfg.target.sample(root.substream(stream::kFreshAlt), ne);
        const Rng proj = root.substream(stream::kProjections);
        r.w1 = w1_by_method(r.samples, fresh, cfg.w1_method, cfg.projections, proj);
        r.noise_floor = w1_by_method(fresh_alt, fresh, cfg.w1_method, cfg.projections, proj);
        const Rng fr = root.substream(stream::kFisher);
        r.fisher_intervals = fisher_by_interval(as_score_fn(model), oracle, sched, fr, cfg.fisher_mc, cfg.fisher_nodes);
        r.fisher = sum_estimates(r.fisher_intervals);
        if (opt.evaluate_baseline) {
            const ScoreFn base = stationary_score_fn(cfg.forward.sigma);
            const Matrix gb = generate(base, run, cfg.paths(), gen).samples;
            r.w1_baseline = w1_by_method(gb, fresh, cfg.w1_method, cfg.projections, proj);
            r.fisher_baseline_intervals = fisher_by_interval(base, oracle, sched, fr, cfg.fisher_mc, cfg.fisher_nodes);
            r.fisher_baseline = sum_estimates(r.fisher_baseline_intervals);
        }
        if (r.samples.rows() >= 2) r.moments = moment_report(r.samples);
        return 0;
    });
    r.wall_s["evaluate"] = seconds_since(t0);

    if (!opt.out_dir.empty()) {
        run_stage("persist", [&] {
            ensure_directory(opt.out_dir);
            const std::string dir = opt.out_dir + "/";
            write_text(dir + "config.snapshot", opt.config_snapshot);
            write_file_bytes(dir + "model.ckpt", ckpt);
            if (cfg.sample_format == "csv")
                write_samples_csv(dir + "samples.csv", r.samples);
            else
                write_samples_bin(dir + "samples.bin", dir + "samples.json", r.samples, r.provenance);
            write_json(dir + "metrics.json", r.metrics_json());
            write_train_log_csv(dir + "train_log.csv", r.train_logs);
            write_json(dir + "train_summary.json", train_summary_json(r.train_logs, r.total_parameters));
            write_json(dir + "timing.json", r.wall_s);
            return 0;
        });
    }
    if (opt.keep_model) r.model.emplace(std::move(model));
    return r;
}

// ---------------------------------------------------------------------------
// Rate sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double w1 = 0.0;
    double fisher_loss = 0.0;
    double noise_floor = 0.0;
    double wall_s = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw Error(ErrorCode::InvalidParams, "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Ordinary least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw Error(ErrorCode::InvalidParams, "slope needs at least two distinct x values");
    return sxy / sxx;
}

struct SweepSummary {
    std::vector<std::size_t> ns;
    std::vector<double> median_w1, median_noise_floor, median_fisher;
    double slope = 0.0, ci_low = 0.0, ci_high = 0.0;
    double theoretical_exponent = 0.0;  ///< −(β+1)/(2β+d), reported only
    std::size_t inversions = 0;
    bool monotone = false;      ///< at most one inversion
    bool slope_negative = false;  ///< 95% CI entirely below 0
    bool endpoint_trend = false;  ///< median at largest n ≤ median at smallest n

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"n", ns}, {"median_w1", median_w1}, {"median_noise_floor", median_noise_floor},
                {"median_fisher_loss", median_fisher}, {"slope", slope}, {"ci95", {ci_low, ci_high}},
                {"theoretical_exponent", theoretical_exponent}, {"inversions", inversions},
                {"monotone_up_to_one_inversion", monotone}, {"slope_ci_below_zero", slope_negative},
                {"endpoint_trend", endpoint_trend}, {"pass", monotone && slope_negative}};
    }
};

/// Summary over rows: per-n medians, log-log slope and a percentile bootstrap
/// CI obtained by resampling repetitions within each n.
inline SweepSummary summarize_sweep(const std::vector<SweepRow>& rows, double beta, std::size_t d,
                                    std::size_t n_boot, const Rng& rng) {
    std::map<std::size_t, std::vector<const SweepRow*>> by_n;
    for (const auto& r : rows) by_n[r.n].push_back(&r);
    if (by_n.size() < 2) throw Error(ErrorCode::InvalidParams, "sweep needs at least two n values");
    SweepSummary s;
    Vector logn, logw;
    std::vector<std::vector<double>> w1s;
    for (const auto& [n, rs] : by_n) {
        std::vector<double> w, fl, fi;
        for (const auto* r : rs) {
            w.push_back(r->w1);
            fl.push_back(r->noise_floor);
            fi.push_back(r->fisher_loss);
        }
        s.ns.push_back(n);
        s.median_w1.push_back(median(w));
        s.median_noise_floor.push_back(median(fl));
        s.median_fisher.push_back(median(fi));
        logn.push_back(std::log(static_cast<double>(n)));
        logw.push_back(std::log(s.median_w1.back()));
        w1s.push_back(std::move(w));
    }
    s.slope = ols_slope(logn, logw);
    for (std::size_t i = 1; i < s.median_w1.size(); ++i)
        if (s.median_w1[i] > s.median_w1[i - 1]) ++s.inversions;
    s.monotone = s.inversions <= 1;
    s.endpoint_trend = s.median_w1.back() <= s.median_w1.front();
    s.theoretical_exponent = -rate_exponent(beta, static_cast<double>(d));

    Vector slopes(n_boot);
    for (std::size_t b = 0; b < n_boot; ++b) {
        Rng r = rng.substream(b);
        Vector lw(w1s.size());
        for (std::size_t i = 0; i < w1s.size(); ++i) {
            std::vector<double> res(w1s[i].size());
            for (double& v : res) v = w1s[i][r.below(w1s[i].size())];
            lw[i] = std::log(median(std::move(res)));
        }
        slopes[b] = ols_slope(logn, lw);
    }
    if (n_boot > 0) {
        std::sort(slopes.begin(), slopes.end());
        s.ci_low = sorted_quantile(slopes, 0.025);
        s.ci_high = sorted_quantile(slopes, 0.975);
    } else {
        s.ci_low = s.ci_high = s.slope;
    }
    s.slope_negative = s.ci_high < 0.0;
    return s;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "n,seed,w1,fisher_loss,noise_floor,wall_s\n";
    for (const auto& r : rows)
        os << r.n << "," << r.seed << "," << r.w1 << "," << r.fisher_loss << "," << r.noise_floor << "," << r.wall_s << "\n";
    return os.str();
}

struct SweepResult {
    std::vector<SweepRow> rows;
    SweepSummary summary;
};

/// Repetition r runs the pipeline with seed cfg.seed + r at every n; data sets
/// for one repetition are nested across n.
inline SweepResult rate_sweep(const ExperimentConfig& cfg, const std::string& out_dir = {},
                              const std::string& snapshot = {}) {
    if (cfg.n_grid.size() < 4) throw Error(ErrorCode::InvalidParams, "rate sweep needs at least 4 grid points");
    if (cfg.repetitions < 3) throw Error(ErrorCode::InvalidParams, "rate sweep needs at least 3 repetitions");
    SweepResult res;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep)
        for (std::size_t n : cfg.n_grid) {
            ExperimentConfig c = cfg;
            c.schedule.n = n;
            c.seed = cfg.seed + rep;
            const auto t0 = std::chrono::steady_clock::now();
            PipelineOptions po;
            po.evaluate_baseline = false;
            po.keep_model = false;
            const PipelineResult pr = run_pipeline(c, po);
            res.rows.push_back({n, c.seed, pr.w1.value, pr.fisher.value, pr.noise_floor.value,
                                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
        }
    res.summary = summarize_sweep(res.rows, cfg.schedule.beta, cfg.target.dim(), cfg.bootstrap,
                                  Rng(cfg.seed).substream(stream::kBootstrap));
    if (!out_dir.empty()) {
        ensure_directory(out_dir);
        write_text(out_dir + "/config.snapshot", snapshot);
        write_text(out_dir + "/sweep.csv", sweep_csv(res.rows));
        nlohmann::json j = res.summary.to_json();
        j["config_hash"] = cfg.config_hash;
        j["seed"] = cfg.seed;
        j["repetitions"] = cfg.repetitions;
        write_json(out_dir + "/metrics.json", j);
    }
    return res;
}

}  // namespace sgm
