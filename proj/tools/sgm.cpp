// SPDX-License-Identifier: Apache-2.0
//
// sgm: train / sample / evaluate / run / verify / sweep / oracle-check.
// Exit codes: 0 success, 1 a check failed, 2 usage or input error,
// 3 runtime failure (divergence, non-finite state, I/O while writing).

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgm/sgm.hpp"
#include "sgm/suite.hpp"

namespace {

using namespace sgm;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kRuntime = 3;

struct Globals {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    unsigned threads = 0;
    std::string out = "results";
};

Config load_config(const Globals& g) {
    Config c = g.config_path.empty() ? Config() : Config::load(g.config_path);
    for (const auto& o : g.overrides) c.apply_override(o);
    if (g.seed_given) c.set("run.seed", std::to_string(g.seed));
    return c;
}

bool is_write_error(const std::string& what) {
    return what.find("cannot write") != std::string::npos || what.find("short write") != std::string::npos ||
           what.find("cannot create") != std::string::npos;
}

std::string out_path(const Globals& g, const std::string& name) { return g.out + "/" + name; }

int cmd_train(const Globals& g) {
    const Config c = load_config(g);
    const ExperimentConfig e = experiment_from_config(c);
    const Rng root(e.seed);
    const Matrix data = run_stage("data", [&] { return e.target.sample(root.substream(stream::kData), e.schedule.n); });
    const TimeSchedule sched = run_stage("schedule", [&] { return build_schedule(e.schedule); });
    ScoreModel model(sched, e.forward.sigma);
    const auto logs = run_stage("train", [&] { return train_all(model, data, root.substream(stream::kTrain), e.train); });
    ensure_directory(g.out);
    write_text(out_path(g, "config.snapshot"), c.snapshot());
    const auto bytes = model.serialize();
    write_file_bytes(out_path(g, "model.ckpt"), bytes);
    write_train_log_csv(out_path(g, "train_log.csv"), logs);
    nlohmann::json summary = train_summary_json(logs, model.total_parameters());
    summary["config_hash"] = e.config_hash;
    summary["checkpoint_hash"] = git_blob_hash(bytes);
    summary["seed"] = e.seed;
    write_json(out_path(g, "train_summary.json"), summary);
    std::cout << summary.dump(2) << "\n";
    return kOk;
}

int cmd_sample(const Globals& g, const std::string& model_path) {
    const Config c = load_config(g);
    const ExperimentConfig e = experiment_from_config(c);
    const TimeSchedule sched = build_schedule(e.schedule);
    const std::string path = model_path.empty() ? out_path(g, "model.ckpt") : model_path;
    const ScoreModel model = ScoreModel::load(path, sched);
    const auto gen = run_stage("generate", [&] {
        return generate(as_score_fn(model), e.sample_run(sched), e.paths(), Rng(e.seed).substream(stream::kGenerate),
                        e.config_hash);
    });
    ensure_directory(g.out);
    write_text(out_path(g, "config.snapshot"), c.snapshot());
    Provenance prov = gen.provenance;
    prov.wall_s = 0.0;
    if (e.sample_format == "csv")
        write_samples_csv(out_path(g, "samples.csv"), gen.samples);
    else
        write_samples_bin(out_path(g, "samples.bin"), out_path(g, "samples.json"), gen.samples, prov);
    std::cout << provenance_json(prov).dump(2) << "\n";
    return kOk;
}

int cmd_evaluate(const Globals& g, const std::string& samples_path, const std::string& model_path) {
    const Config c = load_config(g);
    const ExperimentConfig e = experiment_from_config(c);
    const std::string sp = samples_path.empty() ? out_path(g, "samples.bin") : samples_path;
    std::string sidecar = sp;
    if (sidecar.size() > 4 && sidecar.substr(sidecar.size() - 4) == ".bin") sidecar.resize(sidecar.size() - 4);
    sidecar += ".json";
    const Matrix samples = read_samples_bin(sp, sidecar);
    const Rng root(e.seed);
    const Matrix fresh = e.target.sample(root.substream(stream::kFresh), samples.rows());
    const Matrix fresh_alt = e.target.sample(root.substream(stream::kFreshAlt), samples.rows());
    const Rng proj = root.substream(stream::kProjections);
    nlohmann::json m;
    m["config_hash"] = e.config_hash;
    m["seed"] = e.seed;
    m["samples_hash"] = git_blob_hash(read_file_bytes(sp));
    m["w1"] = w1_by_method(samples, fresh, e.w1_method, e.projections, proj).to_json(e.seed);
    m["noise_floor"] = w1_by_method(fresh_alt, fresh, e.w1_method, e.projections, proj).to_json(e.seed);
    if (samples.rows() >= 2) m["moments"] = moment_report(samples).to_json();
    if (!model_path.empty()) {
        const TimeSchedule sched = build_schedule(e.schedule);
        const ScoreModel model = ScoreModel::load(model_path, sched);
        const ScoreOracle oracle(e.target, e.forward);
        const Rng fr = root.substream(stream::kFisher);
        const Estimate f = sum_estimates(fisher_by_interval(as_score_fn(model), oracle, sched, fr, e.fisher_mc, e.fisher_nodes));
        const Estimate fb = sum_estimates(
            fisher_by_interval(stationary_score_fn(e.forward.sigma), oracle, sched, fr, e.fisher_mc, e.fisher_nodes));
        m["fisher_loss"] = {{"metric", "fisher_loss"}, {"value", f.value}, {"std_error", f.std_error}};
        m["fisher_loss_baseline"] = {{"metric", "fisher_loss"}, {"value", fb.value}, {"std_error", fb.std_error}};
        m["checkpoint_hash"] = git_blob_hash(read_file_bytes(model_path));
    }
    ensure_directory(g.out);
    write_json(out_path(g, "metrics.json"), m);
    std::cout << m.dump(2) << "\n";
    return kOk;
}

int cmd_run(const Globals& g) {
    const Config c = load_config(g);
    const ExperimentConfig e = experiment_from_config(c);
    PipelineOptions po;
    po.out_dir = g.out;
    po.config_snapshot = c.snapshot();
    po.keep_model = false;
    const PipelineResult r = run_pipeline(e, po);
    std::cout << r.metrics_json().dump(2) << "\n";
    return kOk;
}

int cmd_verify(const Globals& g, const std::string& suite) {
    const Config c = load_config(g);
    c.validate(config_schema());
    const std::uint64_t seed = c.get_uint("run.seed", 0);
    const SuiteResult r = run_verify_suite(suite, Rng(seed).substream(stream::kVerify), c);
    ensure_directory(g.out);
    write_json(out_path(g, "verify.json"), r.records);
    std::cout << r.records.dump(2) << "\n";
    return r.pass ? kOk : kCheckFailed;
}

int cmd_sweep(const Globals& g) {
    const Config c = load_config(g);
    const ExperimentConfig e = experiment_from_config(c);
    const SweepResult r = rate_sweep(e, g.out, c.snapshot());
    std::cout << sweep_csv(r.rows) << r.summary.to_json().dump(2) << "\n";
    return r.summary.monotone && r.summary.slope_negative ? kOk : kCheckFailed;
}

int cmd_oracle_check(const Globals& g) {
    const Config c = load_config(g);
    c.validate(config_schema());
    const std::uint64_t seed = c.get_uint("run.seed", 0);
    SuiteResult r;
    suite_oracle(r, Rng(seed).substream(stream::kVerify));
    ensure_directory(g.out);
    write_json(out_path(g, "oracle_check.json"), r.records);
    std::cout << r.records.dump(2) << "\n";
    return r.pass ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-based generative modeling: training, sampling, evaluation and checks", "sgm"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "key = value configuration file");
    app.add_option("--set", g.overrides, "override, section.key=value (repeatable)");
    auto* seed_opt = app.add_option("--seed", g.seed, "master seed (overrides run.seed)");
    app.add_option("--threads", g.threads, "worker threads (0: hardware concurrency)");
    app.add_option("--out", g.out, "output directory")->capture_default_str();

    std::string model_path, samples_path, suite = "all";
    auto* train = app.add_subcommand("train", "sample data, build the schedule and train all interval networks");
    auto* sample = app.add_subcommand("sample", "generate samples from a trained checkpoint");
    sample->add_option("--model", model_path, "checkpoint (default <out>/model.ckpt)");
    auto* evaluate = app.add_subcommand("evaluate", "W1 against a fresh target sample, Fisher loss if --model is given");
    evaluate->add_option("--samples", samples_path, "samples.bin (default <out>/samples.bin)");
    evaluate->add_option("--model", model_path, "checkpoint for the Fisher loss");
    auto* run = app.add_subcommand("run", "train, sample and evaluate in one pass");
    auto* verify = app.add_subcommand("verify", "run the frozen verification suite");
    verify->add_option("--suite", suite, "all, denoising, reversal, stability or oracle")->capture_default_str();
    auto* sweep = app.add_subcommand("sweep", "rate sweep over the configured n grid");
    auto* oracle_check = app.add_subcommand("oracle-check", "oracle properties A-D on the benchmark");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kUsage;
    }
    g.seed_given = seed_opt->count() > 0;
    set_threads(g.threads);

    try {
        if (*train) return cmd_train(g);
        if (*sample) return cmd_sample(g, model_path);
        if (*evaluate) return cmd_evaluate(g, samples_path, model_path);
        if (*run) return cmd_run(g);
        if (*verify) return cmd_verify(g, suite);
        if (*sweep) return cmd_sweep(g);
        if (*oracle_check) return cmd_oracle_check(g);
    } catch (const Error& e) {
        std::cerr << "sgm: " << e.what() << "\n";
        const bool input_error = e.code() == ErrorCode::Config || e.code() == ErrorCode::InvalidParams ||
                                 e.code() == ErrorCode::FormatVersionMismatch ||
                                 e.code() == ErrorCode::CorruptChecksum ||
                                 (e.code() == ErrorCode::Io && !is_write_error(e.what()));
        return input_error ? kUsage : kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "sgm: " << e.what() << "\n";
        return kRuntime;
    }
    std::cerr << app.help();
    return kUsage;
}
