// SPDX-License-Identifier: Apache-2.0
//
// Denoising score matching. The contrast of a candidate s at a data point x is
//   γ(s, x) = ∫ E_Z ‖s(t, e^{-t}x + σ_t Z) + Z/σ_t‖² dt,
// and each fine interval's network is fit by minimising the empirical mean of
// γ restricted to that interval, plus a hinge penalty on the one-sided
// Lipschitz constant, with Adam.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/forward.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"
#include "sgm/oracle.hpp"
#include "sgm/scorenet.hpp"

namespace sgm {

/// Any callable f(t, x, out) writing a score vector.
using ScoreFn = std::function<void(double, std::span<const double>, std::span<double>)>;

struct TrainConfig {
    std::size_t time_nodes = 4;     ///< midpoint nodes per interval for contrast_mc
    std::size_t z_draws = 1;        ///< Gaussian draws per (sample, node)
    bool control_variate = true;    ///< replace ‖Z‖²/σ_t² by its mean d/σ_t² in reported values
    double learning_rate = 2e-3;
    double final_lr_fraction = 0.1; ///< cosine decay to this fraction of the step size
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t iterations = 0;     ///< 0: derive from epochs
    double epochs = 4.0;            ///< passes over the data when iterations == 0
    std::size_t min_iterations = 100;
    std::size_t batch = 64;
    bool antithetic = true;         ///< pair each Z with −Z
    double penalty_weight = 1.0;    ///< μ in μ·max(0, λ̂ − V')²
    double rescale_slack = 1.2;     ///< post-training rescale if λ̂ > slack·V'
    std::size_t lipschitz_probes = 64;
    /// Fresh (x, t, Z) draws for the post-training output-scale refit; 0 disables it.
    std::size_t refit_draws = 8192;
    std::size_t log_every = 25;
    std::uint64_t seed = 0;

    void validate() const {
        if (time_nodes < 2) throw Error(ErrorCode::InvalidParams, "time_nodes must be at least 2");
        if (z_draws < 1 || batch < 1) throw Error(ErrorCode::InvalidParams, "z_draws and batch must be positive");
        if (!(learning_rate > 0.0) || penalty_weight < 0.0) throw Error(ErrorCode::InvalidParams, "bad optimizer settings");
    }

    [[nodiscard]] std::size_t iteration_budget(std::size_t n) const {
        if (iterations > 0) return iterations;
        const double it = std::ceil(epochs * static_cast<double>(n) / static_cast<double>(batch));
        return std::max(min_iterations, static_cast<std::size_t>(it));
    }
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Midpoint-rule contrast over [a, b] at one data point. Draws depend only on
/// rng and the node index, so two candidates evaluated with the same rng see
/// common random numbers. The standard error covers the Z-randomness.
inline Estimate contrast_mc(const ScoreFn& s, double sigma, std::span<const double> x, double a, double b,
                            const Rng& rng, const TrainConfig& cfg) {
    const std::size_t d = x.size();
    const double h = (b - a) / static_cast<double>(cfg.time_nodes);
    const ForwardSpec spec{sigma, NoiseSchedule::constant()};
    Vector z(d), y(d), out(d);
    double total = 0.0, var = 0.0;
    for (std::size_t node = 0; node < cfg.time_nodes; ++node) {
        const double t = a + (static_cast<double>(node) + 0.5) * h;
        const double decay = std::exp(-t);
        const double st = sigma_t(spec, t);
        Rng r = rng.substream(node);
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t m = 0; m < cfg.z_draws; ++m) {
            r.fill_normal(z);
            for (std::size_t i = 0; i < d; ++i) y[i] = decay * x[i] + st * z[i];
            s(t, y, out);
            double v = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double e = out[i] + z[i] / st;
                v += e * e;
            }
            if (cfg.control_variate) v += (static_cast<double>(d) - dot(z, z)) / (st * st);
            sum += v;
            sum2 += v * v;
        }
        const double k = static_cast<double>(cfg.z_draws);
        const double mean = sum / k;
        total += h * mean;
        if (cfg.z_draws > 1) var += h * h * std::max(0.0, sum2 / k - mean * mean) / (k - 1.0);
    }
    return {total, std::sqrt(var)};
}

/// ℰ_{a,b}(s) = ∫_a^b E‖s*(t,X_t) − s(t,X_t)‖² dt, midpoint in t, n_mc forward
/// samples per node. Per-sample terms are summed in index order, so the value
/// is independent of the worker count.
inline Estimate fisher_loss(const ScoreFn& s, const ScoreOracle& oracle, double a, double b, const Rng& rng,
                            std::size_t n_mc, std::size_t time_nodes = 8) {
    if (!(b > a) || n_mc < 2 || time_nodes < 1) throw Error(ErrorCode::InvalidParams, "bad fisher_loss request");
    const std::size_t d = oracle.dim();
    const double h = (b - a) / static_cast<double>(time_nodes);
    double total = 0.0, var = 0.0;
    Vector terms(n_mc);
    for (std::size_t node = 0; node < time_nodes; ++node) {
        const double t = a + (static_cast<double>(node) + 0.5) * h;
        const Matrix xs = forward_marginal_sample(oracle.spec(), oracle.target(), rng.substream(node), t, n_mc);
        parallel_for(n_mc, [&](std::size_t i) {
            Vector ref(d), est(d);
            oracle.score(t, xs.row(i), ref);
            s(t, xs.row(i), est);
            terms[i] = squared_distance(ref, est);
        });
        double sum = 0.0, sum2 = 0.0;
        for (double v : terms) {
            sum += v;
            sum2 += v * v;
        }
        const double nn = static_cast<double>(n_mc);
        const double mean = sum / nn;
        total += h * mean;
        var += h * h * std::max(0.0, sum2 / nn - mean * mean) / (nn - 1.0);
    }
    return {total, std::sqrt(var)};
}

inline ScoreFn as_score_fn(const ScoreModel& m) {
    return [&m](double t, std::span<const double> x, std::span<double> out) { m.evaluate(t, x, out); };
}

inline ScoreFn as_score_fn(const ScoreOracle& o) {
    return [&o](double t, std::span<const double> x, std::span<double> out) { o.score(t, x, out); };
}

inline ScoreFn stationary_score_fn(double sigma) { return StationaryScore{sigma}; }

struct TrainLogRow {
    std::size_t iteration = 0;
    double dsm_loss = 0.0;  ///< minibatch DSM loss per unit time, control-variate corrected
    double penalty = 0.0;
    double lambda_max = 0.0;
    double wall_s = 0.0;
};

struct IntervalLog {
    std::size_t k = 0, j = 0, flat = 0;
    std::vector<TrainLogRow> rows;
    double final_loss = 0.0;
    double refit_scale = 1.0;  ///< α chosen by the output-scale refit
    double lambda_hat = 0.0;   ///< post-training probe estimate (before rescale)
    double vp_cap = 0.0;
    bool rescaled = false;
    double param_movement = 0.0;  ///< ‖θ_final − θ_init‖₂
    std::size_t iterations = 0;
};

/// Fits one network to the interval [net.t0, net.t1). `data` rows are the
/// training sample. Deterministic given (data, cfg, rng).
inline IntervalLog train_interval(TanhNet& net, double sigma, const Matrix& data, const Rng& rng,
                                  const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t d = net.dim();
    const std::size_t n = data.rows();
    if (n == 0 || data.cols() != d) throw Error(ErrorCode::SizeMismatch, "training data shape");
    const double a = net.t0(), b = net.t1();
    const ForwardSpec spec{sigma, NoiseSchedule::constant()};
    const double inv_s2 = 1.0 / (sigma * sigma);
    const std::size_t iters = cfg.iteration_budget(n);
    const auto start_clock = std::chrono::steady_clock::now();

    IntervalLog log;
    log.vp_cap = net.vp_cap();
    log.iterations = iters;
    const Vector init(net.params().begin(), net.params().end());
    const std::size_t np = net.param_count();
    Vector grad(np), m1(np, 0.0), m2(np, 0.0);
    NetCache cache;
    Vector z(d), y(d), out(d), up(d), ydot(d);
    const Rng batch_rng = rng.substream(1);

    for (std::size_t it = 0; it < iters; ++it) {
        Rng r = batch_rng.substream(it);
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0, pen = 0.0, lam_max = -std::numeric_limits<double>::infinity();
        const std::size_t signs = cfg.antithetic ? 2 : 1;
        const double w = 1.0 / static_cast<double>(cfg.batch * signs);
        for (std::size_t bi = 0; bi < cfg.batch; ++bi) {
            const auto row = data.row(r.below(n));
            // Stratified time: one point per equal slice of the interval.
            const double t = a + (b - a) * (static_cast<double>(bi) + r.uniform() * (1.0 - 1e-12)) /
                                     static_cast<double>(cfg.batch);
            const double decay = std::exp(-t);
            const double st = sigma_t(spec, t);
            r.fill_normal(z);
            for (std::size_t sgn = 0; sgn < signs; ++sgn) {
                const double zs = sgn == 0 ? 1.0 : -1.0;
                for (std::size_t i = 0; i < d; ++i) y[i] = decay * row[i] + st * zs * z[i];
                net.forward(t, y, out, cache);
                double v = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double e = out[i] - y[i] * inv_s2 + zs * z[i] / st;
                    up[i] = 2.0 * w * e;
                    v += e * e;
                }
                loss += w * (v + (static_cast<double>(d) - dot(z, z)) / (st * st));
                net.backward(cache, up, grad, {});
                if (sgn == 0 && cfg.penalty_weight > 0.0) {
                    // One probe per point: top eigenvector of sym(J), then the exact
                    // parameter gradient of vᵀJv through the tangent chain.
                    const Matrix jac = net.input_jacobian(t, y, cache);
                    const auto eig = symmetric_part_lambda_max(jac, 1e-9, 2000);
                    lam_max = std::max(lam_max, eig.value);
                    const double excess = eig.value - net.vp_cap();
                    if (excess > 0.0) {
                        const double pw = cfg.penalty_weight / static_cast<double>(cfg.batch);
                        pen += pw * excess * excess;
                        net.forward(t, y, out, cache);
                        net.jvp(cache, eig.vector, ydot);
                        net.jvp_quadratic_backward(cache, eig.vector, 2.0 * pw * excess, grad);
                    }
                }
            }
        }
        if (!std::isfinite(loss) || !std::isfinite(pen))
            throw Error(ErrorCode::Diverged, "non-finite loss at iteration " + std::to_string(it));

        const double progress = static_cast<double>(it) / static_cast<double>(std::max<std::size_t>(1, iters - 1));
        const double lr = cfg.learning_rate *
                          (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(it + 1));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(it + 1));
        auto p = net.params();
        for (std::size_t i = 0; i < np; ++i) {
            m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * grad[i];
            m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            p[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + cfg.adam_eps);
        }
        net.project();

        log.final_loss = loss;
        if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == iters)) {
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start_clock).count();
            log.rows.push_back({it, loss, pen, std::isfinite(lam_max) ? lam_max : 0.0, wall});
        }
    }

    // The DSM objective is quadratic in the output scale α: with ξ = −y/σ² + Z/σ_t,
    // E‖αS + ξ‖² − E‖ξ‖² = α²E‖S‖² + 2αE[S·ξ]. Minimise over α ∈ [0, 1] on fresh draws;
    // this keeps near-stationary intervals from drifting away from the zero output.
    if (cfg.refit_draws > 0) {
        Rng fr = rng.substream(3);
        double ss = 0.0, sx = 0.0;
        for (std::size_t i = 0; i < cfg.refit_draws; ++i) {
            const auto row = data.row(fr.below(n));
            const double t = a + (b - a) * (static_cast<double>(i) + fr.uniform() * (1.0 - 1e-12)) /
                                     static_cast<double>(cfg.refit_draws);
            const double decay = std::exp(-t), st = sigma_t(spec, t);
            fr.fill_normal(z);
            for (std::size_t sgn = 0; sgn < (cfg.antithetic ? 2u : 1u); ++sgn) {
                const double zs = sgn == 0 ? 1.0 : -1.0;
                for (std::size_t c = 0; c < d; ++c) y[c] = decay * row[c] + st * zs * z[c];
                net.forward(t, y, out, cache);
                for (std::size_t c = 0; c < d; ++c) {
                    ss += out[c] * out[c];
                    sx += out[c] * (zs * z[c] / st - y[c] * inv_s2);
                }
            }
        }
        const double alpha = ss > 0.0 ? std::clamp(-sx / ss, 0.0, 1.0) : 1.0;
        net.set_output_scale(net.output_scale() * alpha);
        log.refit_scale = alpha;
    }

    // Hard check on probes drawn from the interval's forward marginal of the data.
    Rng pr = rng.substream(2);
    double lam = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < std::min(cfg.lipschitz_probes, n); ++i) {
        const auto row = data.row(pr.below(n));
        const double t = pr.uniform(a, b);
        const double decay = std::exp(-t), st = sigma_t(spec, t);
        for (std::size_t c = 0; c < d; ++c) y[c] = decay * row[c] + st * pr.normal();
        lam = std::max(lam, symmetric_part_lambda_max(net.input_jacobian(t, y, cache)).value);
    }
    log.lambda_hat = lam;
    if (lam > cfg.rescale_slack * net.vp_cap() && lam > 0.0) {
        net.set_output_scale(net.output_scale() * net.vp_cap() / lam);
        log.rescaled = true;
    }
    double mv = 0.0;
    for (std::size_t i = 0; i < np; ++i) mv += (net.params()[i] - init[i]) * (net.params()[i] - init[i]);
    log.param_movement = std::sqrt(mv);
    return log;
}

/// Trains every fine interval independently. Interval f uses rng.substream(k, j),
/// so results are identical for any worker count.
inline std::vector<IntervalLog> train_all(ScoreModel& model, const Matrix& data, const Rng& rng,
                                          const TrainConfig& cfg) {
    const auto& sched = model.schedule();
    std::vector<IntervalLog> logs(model.net_count());
    parallel_for(model.net_count(), [&](std::size_t f) {
        const auto idx = sched.interval(f);
        const Rng sub = rng.substream(idx.k, idx.j);
        TanhNet& net = model.net(f);
        Rng init = sub.substream(0);
        net.initialize(init);
        try {
            logs[f] = train_interval(net, model.sigma(), data, sub, cfg);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Diverged)
                throw Error(ErrorCode::Diverged,
                            "interval (" + std::to_string(idx.k) + "," + std::to_string(idx.j) + "): " + e.what());
            throw;
        }
        logs[f].k = idx.k;
        logs[f].j = idx.j;
        logs[f].flat = f;
    });
    return logs;
}

}  // namespace sgm
