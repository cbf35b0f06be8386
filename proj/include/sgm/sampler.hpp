// SPDX-License-Identifier: Apache-2.0
//
// Backward-time generation. Starting from N(0, σ²I) at backward time 0, paths
// follow
//   dX̂_t = â_t(X̂_t) dt + √2 b_t dB_t,   â_t(x) = x + (σ² + b_t²) ŝ(T̄ − t, x),
// up to backward time T̄ − T̲, where the law approximates p_{T̲}.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"

namespace sgm {

struct DiffusionProfile {
    enum class Kind { Ode, Ddpm, Constant, Alternating, Table };
    Kind kind = Kind::Ddpm;
    double c = 0.0;       ///< level for Constant / Alternating
    double period = 1.0;  ///< full period of the Alternating square wave (0 on the first half)
    Vector table_t;       ///< Table: backward times, ascending; piecewise-constant from each knot
    Vector table_b;

    static DiffusionProfile ode() { return {Kind::Ode, 0.0, 1.0, {}, {}}; }
    static DiffusionProfile ddpm() { return {Kind::Ddpm, 0.0, 1.0, {}, {}}; }
    static DiffusionProfile constant(double c) { return {Kind::Constant, c, 1.0, {}, {}}; }
    static DiffusionProfile alternating(double c, double period) { return {Kind::Alternating, c, period, {}, {}}; }
    static DiffusionProfile table(Vector t, Vector b) {
        if (t.empty() || t.size() != b.size()) throw Error(ErrorCode::InvalidParams, "profile table shape");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1])) throw Error(ErrorCode::InvalidParams, "profile table times must increase");
        return {Kind::Table, 0.0, 1.0, std::move(t), std::move(b)};
    }

    /// b at backward time t.
    [[nodiscard]] double operator()(double t, double sigma) const {
        switch (kind) {
        case Kind::Ode: return 0.0;
        case Kind::Ddpm: return sigma;
        case Kind::Constant: return c;
        case Kind::Alternating: return std::fmod(t, period) < 0.5 * period ? 0.0 : c;
        case Kind::Table: {
            const auto it = std::upper_bound(table_t.begin(), table_t.end(), t);
            return it == table_t.begin() ? table_b.front() : table_b[static_cast<std::size_t>(it - table_t.begin()) - 1];
        }
        }
        return 0.0;
    }

    /// sup |b|.
    [[nodiscard]] double bound(double sigma) const {
        switch (kind) {
        case Kind::Ode: return 0.0;
        case Kind::Ddpm: return sigma;
        case Kind::Constant:
        case Kind::Alternating: return std::abs(c);
        case Kind::Table: {
            double m = 0.0;
            for (double v : table_b) m = std::max(m, std::abs(v));
            return m;
        }
        }
        return 0.0;
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
        case Kind::Ode: return "ode";
        case Kind::Ddpm: return "ddpm";
        case Kind::Constant: return "constant";
        case Kind::Alternating: return "alternating";
        case Kind::Table: return "table";
        }
        return "?";
    }
};

using ScoreField = std::function<void(double, std::span<const double>, std::span<double>)>;

/// â_t(x) = x + (σ² + b_t²) ŝ(T̄ − t, x).
inline void drift(const ScoreField& score, const DiffusionProfile& profile, double sigma, double t_high, double t,
                  std::span<const double> x, std::span<double> out) {
    score(t_high - t, x, out);
    const double b = profile(t, sigma);
    const double coef = sigma * sigma + b * b;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + coef * out[i];
}

enum class Integrator { EulerMaruyama, Exponential };

inline std::string to_string(Integrator i) { return i == Integrator::EulerMaruyama ? "euler_maruyama" : "exponential"; }

struct SampleRun {
    double t_low = 1e-3;
    double t_high = 5.0;
    double sigma = 1.0;
    std::size_t dim = 1;
    DiffusionProfile profile = DiffusionProfile::ddpm();
    std::size_t n_steps = 256;
    Integrator integrator = Integrator::EulerMaruyama;
    /// Geometric refinement in forward time toward T̲ (off: uniform steps).
    bool geometric_steps = false;
    double blowup_radius = 1e6;

    /// Backward-time nodes u_0 = 0 < … < u_N = T̄ − T̲.
    [[nodiscard]] Vector grid() const {
        if (n_steps < 1) throw Error(ErrorCode::InvalidParams, "n_steps must be at least 1");
        if (!(t_high > t_low) || !(t_low >= 0.0)) throw Error(ErrorCode::InvalidParams, "need 0 <= T_low < T_high");
        Vector u(n_steps + 1);
        const double span = t_high - t_low;
        const double nn = static_cast<double>(n_steps);
        for (std::size_t i = 0; i <= n_steps; ++i) {
            const double f = static_cast<double>(i) / nn;
            if (geometric_steps && t_low > 0.0)
                u[i] = t_high - t_high * std::pow(t_low / t_high, f);
            else
                u[i] = span * f;
        }
        u[n_steps] = span;
        return u;
    }
};

/// One step from backward time u to u + h for a single path; `z` must hold
/// fresh standard normals (ignored when b = 0).
inline void integrator_step(const ScoreField& score, const SampleRun& run, double u, double h, std::span<double> x,
                            std::span<const double> z, std::span<double> scratch) {
    const std::size_t d = x.size();
    const double s2 = run.sigma * run.sigma;
    const double b = run.profile(u, run.sigma);
    if (run.integrator == Integrator::EulerMaruyama) {
        drift(score, run.profile, run.sigma, run.t_high, u, x, scratch);
        const double noise = std::sqrt(2.0 * h) * b;
        for (std::size_t i = 0; i < d; ++i) x[i] += scratch[i] * h + noise * z[i];
        return;
    }
    // Exponential: write ŝ = −x/σ² + R, so â = −κx + (σ² + b²)R with κ = b²/σ².
    // The linear part and the noise are integrated exactly with R frozen.
    score(run.t_high - u, x, scratch);
    const double coef = s2 + b * b;
    const double kappa = b * b / s2;
    double decay, mean_gain, noise;
    if (kappa * h < 1e-12) {
        decay = 1.0;
        mean_gain = h;
        noise = std::sqrt(2.0 * h) * b;
    } else {
        decay = std::exp(-kappa * h);
        mean_gain = -std::expm1(-kappa * h) / kappa;
        noise = std::sqrt(-std::expm1(-2.0 * kappa * h) * b * b / kappa);
    }
    for (std::size_t i = 0; i < d; ++i) {
        const double r = scratch[i] + x[i] / s2;
        x[i] = decay * x[i] + mean_gain * coef * r + noise * z[i];
    }
}

/// Integrates n_paths paths. Path p owns rng.substream(p): its first d normals
/// are the N(0, σ²I) start, the rest the Brownian increments. `snapshots`
/// lists step indices (0..N) whose states are returned in order; the final
/// state is always returned last. With `initial`, path p starts from its row p
/// instead (no normals are consumed for the start).
inline std::vector<Matrix> integrate(const ScoreField& score, const SampleRun& run, std::size_t n_paths,
                                     const Rng& rng, const std::vector<std::size_t>& snapshots = {},
                                     const Matrix* initial = nullptr) {
    const Vector u = run.grid();
    const std::size_t d = run.dim;
    for (std::size_t s : snapshots)
        if (s > run.n_steps) throw Error(ErrorCode::OutOfRange, "snapshot step beyond n_steps");
    if (initial && (initial->rows() != n_paths || initial->cols() != d))
        throw Error(ErrorCode::SizeMismatch, "initial states shape");
    std::vector<Matrix> out(snapshots.size() + 1, Matrix(n_paths, d));
    parallel_for(n_paths, [&](std::size_t p) {
        Rng r = rng.substream(p);
        Vector x(d), z(d), scratch(d);
        if (initial) {
            std::copy(initial->row(p).begin(), initial->row(p).end(), x.begin());
        } else {
            r.fill_normal(x);
            for (double& v : x) v *= run.sigma;
        }
        auto record = [&](std::size_t step) {
            for (std::size_t k = 0; k < snapshots.size(); ++k)
                if (snapshots[k] == step) std::copy(x.begin(), x.end(), out[k].row(p).begin());
        };
        record(0);
        for (std::size_t i = 0; i < run.n_steps; ++i) {
            r.fill_normal(z);
            integrator_step(score, run, u[i], u[i + 1] - u[i], x, z, scratch);
            const double nx = norm(x);
            if (!(nx <= run.blowup_radius))
                throw Error(ErrorCode::NonFinite, "path " + std::to_string(p) + " left the ball of radius " +
                                                      std::to_string(run.blowup_radius) + " at step " +
                                                      std::to_string(i + 1));
            record(i + 1);
        }
        std::copy(x.begin(), x.end(), out.back().row(p).begin());
    });
    return out;
}

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::string integrator;
    std::string profile;
    double t_low = 0.0, t_high = 0.0;
    double wall_s = 0.0;
};

struct GeneratedSamples {
    Matrix samples;
    Provenance provenance;
};

/// End-to-end generation with a provenance record.
inline GeneratedSamples generate(const ScoreField& score, const SampleRun& run, std::size_t n_paths, const Rng& rng,
                                 std::string config_hash = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    GeneratedSamples g;
    g.samples = n_paths == 0 ? Matrix(0, run.dim) : integrate(score, run, n_paths, rng).back();
    g.provenance = {std::move(config_hash), rng.seed(), rng.stream_id(), n_paths, run.n_steps,
                    to_string(run.integrator), run.profile.name(), run.t_low, run.t_high,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    return g;
}

}  // namespace sgm
