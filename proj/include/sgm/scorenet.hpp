// SPDX-License-Identifier: Apache-2.0
//
// Piecewise-in-time tanh score networks with the fixed −x/σ² skip term:
//   s(t, x) = −x/σ² + S_{k,j}(t, x)   for t ∈ [τ_{k,j}, τ_{k,j+1}).
// Each S_{k,j} is a fully connected tanh net on (rescaled t, x) whose output
// is squashed coordinatewise to V·tanh(·/V), so ‖S‖∞ ≤ V holds exactly.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/bytes.hpp"
#include "sgm/numerics/hash.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"
#include "sgm/schedule.hpp"

namespace sgm {

/// Activations of one forward pass, kept for the reverse passes.
struct NetCache {
    std::vector<Vector> h;     ///< h[0] = input (τ̃, x); h[l] hidden outputs
    Vector q;                  ///< tanh(a_o / V)
    std::vector<Vector> hdot;  ///< tangent activations ḣ_l for the JVP
    std::vector<Vector> adot;  ///< pre-activation tangents ȧ_l (hidden layers, then output)
    Vector gbuf, gnext;        ///< reverse-pass scratch
    Vector gdot, gdot_next;
};

class TanhNet {
public:
    TanhNet() = default;

    TanhNet(std::size_t d, const IntervalArch& arch, double t0, double t1)
        : d_(d), depth_(arch.depth), width_(arch.width), t0_(t0), t1_(t1), v_cap_(arch.v_cap),
          vp_cap_(arch.vp_cap), bound_b_(arch.bound_b) {
        if (d == 0 || depth_ == 0 || width_ == 0) throw Error(ErrorCode::InvalidParams, "empty network");
        if (!(t1 > t0)) throw Error(ErrorCode::InvalidParams, "empty time interval");
        if (!(v_cap_ > 0.0)) throw Error(ErrorCode::InvalidParams, "V must be positive");
        std::size_t off = 0;
        for (std::size_t l = 0; l <= depth_; ++l) {
            const std::size_t in = l == 0 ? d_ + 1 : width_;
            const std::size_t out = l == depth_ ? d_ : width_;
            layers_.push_back({in, out, off, off + in * out});
            off += in * out + out;
        }
        params_.assign(off, 0.0);
    }

    [[nodiscard]] std::size_t dim() const noexcept { return d_; }
    [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
    [[nodiscard]] std::size_t width() const noexcept { return width_; }
    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] double t1() const noexcept { return t1_; }
    [[nodiscard]] double v_cap() const noexcept { return v_cap_; }
    [[nodiscard]] double vp_cap() const noexcept { return vp_cap_; }
    [[nodiscard]] double bound_b() const noexcept { return bound_b_; }
    [[nodiscard]] double output_scale() const noexcept { return output_scale_; }
    void set_output_scale(double s) { output_scale_ = s; }

    [[nodiscard]] std::span<double> params() noexcept { return params_; }
    [[nodiscard]] std::span<const double> params() const noexcept { return params_; }
    [[nodiscard]] std::size_t param_count() const noexcept { return params_.size(); }

    /// Weights and biases uniform in ±1/√fan_in, output layer zeroed, then clamped to ±B.
    void initialize(Rng& rng) {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& ly = layers_[l];
            const double r = l == depth_ ? 0.0 : 1.0 / std::sqrt(static_cast<double>(ly.in));
            for (std::size_t i = ly.w; i < ly.b + ly.out; ++i) params_[i] = r == 0.0 ? 0.0 : rng.uniform(-r, r);
        }
        project();
    }

    /// Clamp every parameter to [−B, B].
    void project() {
        for (double& p : params_) p = std::clamp(p, -bound_b_, bound_b_);
    }

    [[nodiscard]] double rescale_time(double t) const { return (t - t0_) / (t1_ - t0_); }

    /// S(t, x) into `out`; fills `cache` for backward/jvp.
    void forward(double t, std::span<const double> x, std::span<double> out, NetCache& cache) const {
        ensure(cache);
        Vector& in = cache.h[0];
        in[0] = rescale_time(t);
        std::copy(x.begin(), x.end(), in.begin() + 1);
        for (std::size_t l = 0; l < depth_; ++l) {
            affine(l, cache.h[l], cache.h[l + 1]);
            for (double& v : cache.h[l + 1]) v = std::tanh(v);
        }
        affine(depth_, cache.h[depth_], cache.q);
        for (std::size_t i = 0; i < d_; ++i) {
            cache.q[i] = std::tanh(cache.q[i] / v_cap_);
            out[i] = output_scale_ * v_cap_ * cache.q[i];
        }
    }

    void forward(double t, std::span<const double> x, std::span<double> out) const {
        thread_local NetCache cache;
        forward(t, x, out, cache);
    }

    /// Reverse pass of `upstream · S` after `forward`. Parameter gradients are
    /// accumulated into `grad_params` (may be empty); the x-gradient is written
    /// to `grad_x` (may be empty).
    void backward(NetCache& cache, std::span<const double> upstream, std::span<double> grad_params,
                  std::span<double> grad_x) const {
        Vector& g = cache.gbuf;
        g.assign(d_, 0.0);
        for (std::size_t i = 0; i < d_; ++i) g[i] = upstream[i] * output_scale_ * (1.0 - cache.q[i] * cache.q[i]);
        for (std::size_t l = depth_ + 1; l-- > 0;) {
            const auto& ly = layers_[l];
            const Vector& hin = cache.h[l];
            if (!grad_params.empty()) {
                for (std::size_t o = 0; o < ly.out; ++o) {
                    double* gw = grad_params.data() + ly.w + o * ly.in;
                    for (std::size_t i = 0; i < ly.in; ++i) gw[i] += g[o] * hin[i];
                    grad_params[ly.b + o] += g[o];
                }
            }
            if (l == 0 && grad_x.empty()) break;
            Vector& gn = cache.gnext;
            transpose_apply(l, g, gn);
            if (l == 0) {
                for (std::size_t i = 0; i < d_; ++i) grad_x[i] = gn[i + 1];
                break;
            }
            for (std::size_t i = 0; i < ly.in; ++i) gn[i] *= 1.0 - hin[i] * hin[i];
            std::swap(g, gn);
        }
    }

    /// Forward-mode tangent ẏ = ∇ₓS(t,x)·v after `forward`.
    void jvp(NetCache& cache, std::span<const double> v, std::span<double> ydot) const {
        cache.hdot[0][0] = 0.0;
        std::copy(v.begin(), v.end(), cache.hdot[0].begin() + 1);
        for (std::size_t l = 0; l < depth_; ++l) {
            linear(l, cache.hdot[l], cache.adot[l]);
            const Vector& h = cache.h[l + 1];
            for (std::size_t i = 0; i < width_; ++i) cache.hdot[l + 1][i] = (1.0 - h[i] * h[i]) * cache.adot[l][i];
        }
        linear(depth_, cache.hdot[depth_], cache.adot[depth_]);
        for (std::size_t i = 0; i < d_; ++i)
            ydot[i] = output_scale_ * (1.0 - cache.q[i] * cache.q[i]) * cache.adot[depth_][i];
    }

    /// Accumulates scale · ∂(vᵀ ∇ₓS v)/∂θ into grad_params; requires `forward` then `jvp(v)`.
    void jvp_quadratic_backward(NetCache& cache, std::span<const double> v, double scale,
                                std::span<double> grad_params) const {
        // Adjoints: gdot for the tangent chain (ȧ), g for the primal chain (a).
        Vector& gd = cache.gdot;
        Vector& g = cache.gbuf;
        gd.assign(d_, 0.0);
        g.assign(d_, 0.0);
        const double s = output_scale_ * scale;
        for (std::size_t i = 0; i < d_; ++i) {
            const double q = cache.q[i];
            const double sech2 = 1.0 - q * q;
            gd[i] = s * v[i] * sech2;
            const double q_bar = s * v[i] * cache.adot[depth_][i] * (-2.0 * q);
            g[i] = q_bar * sech2 / v_cap_;
        }
        for (std::size_t l = depth_ + 1; l-- > 0;) {
            const auto& ly = layers_[l];
            const Vector& hin = cache.h[l];
            const Vector& hdin = cache.hdot[l];
            for (std::size_t o = 0; o < ly.out; ++o) {
                double* gw = grad_params.data() + ly.w + o * ly.in;
                for (std::size_t i = 0; i < ly.in; ++i) gw[i] += gd[o] * hdin[i] + g[o] * hin[i];
                grad_params[ly.b + o] += g[o];
            }
            if (l == 0) break;
            Vector& gdn = cache.gdot_next;
            Vector& gn = cache.gnext;
            transpose_apply(l, gd, gdn);  // ḣ_bar
            transpose_apply(l, g, gn);    // h_bar
            const Vector& adot = cache.adot[l - 1];
            for (std::size_t i = 0; i < ly.in; ++i) {
                const double h = hin[i];
                const double sech2 = 1.0 - h * h;
                gn[i] += gdn[i] * adot[i] * (-2.0 * h);
                gdn[i] *= sech2;
                gn[i] *= sech2;
            }
            std::swap(gd, gdn);
            std::swap(g, gn);
        }
    }

    /// J = ∇ₓS(t, x) by d reverse passes (row i = ∇ₓ S_i).
    [[nodiscard]] Matrix input_jacobian(double t, std::span<const double> x, NetCache& cache) const {
        Vector out(d_), e(d_, 0.0), row(d_);
        forward(t, x, out, cache);
        Matrix j(d_, d_);
        for (std::size_t i = 0; i < d_; ++i) {
            std::fill(e.begin(), e.end(), 0.0);
            e[i] = 1.0;
            backward(cache, e, {}, row);
            for (std::size_t c = 0; c < d_; ++c) j(i, c) = row[c];
        }
        return j;
    }

    [[nodiscard]] bool operator==(const TanhNet& o) const {
        return d_ == o.d_ && depth_ == o.depth_ && width_ == o.width_ && t0_ == o.t0_ && t1_ == o.t1_ &&
               v_cap_ == o.v_cap_ && vp_cap_ == o.vp_cap_ && bound_b_ == o.bound_b_ &&
               output_scale_ == o.output_scale_ && params_ == o.params_;
    }

private:
    struct Layer {
        std::size_t in, out, w, b;
    };

    void ensure(NetCache& c) const {
        if (c.h.size() == depth_ + 1 && c.h[0].size() == d_ + 1 && (depth_ == 0 || c.h[1].size() == width_) &&
            c.q.size() == d_)
            return;
        c.h.assign(depth_ + 1, Vector(width_));
        c.h[0].assign(d_ + 1, 0.0);
        c.hdot = c.h;
        c.adot.assign(depth_ + 1, Vector(width_));
        c.adot[depth_].assign(d_, 0.0);
        c.q.assign(d_, 0.0);
        c.gbuf.reserve(std::max(width_, d_ + 1));
        c.gnext.reserve(std::max(width_, d_ + 1));
    }

    void affine(std::size_t l, const Vector& in, Vector& out) const {
        const auto& ly = layers_[l];
        const double* w = params_.data() + ly.w;
        for (std::size_t o = 0; o < ly.out; ++o) {
            double s = params_[ly.b + o];
            const double* wr = w + o * ly.in;
            for (std::size_t i = 0; i < ly.in; ++i) s += wr[i] * in[i];
            out[o] = s;
        }
    }

    void linear(std::size_t l, const Vector& in, Vector& out) const {
        const auto& ly = layers_[l];
        const double* w = params_.data() + ly.w;
        for (std::size_t o = 0; o < ly.out; ++o) {
            double s = 0.0;
            const double* wr = w + o * ly.in;
            for (std::size_t i = 0; i < ly.in; ++i) s += wr[i] * in[i];
            out[o] = s;
        }
    }

    void transpose_apply(std::size_t l, const Vector& g, Vector& out) const {
        const auto& ly = layers_[l];
        out.assign(ly.in, 0.0);
        const double* w = params_.data() + ly.w;
        for (std::size_t o = 0; o < ly.out; ++o) {
            const double* wr = w + o * ly.in;
            for (std::size_t i = 0; i < ly.in; ++i) out[i] += wr[i] * g[o];
        }
    }

    std::size_t d_ = 0, depth_ = 0, width_ = 0;
    double t0_ = 0.0, t1_ = 1.0;
    double v_cap_ = 1.0, vp_cap_ = 1.0, bound_b_ = 1.0;
    double output_scale_ = 1.0;
    std::vector<Layer> layers_;
    Vector params_;

    friend class ScoreModel;
};

/// sym(J) top eigenpair via the numerics power iteration.
inline EigenEstimate symmetric_part_lambda_max(const Matrix& j, double tol = 1e-10, std::size_t max_iter = 10000) {
    Matrix s(j.rows(), j.cols());
    for (std::size_t a = 0; a < j.rows(); ++a)
        for (std::size_t b = 0; b < j.cols(); ++b) s(a, b) = 0.5 * (j(a, b) + j(b, a));
    return lambda_max_symmetric(s, tol, max_iter);
}

class ScoreModel {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    ScoreModel() = default;

    /// Zero-output nets on every fine interval (exactly the stationary score).
    ScoreModel(TimeSchedule schedule, double sigma) : schedule_(std::move(schedule)), sigma_(sigma) {
        if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidParams, "sigma must be positive");
        const std::size_t d = schedule_.params().d;
        for (std::size_t f = 0; f < schedule_.interval_count(); ++f) {
            const auto idx = schedule_.interval(f);
            nets_.emplace_back(d, schedule_.arch(idx.k), schedule_.interval_start(f), schedule_.interval_end(f));
        }
    }

    [[nodiscard]] const TimeSchedule& schedule() const noexcept { return schedule_; }
    [[nodiscard]] double sigma() const noexcept { return sigma_; }
    [[nodiscard]] std::size_t dim() const noexcept { return schedule_.params().d; }
    [[nodiscard]] std::size_t net_count() const noexcept { return nets_.size(); }
    [[nodiscard]] TanhNet& net(std::size_t flat) { return nets_.at(flat); }
    [[nodiscard]] const TanhNet& net(std::size_t flat) const { return nets_.at(flat); }
    [[nodiscard]] std::size_t total_parameters() const {
        std::size_t s = 0;
        for (const auto& n : nets_) s += n.param_count();
        return s;
    }

    /// Random hidden layers per interval (substream keyed by flat index), zero output layer.
    void initialize(const Rng& rng) {
        for (std::size_t f = 0; f < nets_.size(); ++f) {
            Rng sub = rng.substream(f);
            nets_[f].initialize(sub);
        }
    }

    void evaluate(double t, std::span<const double> x, std::span<double> out) const {
        if (x.size() != dim() || out.size() != dim()) throw Error(ErrorCode::SizeMismatch, "score model dimension");
        const auto idx = schedule_.locate(t);
        nets_[idx.flat].forward(t, x, out);
        const double inv = 1.0 / (sigma_ * sigma_);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] -= x[i] * inv;
    }

    [[nodiscard]] Vector evaluate(double t, std::span<const double> x) const {
        Vector out(dim());
        evaluate(t, x, out);
        return out;
    }

    void operator()(double t, std::span<const double> x, std::span<double> out) const { evaluate(t, x, out); }

    /// Gradients of upstream·s(t,x) with respect to the active net's parameters
    /// (accumulated into grad_params) and to x (including the skip term).
    std::size_t backward(double t, std::span<const double> x, std::span<const double> upstream,
                         std::span<double> grad_params, std::span<double> grad_x) const {
        const auto idx = schedule_.locate(t);
        NetCache cache;
        Vector out(dim());
        nets_[idx.flat].forward(t, x, out, cache);
        nets_[idx.flat].backward(cache, upstream, grad_params, grad_x);
        if (!grad_x.empty()) {
            const double inv = 1.0 / (sigma_ * sigma_);
            for (std::size_t i = 0; i < dim(); ++i) grad_x[i] -= upstream[i] * inv;
        }
        return idx.flat;
    }

    /// max over probes of λ_max(sym ∇ₓS_{k,j}(t, x)). The −I/σ² skip term is excluded.
    [[nodiscard]] double estimate_onesided_lipschitz(double t, const Matrix& probes) const {
        if (probes.rows() == 0) throw Error(ErrorCode::InvalidParams, "no probes");
        const auto& n = nets_[schedule_.locate(t).flat];
        NetCache cache;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < probes.rows(); ++i)
            best = std::max(best, symmetric_part_lambda_max(n.input_jacobian(t, probes.row(i), cache)).value);
        return best;
    }

    // -- checkpoint ---------------------------------------------------------

    [[nodiscard]] std::vector<unsigned char> serialize() const {
        ByteWriter w;
        w.raw("SGMCKPT\0", 8);
        w.u32(kFormatVersion);
        w.u64(schedule_.hash());
        w.f64(sigma_);
        const auto& p = schedule_.params();
        w.u64(p.d);
        w.f64(p.beta);
        w.u64(p.n);
        // Schedule parameters, so a checkpoint is self-describing.
        w.f64(p.c);
        w.f64(p.c2);
        w.f64(p.c_high);
        w.f64(p.sigma);
        w.u64(p.width_min);
        w.u64(p.width_max);
        w.u64(p.depth);
        w.u32(p.mode == ScheduleMode::Formula ? 0 : 1);
        w.f64(p.t_low);
        w.f64(p.t_high);
        w.u64(p.upsilon.size());
        for (auto u : p.upsilon) w.u64(u);
        w.u64(p.widths.size());
        for (auto u : p.widths) w.u64(u);
        w.u64(nets_.size());
        for (std::size_t f = 0; f < nets_.size(); ++f) {
            const auto& n = nets_[f];
            const auto idx = schedule_.interval(f);
            w.u64(idx.k);
            w.u64(idx.j);
            w.u64(n.d_);
            w.u64(n.depth_);
            w.u64(n.width_);
            w.f64(n.t0_);
            w.f64(n.t1_);
            w.f64(n.v_cap_);
            w.f64(n.vp_cap_);
            w.f64(n.bound_b_);
            w.f64(n.output_scale_);
            w.u64(n.params_.size());
            for (double v : n.params_) w.f64(v);
        }
        Fnv1a64 h;
        h.update(w.bytes());
        w.u64(h.digest());
        return w.bytes();
    }

    static ScoreModel deserialize(const std::vector<unsigned char>& bytes) {
        if (bytes.size() < 8 + 4 + 8 + 8) throw Error(ErrorCode::CorruptChecksum, "checkpoint too short");
        {
            ByteReader tail(bytes.data() + bytes.size() - 8, 8);
            Fnv1a64 h;
            h.update(std::span(bytes.data(), bytes.size() - 8));
            if (tail.u64() != h.digest()) throw Error(ErrorCode::CorruptChecksum, "checkpoint checksum mismatch");
        }
        ByteReader r(bytes.data(), bytes.size() - 8);
        char magic[8];
        r.raw(magic, 8);
        if (std::string(magic, 7) != "SGMCKPT") throw Error(ErrorCode::FormatVersionMismatch, "not a checkpoint");
        if (r.u32() != kFormatVersion) throw Error(ErrorCode::FormatVersionMismatch, "unsupported checkpoint version");
        const std::uint64_t stored_hash = r.u64();
        const double sigma = r.f64();
        ScheduleParams p;
        p.d = r.u64();
        p.beta = r.f64();
        p.n = r.u64();
        p.c = r.f64();
        p.c2 = r.f64();
        p.c_high = r.f64();
        p.sigma = r.f64();
        p.width_min = r.u64();
        p.width_max = r.u64();
        p.depth = r.u64();
        p.mode = r.u32() == 0 ? ScheduleMode::Formula : ScheduleMode::Manual;
        p.t_low = r.f64();
        p.t_high = r.f64();
        p.upsilon.resize(r.u64());
        for (auto& u : p.upsilon) u = r.u64();
        p.widths.resize(r.u64());
        for (auto& u : p.widths) u = r.u64();
        TimeSchedule sched = build_schedule(p);
        if (sched.hash() != stored_hash)
            throw Error(ErrorCode::FormatVersionMismatch, "schedule rebuilt from checkpoint has a different hash");
        ScoreModel m(std::move(sched), sigma);
        if (r.u64() != m.nets_.size()) throw Error(ErrorCode::FormatVersionMismatch, "interval count mismatch");
        for (auto& n : m.nets_) {
            r.u64();
            r.u64();
            const auto d = r.u64(), depth = r.u64(), width = r.u64();
            if (d != n.d_ || depth != n.depth_ || width != n.width_)
                throw Error(ErrorCode::FormatVersionMismatch, "network shape mismatch");
            n.t0_ = r.f64();
            n.t1_ = r.f64();
            n.v_cap_ = r.f64();
            n.vp_cap_ = r.f64();
            n.bound_b_ = r.f64();
            n.output_scale_ = r.f64();
            if (r.u64() != n.params_.size()) throw Error(ErrorCode::FormatVersionMismatch, "parameter count mismatch");
            for (double& v : n.params_) v = r.f64();
        }
        if (r.remaining() != 0) throw Error(ErrorCode::CorruptChecksum, "trailing bytes in checkpoint");
        return m;
    }

    void save(const std::string& path) const { write_file_bytes(path, serialize()); }

    static ScoreModel load(const std::string& path) { return deserialize(read_file_bytes(path)); }

    /// Load and require the checkpoint to belong to `expected`.
    static ScoreModel load(const std::string& path, const TimeSchedule& expected) {
        ScoreModel m = load(path);
        if (m.schedule().hash() != expected.hash())
            throw Error(ErrorCode::FormatVersionMismatch, "checkpoint schedule hash " + hex64(m.schedule().hash()) +
                                                              " != expected " + hex64(expected.hash()));
        return m;
    }

private:
    TimeSchedule schedule_;
    double sigma_ = 1.0;
    std::vector<TanhNet> nets_;
};

}  // namespace sgm
