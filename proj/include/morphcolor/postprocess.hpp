#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "morphcolor/field.hpp"
#include "morphcolor/transfer.hpp"

namespace morphcolor {

struct PostParams {
    double gamma = 50.0;   // luminance coupling weight
    double alpha = 0.005;  // fidelity weight
    double sigma0 = 0.001;
    double tau0 = 20.0;
    int max_iterations = 2000;
    double fixpoint_tol = 1e-6;
    // The printed prox divides by max(1, |p|^2); false selects the standard
    // unit-ball projection max(1, |p|) instead.
    bool squared_norm_projection = true;

    void validate() const {
        if (!(gamma > 0.0) || !(alpha > 0.0))
            throw DegenerateInputError("PostParams: gamma and alpha must be positive");
        if (!(sigma0 > 0.0) || !(tau0 > 0.0) || max_iterations < 1 || !(fixpoint_tol >= 0.0))
            throw DegenerateInputError("PostParams: invalid solver parameters");
        // |grad|^2 <= 8 for the forward-difference stencil; sigma*tau must
        // stay inside the primal-dual stability region at initialization.
        if (sigma0 * tau0 > 1.0 / 8.0)
            throw DegenerateInputError("PostParams: sigma0*tau0 exceeds the stability bound 1/8");
    }
};

/// Pixel-wise dual variable: gradient pairs for U and V plus the two
/// luminance-coupling slots.
using DualPixel = std::array<double, 6>;

/// Dual field over the whole grid, slot-planar.
using DualField6 = std::array<ScalarField, 6>;

/// Per-iteration record of a primal-dual run.
struct PdTrace {
    std::vector<double> tau;
    std::vector<double> sigma;
    std::vector<double> rel_change;
    int iterations = 0;
};

// ---------------------------------------------------------------------------
// proximal mappings

inline DualPixel prox_pb_pixel(const DualPixel& p, double sigma, double gy1, double gy2,
                               bool squared_norm_projection = true) {
    DualPixel hat = p;
    hat[4] -= sigma * gy1;
    hat[5] -= sigma * gy2;
    double nsq = 0.0;
    for (double c : hat) nsq += c * c;
    const double denom =
        squared_norm_projection ? std::max(1.0, nsq) : std::max(1.0, std::sqrt(nsq));
    for (double& c : hat) c /= denom;
    return hat;
}

/// Proximal mapping P_B applied slot-planar over the grid. grad_y must be the
/// gradient of the sqrt(gamma)-scaled target luminance.
inline DualField6 prox_PB(const DualField6& p, double sigma, const VectorField2& grad_y,
                          bool squared_norm_projection = true) {
    DualField6 out = p;
    const int n = p[0].size();
    for (int i = 0; i < n; ++i) {
        const DualPixel px = {p[0][i], p[1][i], p[2][i], p[3][i], p[4][i], p[5][i]};
        const DualPixel hat =
            prox_pb_pixel(px, sigma, grad_y.c1[i], grad_y.c2[i], squared_norm_projection);
        for (int s = 0; s < 6; ++s) out[s][i] = hat[s];
    }
    return out;
}

/// Projection used by the debiasing pass. anchor is the same pre-prox dual
/// argument the P_B update sees; both arguments get the sigma-scaled
/// luminance gradient subtracted before the case split.
inline DualPixel prox_pi_pixel(const DualPixel& anchor, const DualPixel& tilde, double sigma,
                               double gy1, double gy2) {
    DualPixel p_hat = anchor;
    DualPixel t_hat = tilde;
    p_hat[4] -= sigma * gy1;
    p_hat[5] -= sigma * gy2;
    t_hat[4] -= sigma * gy1;
    t_hat[5] -= sigma * gy2;
    double nsq = 0.0;
    for (double c : p_hat) nsq += c * c;
    const double norm = std::sqrt(nsq);
    if (norm < 1.0) return t_hat;
    double inner = 0.0;
    for (int s = 0; s < 6; ++s) inner += p_hat[s] * t_hat[s];
    DualPixel out;
    for (int s = 0; s < 6; ++s) out[s] = (t_hat[s] - inner / nsq * p_hat[s]) / norm;
    return out;
}

// ---------------------------------------------------------------------------
// objective and helpers

/// Value of the coupled-TV model: the luminance-guided total variation plus
/// the quadratic fidelity to b.
inline double coupled_tv_objective(const ChromaPair& u, const ChromaPair& b, const ScalarField& y,
                                   const PostParams& params) {
    const VectorField2 gy = gradient(y);
    const VectorField2 gu = gradient(u.u);
    const VectorField2 gv = gradient(u.v);
    double tv = 0.0, fid = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        tv += std::sqrt(params.gamma * (gy.c1[i] * gy.c1[i] + gy.c2[i] * gy.c2[i]) +
                        gu.c1[i] * gu.c1[i] + gu.c2[i] * gu.c2[i] +
                        gv.c1[i] * gv.c1[i] + gv.c2[i] * gv.c2[i]);
        const double du = u.u[i] - b.u[i];
        const double dv = u.v[i] - b.v[i];
        fid += du * du + dv * dv;
    }
    return tv + params.alpha * fid;
}

namespace detail {

inline ScalarField divergence_of(const ScalarField& w1, const ScalarField& w2) {
    ScalarField out(w1.rows(), w1.cols());
    add_div_rows(w1, out);
    add_div_cols(w2, out);
    return out;
}

inline double rel_change(const ChromaPair& now, const ChromaPair& before) {
    double dn = 0.0, n = 0.0;
    for (int i = 0; i < now.u.size(); ++i) {
        const double du = now.u[i] - before.u[i];
        const double dv = now.v[i] - before.v[i];
        dn += du * du + dv * dv;
        n += before.u[i] * before.u[i] + before.v[i] * before.v[i];
    }
    return std::sqrt(dn) / std::max(std::sqrt(n), 1e-12);
}

[[noreturn]] inline void throw_pd_divergence(const char* where, int iteration, double sigma,
                                             double tau) {
    std::ostringstream msg;
    msg << where << ": non-finite iterate at iteration " << iteration << " (sigma=" << sigma
        << ", tau=" << tau << ")";
    throw SolverDivergenceError(msg.str());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Algorithm 1: accelerated primal-dual minimization of the coupled-TV model

/// Denoises the transported chrominance against the target luminance edges.
/// Runs until the relative iterate change drops below fixpoint_tol or
/// max_iterations is reached; the model objective at the output is never above
/// the objective at b.
inline ChromaPair tv_chrominance(const ChromaPair& b, const ScalarField& y,
                                 const PostParams& params, PdTrace* trace = nullptr) {
    params.validate();
    require_same_dims(b.u, b.v, "tv_chrominance");
    require_same_dims(b.u, y, "tv_chrominance");
    const int n1 = y.rows(), n2 = y.cols();
    const int n = n1 * n2;

    // gamma enters through the sqrt(gamma)-scaled luminance gradient
    VectorField2 gy = gradient(y);
    gy.c1 *= std::sqrt(params.gamma);
    gy.c2 *= std::sqrt(params.gamma);

    ChromaPair u = b;
    ChromaPair ubar = b;
    DualField6 p;
    {
        const VectorField2 g_u = gradient(u.u);
        const VectorField2 g_v = gradient(u.v);
        p = {g_u.c1, g_u.c2, g_v.c1, g_v.c2, ScalarField(n1, n2), ScalarField(n1, n2)};
    }

    double sigma = params.sigma0;
    double tau = params.tau0;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        const VectorField2 g_u = gradient(ubar.u);
        const VectorField2 g_v = gradient(ubar.v);
        parallel_for(n, [&](int i) {
            const DualPixel arg = {p[0][i] + sigma * g_u.c1[i], p[1][i] + sigma * g_u.c2[i],
                                   p[2][i] + sigma * g_v.c1[i], p[3][i] + sigma * g_v.c2[i],
                                   p[4][i], p[5][i]};
            const DualPixel hat = prox_pb_pixel(arg, sigma, gy.c1[i], gy.c2[i],
                                                params.squared_norm_projection);
            for (int s = 0; s < 6; ++s) p[s][i] = hat[s];
        });

        const ScalarField div_u = detail::divergence_of(p[0], p[1]);
        const ScalarField div_v = detail::divergence_of(p[2], p[3]);
        ChromaPair u_new{ScalarField(n1, n2), ScalarField(n1, n2)};
        const double denom = 1.0 + tau * params.alpha;
        for (int i = 0; i < n; ++i) {
            u_new.u[i] = (u.u[i] + tau * (div_u[i] + params.alpha * b.u[i])) / denom;
            u_new.v[i] = (u.v[i] + tau * (div_v[i] + params.alpha * b.v[i])) / denom;
        }

        const double theta = 1.0 / std::sqrt(1.0 + tau * params.alpha);
        tau *= theta;
        sigma /= theta;

        for (int i = 0; i < n; ++i) {
            ubar.u[i] = u_new.u[i] + theta * (u_new.u[i] - u.u[i]);
            ubar.v[i] = u_new.v[i] + theta * (u_new.v[i] - u.v[i]);
        }

        const double rel = detail::rel_change(u_new, u);
        u = std::move(u_new);
        if (!std::isfinite(rel) || !std::isfinite(norm_sq(u.u)))
            detail::throw_pd_divergence("tv_chrominance", iter + 1, sigma, tau);
        if (trace) {
            trace->tau.push_back(tau);
            trace->sigma.push_back(sigma);
            trace->rel_change.push_back(rel);
            trace->iterations = iter + 1;
        }
        if (rel < params.fixpoint_tol) break;
    }
    return u;
}

// ---------------------------------------------------------------------------
// Algorithm 2: debiasing of the TV result

struct DebiasResult {
    ChromaPair u;      // debiased chrominance, u_hat + rho * tilde
    ChromaPair tilde;  // converged direction iterate
    double rho = 1.0;
    int iterations = 0;
};

/// Refitting scale: <tilde, delta> / |tilde|^2, or 1 for a vanishing tilde.
inline double refit_scale(const ChromaPair& tilde, const ChromaPair& delta) {
    const double nsq = norm_sq(tilde.u) + norm_sq(tilde.v);
    if (nsq == 0.0) return 1.0;
    return (dot(tilde.u, delta.u) + dot(tilde.v, delta.v)) / nsq;
}

/// Restores the contrast the TV pass removed: reruns the primal-dual scheme
/// coupled with a direction problem driven by delta = b - u_hat, then adds the
/// rescaled direction back. u_hat must be the converged tv_chrominance output
/// for the same (b, y, params).
inline DebiasResult debias(const ChromaPair& b, const ChromaPair& u_hat, const ScalarField& y,
                           const PostParams& params, PdTrace* trace = nullptr) {
    params.validate();
    require_same_dims(b.u, u_hat.u, "debias");
    require_same_dims(b.u, y, "debias");
    const int n1 = y.rows(), n2 = y.cols();
    const int n = n1 * n2;

    VectorField2 gy = gradient(y);
    gy.c1 *= std::sqrt(params.gamma);
    gy.c2 *= std::sqrt(params.gamma);

    ChromaPair delta{b.u, b.v};
    delta.u -= u_hat.u;
    delta.v -= u_hat.v;

    ChromaPair u = b, ubar = b;
    ChromaPair ut = delta, utbar = delta;
    DualField6 p, pt;
    {
        const VectorField2 g_u = gradient(u.u);
        const VectorField2 g_v = gradient(u.v);
        p = {g_u.c1, g_u.c2, g_v.c1, g_v.c2, ScalarField(n1, n2), ScalarField(n1, n2)};
        const VectorField2 gt_u = gradient(ut.u);
        const VectorField2 gt_v = gradient(ut.v);
        pt = {gt_u.c1, gt_u.c2, gt_v.c1, gt_v.c2, ScalarField(n1, n2), ScalarField(n1, n2)};
    }

    double sigma = params.sigma0;
    double tau = params.tau0;
    int iterations = 0;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        const VectorField2 g_u = gradient(ubar.u);
        const VectorField2 g_v = gradient(ubar.v);
        const VectorField2 gt_u = gradient(utbar.u);
        const VectorField2 gt_v = gradient(utbar.v);
        parallel_for(n, [&](int i) {
            const DualPixel arg = {p[0][i] + sigma * g_u.c1[i], p[1][i] + sigma * g_u.c2[i],
                                   p[2][i] + sigma * g_v.c1[i], p[3][i] + sigma * g_v.c2[i],
                                   p[4][i], p[5][i]};
            const DualPixel arg_t = {pt[0][i] + sigma * gt_u.c1[i], pt[1][i] + sigma * gt_u.c2[i],
                                     pt[2][i] + sigma * gt_v.c1[i], pt[3][i] + sigma * gt_v.c2[i],
                                     pt[4][i], pt[5][i]};
            const DualPixel hat = prox_pb_pixel(arg, sigma, gy.c1[i], gy.c2[i],
                                                params.squared_norm_projection);
            const DualPixel hat_t = prox_pi_pixel(arg, arg_t, sigma, gy.c1[i], gy.c2[i]);
            for (int s = 0; s < 6; ++s) {
                p[s][i] = hat[s];
                pt[s][i] = hat_t[s];
            }
        });

        const ScalarField div_u = detail::divergence_of(p[0], p[1]);
        const ScalarField div_v = detail::divergence_of(p[2], p[3]);
        const ScalarField divt_u = detail::divergence_of(pt[0], pt[1]);
        const ScalarField divt_v = detail::divergence_of(pt[2], pt[3]);
        const double denom = 1.0 + tau * params.alpha;
        ChromaPair u_new{ScalarField(n1, n2), ScalarField(n1, n2)};
        ChromaPair ut_new{ScalarField(n1, n2), ScalarField(n1, n2)};
        for (int i = 0; i < n; ++i) {
            u_new.u[i] = (u.u[i] + tau * (div_u[i] + params.alpha * b.u[i])) / denom;
            u_new.v[i] = (u.v[i] + tau * (div_v[i] + params.alpha * b.v[i])) / denom;
            ut_new.u[i] = (ut.u[i] + tau * (divt_u[i] + params.alpha * delta.u[i])) / denom;
            ut_new.v[i] = (ut.v[i] + tau * (divt_v[i] + params.alpha * delta.v[i])) / denom;
        }

        const double theta = 1.0 / std::sqrt(1.0 + tau * params.alpha);
        tau *= theta;
        sigma /= theta;

        for (int i = 0; i < n; ++i) {
            ubar.u[i] = u_new.u[i] + theta * (u_new.u[i] - u.u[i]);
            ubar.v[i] = u_new.v[i] + theta * (u_new.v[i] - u.v[i]);
            utbar.u[i] = ut_new.u[i] + theta * (ut_new.u[i] - ut.u[i]);
            utbar.v[i] = ut_new.v[i] + theta * (ut_new.v[i] - ut.v[i]);
        }

        const double rel =
            std::max(detail::rel_change(u_new, u), detail::rel_change(ut_new, ut));
        u = std::move(u_new);
        ut = std::move(ut_new);
        iterations = iter + 1;
        if (!std::isfinite(rel) || !std::isfinite(norm_sq(ut.u)))
            detail::throw_pd_divergence("debias", iterations, sigma, tau);
        if (trace) {
            trace->tau.push_back(tau);
            trace->sigma.push_back(sigma);
            trace->rel_change.push_back(rel);
            trace->iterations = iterations;
        }
        if (rel < params.fixpoint_tol) break;
    }

    DebiasResult result;
    result.rho = refit_scale(ut, delta);
    result.tilde = std::move(ut);
    result.iterations = iterations;
    result.u = ChromaPair{ScalarField(n1, n2), ScalarField(n1, n2)};
    for (int i = 0; i < n; ++i) {
        result.u.u[i] = u_hat.u[i] + result.rho * result.tilde.u[i];
        result.u.v[i] = u_hat.v[i] + result.rho * result.tilde.v[i];
    }
    return result;
}

}  // namespace morphcolor
