#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "morphcolor/field.hpp"

namespace morphcolor {

struct MorphParams {
    double mu = 0.025;        // elastic shear weight
    double lambda = 0.025;    // elastic trace weight, conventionally equal to mu
    int k_steps = 24;         // number of deformations K along the path
    int pyramid_levels = 4;
    int outer_iterations = 5; // alternation sweeps per pyramid level
    int reg_iterations = 30;  // Gauss-Newton steps per registration
    double energy_tol = 1e-4; // relative energy decrease for early stop

    void validate() const {
        if (!(mu > 0.0) || !(lambda > 0.0))
            throw DegenerateInputError("MorphParams: mu and lambda must be positive");
        if (k_steps < 2) throw DegenerateInputError("MorphParams: k_steps must be at least 2");
        if (pyramid_levels < 1 || outer_iterations < 1 || reg_iterations < 1)
            throw DegenerateInputError("MorphParams: iteration counts must be at least 1");
        if (!(energy_tol >= 0.0)) throw DegenerateInputError("MorphParams: energy_tol must be >= 0");
    }
};

/// Displacements v_1..v_K defining the deformation chain phi_k(x) = x - v_k(x).
using DeformationPath = std::vector<VectorField2>;

/// Images I_0..I_K along the path; I_0 and I_K stay pinned to the endpoints.
using ImagePath = std::vector<ScalarField>;

/// Per-sweep energy record of a morph run.
struct MorphTrace {
    struct Sweep {
        int level = 0;
        int sweep = 0;  // 0 is the energy at level entry
        double energy = 0.0;
    };
    std::vector<Sweep> sweeps;
};

// ---------------------------------------------------------------------------
// elastic regularizer

/// Linearized elastic potential: sum over pixels of
/// mu * tr(eps^T eps) + (lambda/2) * tr(eps)^2, with the strain tensor
/// eps = (grad v + grad v^T) / 2 assembled from the forward-difference stencil.
inline double elastic_potential(const VectorField2& v, double mu, double lambda) {
    require_same_dims(v.c1, v.c2, "elastic_potential");
    const ScalarField a = diff_rows(v.c1);  // d1 v1
    const ScalarField b = diff_cols(v.c2);  // d2 v2
    const ScalarField c = diff_cols(v.c1);  // d2 v1
    const ScalarField d = diff_rows(v.c2);  // d1 v2
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double shear = c[i] + d[i];
        const double trace = a[i] + b[i];
        s += mu * (a[i] * a[i] + b[i] * b[i] + 0.5 * shear * shear) + 0.5 * lambda * trace * trace;
    }
    return s;
}

/// Gradient of elastic_potential with respect to v. The potential is a
/// quadratic form, so this map is linear in v and doubles as the Hessian
/// application needed by the registration solver.
inline VectorField2 elastic_potential_gradient(const VectorField2& v, double mu, double lambda) {
    const ScalarField a = diff_rows(v.c1);
    const ScalarField b = diff_cols(v.c2);
    const ScalarField c = diff_cols(v.c1);
    const ScalarField d = diff_rows(v.c2);
    const int n1 = v.rows(), n2 = v.cols();
    ScalarField pa(n1, n2), pb(n1, n2), pc(n1, n2);
    for (int i = 0; i < pa.size(); ++i) {
        const double trace = lambda * (a[i] + b[i]);
        pa[i] = 2.0 * mu * a[i] + trace;
        pb[i] = 2.0 * mu * b[i] + trace;
        pc[i] = mu * (c[i] + d[i]);
    }
    // adjoint of the difference stencils: d^T = -div component
    VectorField2 g(n1, n2);
    add_div_rows(pa, g.c1);
    add_div_cols(pc, g.c1);
    add_div_rows(pc, g.c2);
    add_div_cols(pb, g.c2);
    g.c1 *= -1.0;
    g.c2 *= -1.0;
    return g;
}

// ---------------------------------------------------------------------------
// path energy

/// Sum over k of ||I_k - I_{k-1} o phi_k||^2 + S(v_k); the quantity the
/// alternating minimization drives downward.
inline double path_energy(const ImagePath& images, const DeformationPath& path,
                          const MorphParams& params) {
    if (images.size() != path.size() + 1)
        throw FieldSizeError("path_energy: need K displacements and K+1 images");
    double total = 0.0;
    for (size_t k = 0; k < path.size(); ++k) {
        require_same_dims(images[k], images[k + 1], "path_energy");
        const ScalarField warped = warp(images[k], path[k]);
        double mismatch = 0.0;
        for (int i = 0; i < warped.size(); ++i) {
            const double d = images[k + 1][i] - warped[i];
            mismatch += d * d;
        }
        total += mismatch + elastic_potential(path[k], params.mu, params.lambda);
    }
    return total;
}

// ---------------------------------------------------------------------------
// registration subproblem

namespace detail {

struct WarpLinearization {
    ScalarField residual;  // warp(moving, v) - fixed
    ScalarField m1, m2;    // interpolant derivatives at the warped positions
};

inline WarpLinearization linearize_warp(const ScalarField& fixed, const ScalarField& moving,
                                        const VectorField2& v) {
    const int n1 = fixed.rows(), n2 = fixed.cols();
    WarpLinearization lin{ScalarField(n1, n2), ScalarField(n1, n2), ScalarField(n1, n2)};
    parallel_for(n1, [&](int i) {
        for (int j = 0; j < n2; ++j) {
            const Point2 p{(i + 1) - v.c1(i, j), (j + 1) - v.c2(i, j)};
            const SampleGrad s = bilinear_sample_grad(moving, p);
            lin.residual(i, j) = s.value - fixed(i, j);
            lin.m1(i, j) = s.d1;
            lin.m2(i, j) = s.d2;
        }
    });
    return lin;
}

inline double registration_objective(const ScalarField& fixed, const ScalarField& moving,
                                     const VectorField2& v, const MorphParams& params) {
    const ScalarField warped = warp(moving, v);
    double mismatch = 0.0;
    for (int i = 0; i < warped.size(); ++i) {
        const double d = fixed[i] - warped[i];
        mismatch += d * d;
    }
    return mismatch + elastic_potential(v, params.mu, params.lambda);
}

/// Conjugate gradient on the Gauss-Newton system H dv = -g. H is applied
/// matrix-free; the data block is diagonal per pixel, the elastic block is
/// the (linear) elastic gradient map.
inline VectorField2 solve_gauss_newton_step(const WarpLinearization& lin, const VectorField2& g,
                                            const MorphParams& params) {
    const int n1 = g.rows(), n2 = g.cols();
    const auto apply_h = [&](const VectorField2& w) {
        VectorField2 out = elastic_potential_gradient(w, params.mu, params.lambda);
        for (int i = 0; i < out.c1.size(); ++i) {
            const double m1 = lin.m1[i], m2 = lin.m2[i];
            out.c1[i] += 2.0 * (m1 * m1 * w.c1[i] + m1 * m2 * w.c2[i]);
            out.c2[i] += 2.0 * (m1 * m2 * w.c1[i] + m2 * m2 * w.c2[i]);
        }
        return out;
    };

    VectorField2 x(n1, n2);
    VectorField2 r = g;  // r = b - H x with x = 0, b = -g
    r.c1 *= -1.0;
    r.c2 *= -1.0;
    VectorField2 p = r;
    double rr = dot(r, r);
    const double target = 1e-3 * 1e-3 * rr;  // relative residual 1e-3
    const int max_iters = 200;
    for (int it = 0; it < max_iters && rr > target && rr > 0.0; ++it) {
        const VectorField2 hp = apply_h(p);
        const double php = dot(p, hp);
        if (!(php > 0.0)) break;  // hit the semidefinite nullspace
        const double alpha = rr / php;
        for (int i = 0; i < x.c1.size(); ++i) {
            x.c1[i] += alpha * p.c1[i];
            x.c2[i] += alpha * p.c2[i];
            r.c1[i] -= alpha * hp.c1[i];
            r.c2[i] -= alpha * hp.c2[i];
        }
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (int i = 0; i < p.c1.size(); ++i) {
            p.c1[i] = r.c1[i] + beta * p.c1[i];
            p.c2[i] = r.c2[i] + beta * p.c2[i];
        }
    }
    return x;
}

}  // namespace detail

/// Solves one registration problem min_v ||fixed - warp(moving, v)||^2 + S(v)
/// by Gauss-Newton with Armijo backtracking, starting from v_init. The result
/// never has higher objective than v_init.
inline VectorField2 register_displacement(const ScalarField& fixed, const ScalarField& moving,
                                          const VectorField2& v_init, const MorphParams& params) {
    require_same_dims(fixed, moving, "register_displacement");
    require_same_dims(fixed, v_init.c1, "register_displacement");

    VectorField2 v = v_init;
    double energy = detail::registration_objective(fixed, moving, v, params);
    if (!std::isfinite(energy))
        throw SolverDivergenceError("register_displacement: non-finite energy at start");

    const double grad_tol_sq = 1e-24 * std::max(1.0, energy);
    for (int iter = 0; iter < params.reg_iterations; ++iter) {
        const detail::WarpLinearization lin = detail::linearize_warp(fixed, moving, v);
        VectorField2 g = elastic_potential_gradient(v, params.mu, params.lambda);
        for (int i = 0; i < g.c1.size(); ++i) {
            const double two_r = 2.0 * lin.residual[i];
            g.c1[i] -= lin.m1[i] * two_r;
            g.c2[i] -= lin.m2[i] * two_r;
        }
        if (dot(g, g) <= grad_tol_sq) break;

        VectorField2 step = detail::solve_gauss_newton_step(lin, g, params);
        double descent = dot(step, g);
        if (!(descent < 0.0)) {  // CG did not produce a descent direction
            step = g;
            step.c1 *= -1.0;
            step.c2 *= -1.0;
            descent = -dot(g, g);
        }

        double alpha = 1.0;
        bool accepted = false;
        VectorField2 trial(v.rows(), v.cols());
        while (alpha >= 1e-12) {
            for (int i = 0; i < trial.c1.size(); ++i) {
                trial.c1[i] = v.c1[i] + alpha * step.c1[i];
                trial.c2[i] = v.c2[i] + alpha * step.c2[i];
            }
            const double trial_energy = detail::registration_objective(fixed, moving, trial, params);
            if (std::isfinite(trial_energy) && trial_energy <= energy + 1e-4 * alpha * descent) {
                v = std::move(trial);
                trial = VectorField2(v.rows(), v.cols());
                energy = trial_energy;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;
        if (!std::isfinite(energy))
            throw SolverDivergenceError("register_displacement: energy diverged");
    }
    return v;
}

// ---------------------------------------------------------------------------
// trajectories and the image-sequence solve

/// Backward-composed positions X_K..X_0 of every target pixel: X_K(x) = x and
/// X_{k-1}(x) = X_k(x) - v_k(X_k(x)), each clamped to the grid box. Entry k of
/// the result holds the positions X_k as a coordinate field.
inline std::vector<VectorField2> trajectories(const DeformationPath& path) {
    if (path.empty()) throw FieldSizeError("trajectories: empty deformation path");
    const int n1 = path[0].rows(), n2 = path[0].cols();
    const int k_steps = static_cast<int>(path.size());
    std::vector<VectorField2> x(static_cast<size_t>(k_steps) + 1);
    x[k_steps] = identity_grid(n1, n2);

    for (int k = k_steps; k >= 1; --k) {
        const VectorField2& v = path[k - 1];
        require_same_dims(v.c1, x[k_steps].c1, "trajectories");
        const VectorField2& cur = x[k];
        VectorField2 prev(n1, n2);
        parallel_for(n1, [&](int i) {
            for (int j = 0; j < n2; ++j) {
                const Point2 p{cur.c1(i, j), cur.c2(i, j)};
                const double r = p.x1 - bilinear_sample(v.c1, p);
                const double c = p.x2 - bilinear_sample(v.c2, p);
                prev.c1(i, j) = std::clamp(r, 1.0, static_cast<double>(n1));
                prev.c2(i, j) = std::clamp(c, 1.0, static_cast<double>(n2));
            }
        });
        x[k - 1] = std::move(prev);
    }
    return x;
}

/// Composed map Phi = phi_1 o ... o phi_K at every target grid point, clamped
/// into the grid box; the position in the source that target pixel x samples.
inline VectorField2 compose_map(const DeformationPath& path) {
    return trajectories(path).front();
}

/// Solves the per-pixel Euler-Lagrange system
///   tridiag(-1, 1 + a_k, -a_k) F = (F_0, 0, ..., 0, a_{K-1} F_K)
/// for the interior path values F_1..F_{K-1}. With every a_k > 0 the matrix is
/// irreducibly diagonally dominant, so plain elimination cannot break down.
inline std::vector<double> solve_geodesic_tridiagonal(const std::vector<double>& a, double f0,
                                                      double fK) {
    const int n = static_cast<int>(a.size());  // n = K - 1 unknowns
    for (double ak : a)
        if (!(ak > 0.0))
            throw NonDiffeomorphicStepError("image sequence: a_k <= 0 (deformation not invertible)");
    std::vector<double> f(static_cast<size_t>(n), 0.0);
    if (n == 0) return f;

    std::vector<double> diag(static_cast<size_t>(n)), rhs(static_cast<size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) diag[k] = 1.0 + a[k];
    rhs[0] = f0;
    rhs[n - 1] += a[n - 1] * fK;

    // forward elimination; sub-diagonal is -1, super-diagonal is -a_k
    for (int k = 1; k < n; ++k) {
        const double m = -1.0 / diag[k - 1];
        diag[k] -= m * (-a[k - 1]);
        rhs[k] -= m * rhs[k - 1];
    }
    f[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int k = n - 2; k >= 0; --k) f[k] = (rhs[k] + a[k] * f[k + 1]) / diag[k];
    return f;
}

namespace detail {

/// Scatter samples (positions, values) onto the grid with bilinear weights,
/// then fill any uncovered pixels from covered neighbors, ring by ring.
inline ScalarField splat_to_grid(const VectorField2& positions, const ScalarField& values) {
    const int n1 = values.rows(), n2 = values.cols();
    ScalarField num(n1, n2), den(n1, n2);
    for (int i = 0; i < n1; ++i) {
        for (int j = 0; j < n2; ++j) {
            const double p1 = std::clamp(positions.c1(i, j), 1.0, static_cast<double>(n1));
            const double p2 = std::clamp(positions.c2(i, j), 1.0, static_cast<double>(n2));
            int bi = static_cast<int>(p1);
            int bj = static_cast<int>(p2);
            if (bi > n1 - 1) bi = n1 - 1;
            if (bj > n2 - 1) bj = n2 - 1;
            const double s = p1 - bi;
            const double t = p2 - bj;
            const double w00 = (1.0 - s) * (1.0 - t);
            const double w01 = (1.0 - s) * t;
            const double w10 = s * (1.0 - t);
            const double w11 = s * t;
            const double val = values(i, j);
            num(bi - 1, bj - 1) += w00 * val;
            den(bi - 1, bj - 1) += w00;
            num(bi - 1, bj) += w01 * val;
            den(bi - 1, bj) += w01;
            num(bi, bj - 1) += w10 * val;
            den(bi, bj - 1) += w10;
            num(bi, bj) += w11 * val;
            den(bi, bj) += w11;
        }
    }

    ScalarField out(n1, n2);
    std::vector<char> covered(static_cast<size_t>(n1) * n2, 0);
    int uncovered = 0;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            if (den(i, j) > 1e-12) {
                out(i, j) = num(i, j) / den(i, j);
                covered[static_cast<size_t>(i) * n2 + j] = 1;
            } else {
                ++uncovered;
            }
        }

    while (uncovered > 0) {
        std::vector<char> next_covered = covered;
        int filled = 0;
        for (int i = 0; i < n1; ++i) {
            for (int j = 0; j < n2; ++j) {
                if (covered[static_cast<size_t>(i) * n2 + j]) continue;
                double sum = 0.0;
                int cnt = 0;
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj) {
                        const int ni = i + di, nj = j + dj;
                        if (ni < 0 || ni >= n1 || nj < 0 || nj >= n2) continue;
                        if (!covered[static_cast<size_t>(ni) * n2 + nj]) continue;
                        sum += out(ni, nj);
                        ++cnt;
                    }
                }
                if (cnt > 0) {
                    out(i, j) = sum / cnt;
                    next_covered[static_cast<size_t>(i) * n2 + j] = 1;
                    ++filled;
                }
            }
        }
        covered.swap(next_covered);
        uncovered -= filled;
        if (filled == 0) break;  // cannot happen once any pixel is covered
    }
    return out;
}

}  // namespace detail

/// Minimizes the path energy over the intermediate images for fixed
/// deformations. Per pixel this solves the tridiagonal Euler-Lagrange system
/// along the trajectory, then the scattered solution values are splatted back
/// onto the grid. Endpoints are re-pinned to template/target bit-exactly.
inline ImagePath image_sequence_step(const DeformationPath& path, const ScalarField& template_image,
                                     const ScalarField& target_image) {
    require_same_dims(template_image, target_image, "image_sequence_step");
    if (path.empty()) throw FieldSizeError("image_sequence_step: empty deformation path");
    for (const auto& v : path) require_same_dims(v.c1, template_image, "image_sequence_step");

    const int k_steps = static_cast<int>(path.size());
    const int n1 = template_image.rows(), n2 = template_image.cols();

    ImagePath images(static_cast<size_t>(k_steps) + 1);
    images[0] = template_image;
    images[k_steps] = target_image;
    if (k_steps == 1) return images;

    // a_k needs det(grad phi_{k+1}) along the trajectory; a positive grid
    // field stays positive under bilinear sampling, so positivity is checked
    // once per deformation here.
    std::vector<ScalarField> dets(path.size());
    for (size_t k = 0; k < path.size(); ++k) {
        dets[k] = jacobian_determinant(path[k]);
        if (!(min_value(dets[k]) > 0.0))
            throw NonDiffeomorphicStepError(
                "image sequence: det(grad phi) <= 0 for step " + std::to_string(k + 1));
    }

    const std::vector<VectorField2> x = trajectories(path);

    std::vector<ScalarField> samples(static_cast<size_t>(k_steps) - 1,
                                     ScalarField(n1, n2));
    parallel_for(n1, [&](int i) {
        std::vector<double> a(static_cast<size_t>(k_steps) - 1);
        for (int j = 0; j < n2; ++j) {
            for (int k = 1; k < k_steps; ++k) {
                const Point2 p{x[k + 1].c1(i, j), x[k + 1].c2(i, j)};
                a[k - 1] = 1.0 / bilinear_sample(dets[k], p);
            }
            const double f0 =
                bilinear_sample(template_image, Point2{x[0].c1(i, j), x[0].c2(i, j)});
            const double fK = target_image(i, j);
            const std::vector<double> f = solve_geodesic_tridiagonal(a, f0, fK);
            for (int k = 1; k < k_steps; ++k) samples[k - 1](i, j) = f[k - 1];
        }
    });

    for (int k = 1; k < k_steps; ++k)
        images[k] = detail::splat_to_grid(x[k], samples[k - 1]);
    return images;
}

// ---------------------------------------------------------------------------
// full morph

namespace detail {

inline ImagePath linear_interpolation_path(const ScalarField& first, const ScalarField& last,
                                           int k_steps) {
    ImagePath images(static_cast<size_t>(k_steps) + 1);
    images[0] = first;
    images[k_steps] = last;
    for (int k = 1; k < k_steps; ++k) {
        const double w = static_cast<double>(k) / k_steps;
        ScalarField img(first.rows(), first.cols());
        for (int i = 0; i < img.size(); ++i) img[i] = first[i] + w * (last[i] - first[i]);
        images[k] = std::move(img);
    }
    return images;
}

}  // namespace detail

/// Computes the time-discrete morphing between two images of equal size by
/// alternating K registrations with the image-sequence solve under a
/// coarse-to-fine pyramid. The recorded per-sweep energy never increases
/// within a level.
inline std::pair<ImagePath, DeformationPath> morph(const ScalarField& template_image,
                                                   const ScalarField& target_image,
                                                   const MorphParams& params,
                                                   MorphTrace* trace = nullptr) {
    params.validate();
    require_same_dims(template_image, target_image, "morph");
    const int k_steps = params.k_steps;

    // Coarse-to-fine endpoint pyramid; levels stop early once a further
    // restriction would drop below the minimum field size.
    std::vector<std::pair<ScalarField, ScalarField>> pyramid;
    pyramid.emplace_back(template_image, target_image);
    while (static_cast<int>(pyramid.size()) < params.pyramid_levels) {
        const ScalarField& t = pyramid.back().first;
        if (t.rows() < 4 || t.cols() < 4) break;
        pyramid.emplace_back(restrict_field(pyramid.back().first),
                             restrict_field(pyramid.back().second));
    }

    DeformationPath path;
    ImagePath images;
    for (int level = static_cast<int>(pyramid.size()) - 1; level >= 0; --level) {
        const ScalarField& templ = pyramid[static_cast<size_t>(level)].first;
        const ScalarField& target = pyramid[static_cast<size_t>(level)].second;

        if (path.empty()) {
            path.assign(static_cast<size_t>(k_steps), VectorField2(templ.rows(), templ.cols()));
            images = detail::linear_interpolation_path(templ, target, k_steps);
        } else {
            for (auto& v : path) v = prolong_displacement(v, templ.rows(), templ.cols());
            images = image_sequence_step(path, templ, target);
        }

        double energy = path_energy(images, path, params);
        if (trace) trace->sweeps.push_back({level, 0, energy});

        for (int sweep = 1; sweep <= params.outer_iterations; ++sweep) {
            for (int k = 0; k < k_steps; ++k)
                path[static_cast<size_t>(k)] = register_displacement(
                    images[static_cast<size_t>(k) + 1], images[static_cast<size_t>(k)],
                    path[static_cast<size_t>(k)], params);
            const double energy_after_reg = path_energy(images, path, params);

            // The image solve is exact along trajectories but re-gridding can
            // cost a little; keep whichever iterate is better so the sweep
            // energy is monotone.
            ImagePath candidate = image_sequence_step(path, templ, target);
            const double energy_after_images = path_energy(candidate, path, params);
            double new_energy;
            if (energy_after_images <= energy_after_reg) {
                images = std::move(candidate);
                new_energy = energy_after_images;
            } else {
                new_energy = energy_after_reg;
            }
            if (!std::isfinite(new_energy))
                throw SolverDivergenceError("morph: path energy diverged");
            if (trace) trace->sweeps.push_back({level, sweep, new_energy});

            const double decrease = energy - new_energy;
            energy = new_energy;
            if (decrease <= params.energy_tol * std::max(energy, 1e-30)) break;
        }
    }
    return {std::move(images), std::move(path)};
}

}  // namespace morphcolor
