#pragma once

#include <cassert>
#include <cmath>
#include <vector>

#include "morphcolor/common.hpp"

namespace morphcolor {

// Real-valued image on an n1 x n2 pixel grid.
//
// Storage is row-major with 0-based (i, j) access. Sampling coordinates are
// 1-based: pixel (i, j) of the storage sits at coordinate (i + 1, j + 1), so
// the grid covers the box [1, n1] x [1, n2]. Everything that takes a Point2
// (bilinear_sample, warp, trajectories, ...) works in that coordinate system.
class ScalarField {
public:
    ScalarField() = default;

    ScalarField(int rows, int cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, value) {
        if (rows < 2 || cols < 2)
            throw FieldSizeError("ScalarField requires at least 2x2 pixels");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j) {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<size_t>(i) * cols_ + j];
    }
    double operator()(int i, int j) const {
        assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
        return data_[static_cast<size_t>(i) * cols_ + j];
    }

    double& operator[](int idx) { return data_[static_cast<size_t>(idx)]; }
    double operator[](int idx) const { return data_[static_cast<size_t>(idx)]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_dims(const ScalarField& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    ScalarField& operator+=(const ScalarField& o) {
        assert(same_dims(o));
        for (int i = 0; i < size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        assert(same_dims(o));
        for (int i = 0; i < size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Position (or any 2-vector) in 1-based grid coordinates; x1 runs over rows.
struct Point2 {
    double x1 = 0.0;
    double x2 = 0.0;
};

/// Per-pixel 2-vector field; c1 is the row component, c2 the column component.
struct VectorField2 {
    ScalarField c1;
    ScalarField c2;

    VectorField2() = default;
    VectorField2(int rows, int cols, double v1 = 0.0, double v2 = 0.0)
        : c1(rows, cols, v1), c2(rows, cols, v2) {}

    int rows() const { return c1.rows(); }
    int cols() const { return c1.cols(); }
    bool same_dims(const VectorField2& o) const {
        return c1.same_dims(o.c1) && c2.same_dims(o.c2);
    }
};

inline void require_same_dims(const ScalarField& a, const ScalarField& b, const char* what) {
    if (!a.same_dims(b)) throw FieldSizeError(std::string(what) + ": field dimensions differ");
}

// ---------------------------------------------------------------------------
// reductions

inline double dot(const ScalarField& a, const ScalarField& b) {
    assert(a.same_dims(b));
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_sq(const ScalarField& a) { return dot(a, a); }

inline double dot(const VectorField2& a, const VectorField2& b) {
    return dot(a.c1, b.c1) + dot(a.c2, b.c2);
}

inline double norm_sq(const VectorField2& a) { return dot(a, a); }

inline double mean(const ScalarField& f) {
    double s = 0.0;
    for (int i = 0; i < f.size(); ++i) s += f[i];
    return s / f.size();
}

/// Population variance (1/N normalization).
inline double variance(const ScalarField& f) {
    const double m = mean(f);
    double s = 0.0;
    for (int i = 0; i < f.size(); ++i) {
        const double d = f[i] - m;
        s += d * d;
    }
    return s / f.size();
}

inline double min_value(const ScalarField& f) {
    double m = f[0];
    for (int i = 1; i < f.size(); ++i) m = std::min(m, f[i]);
    return m;
}

inline double max_value(const ScalarField& f) {
    double m = f[0];
    for (int i = 1; i < f.size(); ++i) m = std::max(m, f[i]);
    return m;
}

inline double max_abs(const ScalarField& f) {
    double m = 0.0;
    for (int i = 0; i < f.size(); ++i) m = std::max(m, std::fabs(f[i]));
    return m;
}

// ---------------------------------------------------------------------------
// interpolation

/// Bilinear interpolant of f at p. Coordinates are clamped componentwise to
/// the grid box [1, n1] x [1, n2], so every query is valid; integer
/// coordinates reproduce grid values exactly.
inline double bilinear_sample(const ScalarField& f, Point2 p) {
    const int n1 = f.rows(), n2 = f.cols();
    const double p1 = std::clamp(p.x1, 1.0, static_cast<double>(n1));
    const double p2 = std::clamp(p.x2, 1.0, static_cast<double>(n2));
    int i = static_cast<int>(p1);
    int j = static_cast<int>(p2);
    if (i > n1 - 1) i = n1 - 1;
    if (j > n2 - 1) j = n2 - 1;
    const double s = p1 - i;
    const double t = p2 - j;
    const double f00 = f(i - 1, j - 1), f01 = f(i - 1, j);
    const double f10 = f(i, j - 1), f11 = f(i, j);
    return (1.0 - s) * ((1.0 - t) * f00 + t * f01) + s * ((1.0 - t) * f10 + t * f11);
}

struct SampleGrad {
    double value = 0.0;
    double d1 = 0.0;  // derivative along rows
    double d2 = 0.0;  // derivative along columns
};

/// bilinear_sample plus the derivative of the interpolant with respect to the
/// query point. Where a coordinate is clamped the interpolant is constant in
/// that direction, so the corresponding derivative is zero.
inline SampleGrad bilinear_sample_grad(const ScalarField& f, Point2 p) {
    const int n1 = f.rows(), n2 = f.cols();
    const bool clamped1 = p.x1 < 1.0 || p.x1 > static_cast<double>(n1);
    const bool clamped2 = p.x2 < 1.0 || p.x2 > static_cast<double>(n2);
    const double p1 = std::clamp(p.x1, 1.0, static_cast<double>(n1));
    const double p2 = std::clamp(p.x2, 1.0, static_cast<double>(n2));
    int i = static_cast<int>(p1);
    int j = static_cast<int>(p2);
    if (i > n1 - 1) i = n1 - 1;
    if (j > n2 - 1) j = n2 - 1;
    const double s = p1 - i;
    const double t = p2 - j;
    const double f00 = f(i - 1, j - 1), f01 = f(i - 1, j);
    const double f10 = f(i, j - 1), f11 = f(i, j);
    SampleGrad out;
    out.value = (1.0 - s) * ((1.0 - t) * f00 + t * f01) + s * ((1.0 - t) * f10 + t * f11);
    out.d1 = clamped1 ? 0.0 : (1.0 - t) * (f10 - f00) + t * (f11 - f01);
    out.d2 = clamped2 ? 0.0 : (1.0 - s) * (f01 - f00) + s * (f11 - f10);
    return out;
}

// ---------------------------------------------------------------------------
// difference operators
//
// gradient is the forward difference with homogeneous Neumann boundary (the
// last row/column difference is zero); divergence is its exact negative
// adjoint, <gradient(f), w> = -<f, divergence(w)> for all f and w.

inline ScalarField diff_rows(const ScalarField& f) {
    const int n1 = f.rows(), n2 = f.cols();
    ScalarField out(n1, n2);
    for (int i = 0; i + 1 < n1; ++i)
        for (int j = 0; j < n2; ++j) out(i, j) = f(i + 1, j) - f(i, j);
    return out;
}

inline ScalarField diff_cols(const ScalarField& f) {
    const int n1 = f.rows(), n2 = f.cols();
    ScalarField out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j + 1 < n2; ++j) out(i, j) = f(i, j + 1) - f(i, j);
    return out;
}

inline VectorField2 gradient(const ScalarField& f) {
    VectorField2 g;
    g.c1 = diff_rows(f);
    g.c2 = diff_cols(f);
    return g;
}

/// Accumulates the row part of the divergence of w1 into out.
inline void add_div_rows(const ScalarField& w1, ScalarField& out) {
    const int n1 = w1.rows(), n2 = w1.cols();
    for (int j = 0; j < n2; ++j) out(0, j) += w1(0, j);
    for (int i = 1; i + 1 < n1; ++i)
        for (int j = 0; j < n2; ++j) out(i, j) += w1(i, j) - w1(i - 1, j);
    for (int j = 0; j < n2; ++j) out(n1 - 1, j) -= w1(n1 - 2, j);
}

/// Accumulates the column part of the divergence of w2 into out.
inline void add_div_cols(const ScalarField& w2, ScalarField& out) {
    const int n1 = w2.rows(), n2 = w2.cols();
    for (int i = 0; i < n1; ++i) {
        out(i, 0) += w2(i, 0);
        for (int j = 1; j + 1 < n2; ++j) out(i, j) += w2(i, j) - w2(i, j - 1);
        out(i, n2 - 1) -= w2(i, n2 - 2);
    }
}

inline ScalarField divergence(const VectorField2& w) {
    require_same_dims(w.c1, w.c2, "divergence");
    ScalarField out(w.rows(), w.cols());
    add_div_rows(w.c1, out);
    add_div_cols(w.c2, out);
    return out;
}

// ---------------------------------------------------------------------------
// warping

/// Deforms f by the displacement v: output(x) = f(x - v(x)) with bilinear
/// sampling, for every grid point x. v = 0 is the identity, bit-exact.
inline ScalarField warp(const ScalarField& f, const VectorField2& v) {
    require_same_dims(f, v.c1, "warp");
    const int n1 = f.rows(), n2 = f.cols();
    ScalarField out(n1, n2);
    parallel_for(n1, [&](int i) {
        for (int j = 0; j < n2; ++j) {
            const Point2 p{(i + 1) - v.c1(i, j), (j + 1) - v.c2(i, j)};
            out(i, j) = bilinear_sample(f, p);
        }
    });
    return out;
}

/// Per-pixel det of the deformation Jacobian for phi(x) = x - v(x), assembled
/// from the forward-difference gradient of each displacement component.
inline ScalarField jacobian_determinant(const VectorField2& v) {
    require_same_dims(v.c1, v.c2, "jacobian_determinant");
    const VectorField2 g1 = gradient(v.c1);
    const VectorField2 g2 = gradient(v.c2);
    const int n1 = v.rows(), n2 = v.cols();
    ScalarField out(n1, n2);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            out(i, j) = (1.0 - g1.c1(i, j)) * (1.0 - g2.c2(i, j)) - g1.c2(i, j) * g2.c1(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// pyramid resampling

/// Halves each dimension by 2x2 box averaging; an odd trailing row/column is
/// folded into the last block.
inline ScalarField restrict_field(const ScalarField& f) {
    const int n1 = f.rows(), n2 = f.cols();
    if (n1 < 4 || n2 < 4)
        throw FieldSizeError("restrict_field requires at least 4 pixels per dimension");
    const int m1 = n1 / 2, m2 = n2 / 2;
    ScalarField out(m1, m2);
    for (int i = 0; i < m1; ++i) {
        const int r0 = 2 * i;
        const int r1 = (i == m1 - 1) ? n1 : 2 * i + 2;
        for (int j = 0; j < m2; ++j) {
            const int c0 = 2 * j;
            const int c1 = (j == m2 - 1) ? n2 : 2 * j + 2;
            double s = 0.0;
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) s += f(r, c);
            out(i, j) = s / ((r1 - r0) * (c1 - c0));
        }
    }
    return out;
}

/// Corner-aligned bilinear resampling to new dimensions.
inline ScalarField resize_bilinear(const ScalarField& f, int new_rows, int new_cols) {
    const double sr = static_cast<double>(f.rows() - 1) / (new_rows - 1);
    const double sc = static_cast<double>(f.cols() - 1) / (new_cols - 1);
    ScalarField out(new_rows, new_cols);
    parallel_for(new_rows, [&](int i) {
        for (int j = 0; j < new_cols; ++j)
            out(i, j) = bilinear_sample(f, Point2{1.0 + i * sr, 1.0 + j * sc});
    });
    return out;
}

/// Coordinate field holding every pixel's own 1-based position.
inline VectorField2 identity_grid(int rows, int cols) {
    VectorField2 out(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            out.c1(i, j) = i + 1;
            out.c2(i, j) = j + 1;
        }
    return out;
}

/// Upsamples a displacement field to new dimensions and rescales the values by
/// the grid-size ratio so they stay in pixel units of the finer grid.
inline VectorField2 prolong_displacement(const VectorField2& v, int new_rows, int new_cols) {
    require_same_dims(v.c1, v.c2, "prolong_displacement");
    VectorField2 out;
    out.c1 = resize_bilinear(v.c1, new_rows, new_cols);
    out.c2 = resize_bilinear(v.c2, new_rows, new_cols);
    out.c1 *= static_cast<double>(new_rows) / v.rows();
    out.c2 *= static_cast<double>(new_cols) / v.cols();
    return out;
}

}  // namespace morphcolor
