#pragma once

#include <cmath>

#include "morphcolor/field.hpp"

namespace morphcolor {

/// RGB image with channels in [0, 1].
struct ColorImage {
    ScalarField r, g, b;

    ColorImage() = default;
    ColorImage(int rows, int cols) : r(rows, cols), g(rows, cols), b(rows, cols) {}

    int rows() const { return r.rows(); }
    int cols() const { return r.cols(); }
};

/// Planar YUV image; Y stays in [0, 1], chrominance is signed.
struct YuvImage {
    ScalarField y, u, v;

    int rows() const { return y.rows(); }
    int cols() const { return y.cols(); }
};

// Forward YUV matrix and its printed inverse. The two are mutual inverses only
// to the listed precision; round trips are accurate to about 2e-3 per channel.
inline constexpr double kRgbToYuv[3][3] = {
    {0.299, 0.587, 0.114},
    {-0.14713, -0.28886, 0.436},
    {0.615, -0.51498, -0.10001},
};
inline constexpr double kYuvToRgb[3][3] = {
    {1.0, 0.0, 1.13983},
    {1.0, -0.39465, -0.58060},
    {1.0, 2.03211, 0.0},
};

inline YuvImage rgb_to_yuv(const ColorImage& c) {
    require_same_dims(c.r, c.g, "rgb_to_yuv");
    require_same_dims(c.r, c.b, "rgb_to_yuv");
    const int n1 = c.rows(), n2 = c.cols();
    YuvImage out{ScalarField(n1, n2), ScalarField(n1, n2), ScalarField(n1, n2)};
    for (int i = 0; i < n1 * n2; ++i) {
        const double r = c.r[i], g = c.g[i], b = c.b[i];
        out.y[i] = kRgbToYuv[0][0] * r + kRgbToYuv[0][1] * g + kRgbToYuv[0][2] * b;
        out.u[i] = kRgbToYuv[1][0] * r + kRgbToYuv[1][1] * g + kRgbToYuv[1][2] * b;
        out.v[i] = kRgbToYuv[2][0] * r + kRgbToYuv[2][1] * g + kRgbToYuv[2][2] * b;
    }
    return out;
}

/// Inverse conversion; out-of-gamut values are clamped per channel to [0, 1].
inline ColorImage yuv_to_rgb(const YuvImage& img) {
    require_same_dims(img.y, img.u, "yuv_to_rgb");
    require_same_dims(img.y, img.v, "yuv_to_rgb");
    ColorImage out(img.rows(), img.cols());
    for (int i = 0; i < img.y.size(); ++i) {
        const double y = img.y[i], u = img.u[i], v = img.v[i];
        out.r[i] = std::clamp(kYuvToRgb[0][0] * y + kYuvToRgb[0][1] * u + kYuvToRgb[0][2] * v, 0.0, 1.0);
        out.g[i] = std::clamp(kYuvToRgb[1][0] * y + kYuvToRgb[1][1] * u + kYuvToRgb[1][2] * v, 0.0, 1.0);
        out.b[i] = std::clamp(kYuvToRgb[2][0] * y + kYuvToRgb[2][1] * u + kYuvToRgb[2][2] * v, 0.0, 1.0);
    }
    return out;
}

/// Affine luminance normalization: rescales source_y so its mean and
/// (population) variance match the target's. A constant source luminance has
/// no scale to work with and is rejected.
inline ScalarField luminance_remap(const ScalarField& source_y, const ScalarField& target) {
    const double var_src = variance(source_y);
    if (var_src <= 0.0)
        throw DegenerateInputError("luminance_remap: source luminance has zero variance");
    const double scale = std::sqrt(variance(target) / var_src);
    const double m_src = mean(source_y);
    const double m_tar = mean(target);
    ScalarField out(source_y.rows(), source_y.cols());
    for (int i = 0; i < source_y.size(); ++i)
        out[i] = scale * (source_y[i] - m_src) + m_tar;
    return out;
}

}  // namespace morphcolor
