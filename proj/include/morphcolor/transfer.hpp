#pragma once

#include <utility>

#include "morphcolor/colorspace.hpp"
#include "morphcolor/field.hpp"

namespace morphcolor {

/// Chrominance planes of one image.
struct ChromaPair {
    ScalarField u, v;
};

/// Pulls both source chrominance planes through the composed map:
/// output(x) = (U(phi(x)), V(phi(x))) with bilinear sampling. phi holds one
/// source position per target pixel, as produced by compose_map.
inline ChromaPair transfer_chrominance(const VectorField2& phi, const ScalarField& u_src,
                                       const ScalarField& v_src) {
    require_same_dims(u_src, v_src, "transfer_chrominance");
    const int n1 = phi.rows(), n2 = phi.cols();
    ChromaPair out{ScalarField(n1, n2), ScalarField(n1, n2)};
    parallel_for(n1, [&](int i) {
        for (int j = 0; j < n2; ++j) {
            const Point2 p{phi.c1(i, j), phi.c2(i, j)};
            out.u(i, j) = bilinear_sample(u_src, p);
            out.v(i, j) = bilinear_sample(v_src, p);
        }
    });
    return out;
}

/// Reassembles an RGB image from the target luminance and the transported
/// chrominance. Wherever no gamut clamp fires, converting the result back to
/// YUV reproduces y_tar up to the printed-matrix round-trip error.
inline ColorImage colorize(const ScalarField& y_tar, const ScalarField& u_tar,
                           const ScalarField& v_tar) {
    require_same_dims(y_tar, u_tar, "colorize");
    require_same_dims(y_tar, v_tar, "colorize");
    return yuv_to_rgb(YuvImage{y_tar, u_tar, v_tar});
}

}  // namespace morphcolor
