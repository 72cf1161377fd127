#pragma once

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "morphcolor/colorspace.hpp"
#include "morphcolor/image_io.hpp"
#include "morphcolor/morphing.hpp"
#include "morphcolor/postprocess.hpp"
#include "morphcolor/transfer.hpp"

namespace morphcolor {

struct PipelineConfig {
    std::string source_path;
    std::string target_path;
    std::string output_path;
    MorphParams morph;
    std::optional<PostParams> post = PostParams{};  // nullopt skips post-processing
    bool resize_source = false;
    std::optional<std::string> montage_path;
    std::optional<std::string> intermediates_dir;
    bool emit_rgb_diagnostic = false;

    void validate() const {
        if (source_path.empty() || target_path.empty() || output_path.empty())
            throw UsageError("source, target, and output paths must be set");
        morph.validate();
        if (post) post->validate();
    }
};

inline constexpr int kMontageGutter = 4;

/// Writes a single-row montage of the morphing path: tile k shows image I_k
/// colorized with the source chrominance pulled through the partial
/// composition phi_1 o ... o phi_k. Tiles are separated by white gutters; the
/// last tile matches the (un-post-processed) pipeline output.
inline void export_montage(const ImagePath& images, const DeformationPath& path,
                           const ScalarField& u_src, const ScalarField& v_src,
                           const std::string& out_path) {
    if (images.size() != path.size() + 1)
        throw FieldSizeError("export_montage: need K displacements and K+1 images");
    const int k_steps = static_cast<int>(path.size());
    const int n1 = images[0].rows(), n2 = images[0].cols();

    ColorImage montage(n1, (k_steps + 1) * n2 + k_steps * kMontageGutter);
    for (auto* plane : {&montage.r, &montage.g, &montage.b})
        for (int i = 0; i < plane->size(); ++i) (*plane)[i] = 1.0;

    for (int k = 0; k <= k_steps; ++k) {
        const VectorField2 psi =
            k == 0 ? identity_grid(n1, n2)
                   : compose_map(DeformationPath(path.begin(), path.begin() + k));
        const ChromaPair chroma = transfer_chrominance(psi, u_src, v_src);
        const ColorImage tile = colorize(images[static_cast<size_t>(k)], chroma.u, chroma.v);
        const int off = k * (n2 + kMontageGutter);
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j) {
                montage.r(i, off + j) = tile.r(i, j);
                montage.g(i, off + j) = tile.g(i, j);
                montage.b(i, off + j) = tile.b(i, j);
            }
    }
    save_png(out_path, montage);
}

namespace detail {

inline ScalarField clamp_unit(ScalarField f) {
    for (int i = 0; i < f.size(); ++i) f[i] = std::clamp(f[i], 0.0, 1.0);
    return f;
}

inline std::string with_suffix(const std::string& path, const std::string& suffix) {
    const auto dot = path.rfind('.');
    const auto slash = path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + suffix;
    return path.substr(0, dot) + suffix + path.substr(dot);
}

}  // namespace detail

/// End-to-end pipeline: load, remap luminance, morph, transport chrominance,
/// optionally clean it up, write the colorized PNG. Progress is logged as
/// key=value lines. Throws the module errors; the CLI maps them to exit codes.
inline void run_pipeline(const PipelineConfig& config, std::ostream& log) {
    config.validate();

    ColorImage source = load_image(config.source_path);
    const ColorImage target = load_image(config.target_path);

    if (source.rows() != target.rows() || source.cols() != target.cols()) {
        if (!config.resize_source) {
            std::ostringstream msg;
            msg << "source and target must have equal dimensions (got " << source.cols() << "x"
                << source.rows() << " vs " << target.cols() << "x" << target.rows()
                << "); pass --resize-source to rescale the source";
            throw FieldSizeError(msg.str());
        }
        source.r = resize_bilinear(source.r, target.rows(), target.cols());
        source.g = resize_bilinear(source.g, target.rows(), target.cols());
        source.b = resize_bilinear(source.b, target.rows(), target.cols());
    }

    const bool target_is_gray = nearly_grayscale(target);
    const ScalarField target_y = target_is_gray ? gray_plane(target) : rgb_to_yuv(target).y;
    const YuvImage source_yuv = rgb_to_yuv(source);

    log << "stage=load source=" << config.source_path << " target=" << config.target_path
        << " width=" << target.cols() << " height=" << target.rows()
        << " target_gray=" << (target_is_gray ? 1 : 0) << "\n";

    const ScalarField template_image =
        detail::clamp_unit(luminance_remap(source_yuv.y, target_y));

    MorphTrace trace;
    auto [images, path] = morph(template_image, target_y, config.morph, &trace);
    for (const auto& s : trace.sweeps)
        log << "stage=morph level=" << s.level << " sweep=" << s.sweep << " energy="
            << std::setprecision(12) << s.energy << "\n";

    const VectorField2 phi = compose_map(path);
    const ChromaPair transported = transfer_chrominance(phi, source_yuv.u, source_yuv.v);

    if (config.montage_path)
        export_montage(images, path, source_yuv.u, source_yuv.v, *config.montage_path);
    if (config.intermediates_dir) {
        std::filesystem::create_directories(*config.intermediates_dir);
        for (size_t k = 0; k < images.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "path_%02zu.png", k);
            save_png_gray((std::filesystem::path(*config.intermediates_dir) / name).string(),
                          images[k]);
        }
    }
    if (config.emit_rgb_diagnostic) {
        // direct RGB transport through the map; kept as a diagnostic because
        // it mixes luminance across the path and is not a colorization
        ColorImage diag(target.rows(), target.cols());
        const ChromaPair rg = transfer_chrominance(phi, source.r, source.g);
        parallel_for(target.rows(), [&](int i) {
            for (int j = 0; j < target.cols(); ++j) {
                diag.r(i, j) = rg.u(i, j);
                diag.g(i, j) = rg.v(i, j);
                diag.b(i, j) = bilinear_sample(source.b, Point2{phi.c1(i, j), phi.c2(i, j)});
            }
        });
        save_png(detail::with_suffix(config.output_path, "_rgb_transport"), diag);
    }

    ChromaPair final_chroma = transported;
    if (config.post) {
        PdTrace tv_trace;
        const ChromaPair u_hat = tv_chrominance(transported, target_y, *config.post, &tv_trace);
        log << "stage=tv iterations=" << tv_trace.iterations << " rel_change="
            << (tv_trace.rel_change.empty() ? 0.0 : tv_trace.rel_change.back()) << "\n";

        PdTrace debias_trace;
        DebiasResult debiased = debias(transported, u_hat, target_y, *config.post, &debias_trace);
        log << "stage=debias iterations=" << debias_trace.iterations << " rho=" << debiased.rho
            << "\n";
        final_chroma = std::move(debiased.u);
    }

    const ColorImage out = colorize(target_y, final_chroma.u, final_chroma.v);
    save_png(config.output_path, out);
    log << "stage=done output=" << config.output_path << "\n";
}

}  // namespace morphcolor
