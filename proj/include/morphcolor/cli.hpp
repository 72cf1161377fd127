#pragma once

#include <CLI11.hpp>

#include <string>

#include "morphcolor/pipeline.hpp"

namespace morphcolor {

struct CliParse {
    PipelineConfig config;
    bool help_requested = false;
    std::string help_text;
};

/// Turns argv (plus an optional key=value config file given via --config) into
/// a validated PipelineConfig. Command-line flags override file values.
/// Throws UsageError on bad flags, unknown config keys, or out-of-range
/// values; the message names the offending option.
inline CliParse parse_cli(int argc, const char* const* argv) {
    CLI::App app{"Colorizes a gray-scale face image from a color exemplar by morphing the\n"
                 "exemplar's luminance onto the target and transporting its chrominance\n"
                 "along the recovered deformation path.",
                 "morphcolor"};

    PipelineConfig config;
    double gamma = 50.0, alpha = 0.005;
    int max_pd_iters = 2000;
    bool no_postprocess = false;
    std::string montage_path, intermediates_dir;

    app.add_option("--source", config.source_path, "color exemplar image (PNG/PPM/PGM)")
        ->required();
    app.add_option("--target", config.target_path, "gray-scale image to colorize")->required();
    app.add_option("--out", config.output_path, "output PNG path")->required();

    app.add_option("--mu", config.morph.mu, "elastic regularizer weight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    auto* lambda_opt = app.add_option("--lambda", config.morph.lambda,
                                      "elastic trace weight (defaults to --mu)")
                           ->check(CLI::PositiveNumber);
    app.add_option("--k-steps", config.morph.k_steps, "number of morphing steps K")
        ->check(CLI::Range(2, 1000))
        ->capture_default_str();
    app.add_option("--levels", config.morph.pyramid_levels, "coarse-to-fine pyramid levels")
        ->check(CLI::Range(1, 16))
        ->capture_default_str();
    app.add_option("--outer-iters", config.morph.outer_iterations,
                   "alternation sweeps per pyramid level")
        ->check(CLI::Range(1, 1000))
        ->capture_default_str();
    app.add_option("--reg-iters", config.morph.reg_iterations,
                   "Gauss-Newton iterations per registration")
        ->check(CLI::Range(1, 1000))
        ->capture_default_str();
    app.add_option("--energy-tol", config.morph.energy_tol,
                   "relative energy decrease for early stop")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    app.add_option("--gamma", gamma, "luminance coupling weight of the post-process")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--alpha", alpha, "fidelity weight of the post-process")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-pd-iters", max_pd_iters, "primal-dual iteration cap")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    app.add_flag("--no-postprocess", no_postprocess, "skip the TV clean-up and debiasing");

    app.add_flag("--resize-source", config.resize_source,
                 "rescale the source to the target dimensions");
    app.add_option("--export-montage", montage_path, "write a path montage PNG here");
    app.add_option("--export-intermediates", intermediates_dir,
                   "write the morphing path images into this directory");
    app.add_flag("--emit-rgb-diagnostic", config.emit_rgb_diagnostic,
                 "also write the (unsuitable) direct RGB transport as a diagnostic");

    app.set_config("--config", "", "key=value config file ('#' starts a comment)");
    app.allow_config_extras(false);

    CliParse result;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        result.help_requested = true;
        result.help_text = app.help();
        return result;
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (lambda_opt->count() == 0) config.morph.lambda = config.morph.mu;
    if (no_postprocess) {
        config.post.reset();
    } else {
        PostParams post;
        post.gamma = gamma;
        post.alpha = alpha;
        post.max_iterations = max_pd_iters;
        config.post = post;
    }
    if (!montage_path.empty()) config.montage_path = montage_path;
    if (!intermediates_dir.empty()) config.intermediates_dir = intermediates_dir;

    config.validate();
    result.config = std::move(config);
    return result;
}

}  // namespace morphcolor
