#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "morphcolor/cli.hpp"
#include "morphcolor/image_io.hpp"
#include "morphcolor/pipeline.hpp"
#include "synthetic.hpp"

using namespace morphcolor;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path dir = MORPHCOLOR_TEST_TMPDIR;
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MORPHCOLOR_CLI_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig parse_args(std::vector<std::string> args) {
    args.insert(args.begin(), "morphcolor");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return parse_cli(static_cast<int>(argv.size()), argv.data()).config;
}

ColorImage smooth_color_image(int rows, int cols) {
    ColorImage img(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double a = double(i) / (rows - 1);
            const double b = double(j) / (cols - 1);
            img.r(i, j) = 0.25 + 0.5 * a;
            img.g(i, j) = 0.30 + 0.35 * b;
            img.b(i, j) = 0.40 + 0.25 * a * b;
        }
    return img;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("png round trip stays within one quantization step") {
    std::mt19937 rng(111);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    ColorImage img(9, 13);
    for (int i = 0; i < img.r.size(); ++i) {
        img.r[i] = dist(rng);
        img.g[i] = dist(rng);
        img.b[i] = dist(rng);
    }
    const fs::path file = tmp_dir() / "roundtrip.png";
    save_png(file.string(), img);
    const ColorImage back = load_image(file.string());
    REQUIRE(back.rows() == 9);
    REQUIRE(back.cols() == 13);
    for (int i = 0; i < img.r.size(); ++i) {
        CHECK(std::fabs(back.r[i] - img.r[i]) <= 0.5 / 255.0 + 1e-9);
        CHECK(std::fabs(back.g[i] - img.g[i]) <= 0.5 / 255.0 + 1e-9);
        CHECK(std::fabs(back.b[i] - img.b[i]) <= 0.5 / 255.0 + 1e-9);
    }
}

TEST_CASE("gray png writes load back as near-gray images") {
    const ScalarField f = testutil::gaussian_blob(8, 8, 4.0, 4.0, 2.0);
    const fs::path file = tmp_dir() / "gray.png";
    save_png_gray(file.string(), f);
    const ColorImage back = load_image(file.string());
    CHECK(nearly_grayscale(back));
    const ScalarField plane = gray_plane(back);
    for (int i = 0; i < f.size(); ++i) CHECK(std::fabs(plane[i] - f[i]) <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("binary ppm and pgm files load with correct layout") {
    const fs::path ppm = tmp_dir() / "tiny.ppm";
    {
        std::ofstream out(ppm, std::ios::binary);
        out << "P6\n# comment line\n2 2\n255\n";
        const unsigned char data[] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128};
        out.write(reinterpret_cast<const char*>(data), sizeof(data));
    }
    const ColorImage img = load_image(ppm.string());
    REQUIRE(img.rows() == 2);
    REQUIRE(img.cols() == 2);
    CHECK(img.r(0, 0) == doctest::Approx(1.0));
    CHECK(img.g(0, 1) == doctest::Approx(1.0));
    CHECK(img.b(1, 0) == doctest::Approx(1.0));
    CHECK(img.r(1, 1) == doctest::Approx(128.0 / 255.0));

    const fs::path pgm = tmp_dir() / "tiny.pgm";
    {
        std::ofstream out(pgm, std::ios::binary);
        out << "P5\n3 2\n255\n";
        const unsigned char data[] = {0, 64, 128, 192, 255, 32};
        out.write(reinterpret_cast<const char*>(data), sizeof(data));
    }
    const ColorImage gray = load_image(pgm.string());
    REQUIRE(gray.rows() == 2);
    REQUIRE(gray.cols() == 3);
    CHECK(nearly_grayscale(gray));
    CHECK(gray.r(0, 1) == doctest::Approx(64.0 / 255.0));
    CHECK(gray.g(1, 2) == doctest::Approx(32.0 / 255.0));
}

TEST_CASE("a colorful image is not mistaken for gray") {
    CHECK_FALSE(nearly_grayscale(smooth_color_image(6, 6)));
}

TEST_CASE("parse_cli applies the documented defaults") {
    const PipelineConfig c = parse_args({"--source", "s.png", "--target", "t.png", "--out", "o.png"});
    CHECK(c.morph.mu == 0.025);
    CHECK(c.morph.lambda == 0.025);
    CHECK(c.morph.k_steps == 24);
    REQUIRE(c.post.has_value());
    CHECK(c.post->gamma == 50.0);
    CHECK(c.post->alpha == 0.005);
    CHECK(c.post->max_iterations == 2000);
    CHECK_FALSE(c.resize_source);
    CHECK_FALSE(c.emit_rgb_diagnostic);
    CHECK_FALSE(c.montage_path.has_value());
}

TEST_CASE("parse_cli lets lambda default to mu but not override it") {
    PipelineConfig c = parse_args({"--source", "s", "--target", "t", "--out", "o", "--mu", "0.05",
                                   "--k-steps", "12"});
    CHECK(c.morph.mu == 0.05);
    CHECK(c.morph.lambda == 0.05);
    CHECK(c.morph.k_steps == 12);

    c = parse_args({"--source", "s", "--target", "t", "--out", "o", "--mu", "0.05", "--lambda",
                    "0.1"});
    CHECK(c.morph.lambda == 0.1);
}

TEST_CASE("parse_cli drops the post-process stage on request") {
    const PipelineConfig c =
        parse_args({"--source", "s", "--target", "t", "--out", "o", "--no-postprocess"});
    CHECK_FALSE(c.post.has_value());
}

TEST_CASE("parse_cli rejects bad values and unknown flags") {
    CHECK_THROWS_AS(parse_args({"--source", "s", "--target", "t", "--out", "o", "--alpha", "-1"}),
                    UsageError);
    CHECK_THROWS_AS(parse_args({"--source", "s", "--target", "t", "--out", "o", "--k-steps", "1"}),
                    UsageError);
    CHECK_THROWS_AS(parse_args({"--source", "s", "--target", "t", "--out", "o", "--bogus"}),
                    UsageError);
    CHECK_THROWS_AS(parse_args({"--target", "t", "--out", "o"}), UsageError);
}

TEST_CASE("config files feed values that the command line overrides") {
    const fs::path cfg = tmp_dir() / "run.cfg";
    {
        std::ofstream out(cfg);
        out << "# morph parameters\n";
        out << "mu=0.4\n";
        out << "k-steps=6\n";
        out << "gamma=12\n";
    }
    PipelineConfig c = parse_args({"--source", "s", "--target", "t", "--out", "o", "--config",
                                   cfg.string()});
    CHECK(c.morph.mu == 0.4);
    CHECK(c.morph.lambda == 0.4);
    CHECK(c.morph.k_steps == 6);
    CHECK(c.post->gamma == 12.0);

    c = parse_args({"--source", "s", "--target", "t", "--out", "o", "--config", cfg.string(),
                    "--mu", "0.9"});
    CHECK(c.morph.mu == 0.9);
    CHECK(c.morph.k_steps == 6);
}

TEST_CASE("config files with unknown keys are rejected") {
    const fs::path cfg = tmp_dir() / "bad.cfg";
    {
        std::ofstream out(cfg);
        out << "nonsense-key=1\n";
    }
    CHECK_THROWS_AS(
        parse_args({"--source", "s", "--target", "t", "--out", "o", "--config", cfg.string()}),
        UsageError);
}

TEST_CASE("run_pipeline reports missing inputs as io errors") {
    PipelineConfig c;
    c.source_path = (tmp_dir() / "not-there.png").string();
    c.target_path = (tmp_dir() / "also-missing.png").string();
    c.output_path = (tmp_dir() / "out.png").string();
    std::ostringstream log;
    CHECK_THROWS_AS(run_pipeline(c, log), IoError);
}

TEST_CASE("run_pipeline enforces equal dimensions unless resizing is requested") {
    const fs::path small = tmp_dir() / "small.png";
    const fs::path big = tmp_dir() / "big.png";
    save_png(small.string(), smooth_color_image(16, 16));
    save_png_gray(big.string(), rgb_to_yuv(smooth_color_image(32, 32)).y);

    PipelineConfig c;
    c.source_path = small.string();
    c.target_path = big.string();
    c.output_path = (tmp_dir() / "mismatch.png").string();
    c.morph.k_steps = 2;
    c.morph.pyramid_levels = 1;
    c.morph.outer_iterations = 1;
    c.morph.reg_iterations = 2;
    c.post.reset();

    std::ostringstream log;
    CHECK_THROWS_WITH_AS(run_pipeline(c, log), doctest::Contains("equal dimensions"),
                         FieldSizeError);

    c.resize_source = true;
    CHECK_NOTHROW(run_pipeline(c, log));
    CHECK(fs::exists(c.output_path));
}

TEST_CASE("run_pipeline writes output, montage, and intermediates") {
    const int n = 24;
    const ColorImage source = smooth_color_image(n, n);
    const ScalarField target_y = rgb_to_yuv(source).y;

    const fs::path src_file = tmp_dir() / "pipe_src.png";
    const fs::path tar_file = tmp_dir() / "pipe_tar.png";
    save_png(src_file.string(), source);
    save_png_gray(tar_file.string(), target_y);

    PipelineConfig c;
    c.source_path = src_file.string();
    c.target_path = tar_file.string();
    c.output_path = (tmp_dir() / "pipe_out.png").string();
    c.morph.k_steps = 2;
    c.morph.pyramid_levels = 2;
    c.morph.outer_iterations = 1;
    c.morph.reg_iterations = 3;
    c.post.reset();
    c.montage_path = (tmp_dir() / "pipe_montage.png").string();
    c.intermediates_dir = (tmp_dir() / "pipe_inter").string();
    c.emit_rgb_diagnostic = true;

    std::ostringstream log;
    run_pipeline(c, log);

    CHECK(fs::exists(c.output_path));
    CHECK(fs::exists(*c.montage_path));
    CHECK(fs::exists(fs::path(*c.intermediates_dir) / "path_00.png"));
    CHECK(fs::exists(fs::path(*c.intermediates_dir) / "path_02.png"));
    CHECK(fs::exists(tmp_dir() / "pipe_out_rgb_transport.png"));

    // montage layout: K+1 tiles plus K gutters
    const ColorImage montage = load_image(*c.montage_path);
    CHECK(montage.cols() == 3 * n + 2 * kMontageGutter);
    CHECK(montage.rows() == n);

    // without post-processing the last tile is the pipeline output
    const ColorImage written = load_image(c.output_path);
    const int last_off = 2 * (n + kMontageGutter);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            CHECK(montage.r(i, last_off + j) == written.r(i, j));
            CHECK(montage.g(i, last_off + j) == written.g(i, j));
            CHECK(montage.b(i, last_off + j) == written.b(i, j));
        }

    // log is key=value parseable and covers the morph sweeps
    const std::string text = log.str();
    CHECK(text.find("stage=load") != std::string::npos);
    CHECK(text.find("stage=morph level=0 sweep=1 energy=") != std::string::npos);
    CHECK(text.find("stage=done") != std::string::npos);

    // near-identical pair: output should reproduce the source closely
    const ColorImage out = load_image(c.output_path);
    for (int i = 0; i < out.r.size(); ++i) {
        CHECK(std::fabs(out.r[i] - source.r[i]) <= 0.02);
        CHECK(std::fabs(out.g[i] - source.g[i]) <= 0.02);
        CHECK(std::fabs(out.b[i] - source.b[i]) <= 0.02);
    }
}

TEST_CASE("export_montage of an identity morph repeats one tile") {
    const int n = 12;
    const ColorImage source = smooth_color_image(n, n);
    const YuvImage yuv = rgb_to_yuv(source);
    const DeformationPath path(2, VectorField2(n, n));
    const ImagePath images(3, yuv.y);
    const fs::path file = tmp_dir() / "montage_identity.png";
    export_montage(images, path, yuv.u, yuv.v, file.string());

    const ColorImage montage = load_image(file.string());
    REQUIRE(montage.cols() == 3 * n + 2 * kMontageGutter);
    // all three tiles identical, and each reproduces the source (same Y, U, V)
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            for (int tile = 1; tile <= 2; ++tile) {
                const int off = tile * (n + kMontageGutter);
                CHECK(montage.r(i, off + j) == montage.r(i, j));
                CHECK(montage.g(i, off + j) == montage.g(i, j));
                CHECK(montage.b(i, off + j) == montage.b(i, j));
            }
            CHECK(std::fabs(montage.r(i, j) - source.r(i, j)) <= 6e-3);
            CHECK(std::fabs(montage.g(i, j) - source.g(i, j)) <= 6e-3);
            CHECK(std::fabs(montage.b(i, j) - source.b(i, j)) <= 6e-3);
        }
}

TEST_CASE("cli exit codes follow the documented contract") {
    const fs::path out = tmp_dir() / "cli_out.png";

    SUBCASE("missing input file exits 2") {
        CHECK(run_cli("--source /nonexistent/a.png --target /nonexistent/b.png --out " +
                      out.string()) == 2);
    }
    SUBCASE("dimension mismatch without resize exits 3") {
        const fs::path small = tmp_dir() / "cli_small.png";
        const fs::path big = tmp_dir() / "cli_big.png";
        save_png(small.string(), smooth_color_image(16, 16));
        save_png_gray(big.string(), testutil::gaussian_blob(32, 32, 16, 16, 6.0));
        CHECK(run_cli("--source " + small.string() + " --target " + big.string() + " --out " +
                      out.string()) == 3);
    }
    SUBCASE("unknown flags exit 64") {
        CHECK(run_cli("--source a --target b --out c --definitely-not-a-flag") == 64);
    }
    SUBCASE("a deformation that folds exits 4") {
        // dissimilar pair plus weak regularization drives the registration
        // into a non-invertible step
        const fs::path src = tmp_dir() / "cli_fold_src.png";
        const fs::path tar = tmp_dir() / "cli_fold_tar.png";
        ColorImage ramp(24, 24);
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j) {
                ramp.r(i, j) = 0.2 + 0.6 * i / 23.0;
                ramp.g(i, j) = 0.2 + 0.6 * j / 23.0;
                ramp.b(i, j) = 0.5;
            }
        save_png(src.string(), ramp);
        save_png_gray(tar.string(), testutil::gaussian_blob(24, 24, 12.0, 12.0, 3.0, 0.9));
        CHECK(run_cli("--source " + src.string() + " --target " + tar.string() + " --out " +
                      out.string() +
                      " --k-steps 2 --levels 1 --outer-iters 2 --reg-iters 40 --mu 0.001"
                      " --no-postprocess") == 4);
    }
    SUBCASE("a tiny end-to-end run exits 0") {
        const fs::path src = tmp_dir() / "cli_src.png";
        const fs::path tar = tmp_dir() / "cli_tar.png";
        const ColorImage source = smooth_color_image(16, 16);
        save_png(src.string(), source);
        save_png_gray(tar.string(), rgb_to_yuv(source).y);
        CHECK(run_cli("--source " + src.string() + " --target " + tar.string() + " --out " +
                      out.string() +
                      " --k-steps 2 --levels 1 --outer-iters 1 --reg-iters 2 --no-postprocess") ==
              0);
        CHECK(fs::exists(out));
    }
}

}  // TEST_SUITE
