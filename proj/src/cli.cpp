#include "meshdrag/cli.hpp"

#include "meshdrag/constraints.hpp"
#include "meshdrag/guidance.hpp"
#include "meshdrag/image.hpp"
#include "meshdrag/optimizer.hpp"
#include "meshdrag/simd/kernels.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace meshdrag::cli {

namespace {

struct Options {
    std::string mesh;
    std::string constraints;
    std::string out;
    int iters = 2000;
    double arap_weight = 0.04;
    std::string guidance = "mock";
    std::string service_url = "http://127.0.0.1:8000";
    std::string mock_target;
    std::uint64_t seed = 0;
    int views = 4;
    int image_size = 64;
    int snapshot_every = 0;
    std::string snapshot_prefix;
    std::string report;
    bool sds = false;
    bool fixed_views = false;
    bool report_timings = false;
    bool view_prompt_augment = false;
    double guidance_scale = 100.0;
    double gradient_scale = 0.00002;
    double learning_rate = 0.005;
};

void build_app(CLI::App& app, Options& o) {
    app.description("Handle-driven mesh deformation over per-face Jacobians with ARAP and image-space guidance.");
    app.option_defaults()->always_capture_default();
    app.add_option("--mesh", o.mesh, "Input OBJ mesh")->required();
    app.add_option("--constraints", o.constraints, "Constraint JSON (handles, mask, prompt, camera_distance)")->required();
    app.add_option("--out", o.out, "Output OBJ path")->required();
    app.add_option("--iters", o.iters, "Optimization iterations")->check(CLI::PositiveNumber);
    app.add_option("--arap-weight", o.arap_weight, "ARAP regularizer weight (recommended 0.04 to 0.2)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--guidance", o.guidance, "Guidance provider")->check(CLI::IsMember({"mock", "service"}));
    app.add_option("--service-url", o.service_url, "Diffusion service base URL (DRAGD3D_GUIDANCE_URL overrides)");
    app.add_option("--mock-target", o.mock_target,
                   "PNG target for the mock provider (default: rest-pose renders of each view)");
    app.add_option("--seed", o.seed, "Random seed");
    app.add_option("--views", o.views, "Views rendered per iteration")->check(CLI::NonNegativeNumber);
    app.add_option("--image-size", o.image_size, "Rendered view size in pixels (square)")->check(CLI::Range(8, 4096));
    app.add_option("--snapshot-every", o.snapshot_every, "Dump OBJ + PNG views every N iterations (0 = never)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--snapshot-prefix", o.snapshot_prefix, "Snapshot path prefix (default: <out stem>_snap)");
    app.add_option("--report", o.report, "Write the run report JSON here");
    app.add_option("--guidance-scale", o.guidance_scale, "Classifier-free guidance scale")->check(CLI::PositiveNumber);
    app.add_option("--gradient-scale", o.gradient_scale, "Multiplier on returned pixel gradients")
        ->check(CLI::PositiveNumber);
    app.add_option("--lr", o.learning_rate, "Adan learning rate")->check(CLI::PositiveNumber);
    app.add_flag("--sds", o.sds, "Ablation: SDS guidance (no reference-branch subtraction)");
    app.add_flag("--fixed-views", o.fixed_views, "Ablation: four canonical views (front, right, back, left) every iteration");
    app.add_flag("--view-prompt-augment", o.view_prompt_augment, "Ask the service to prefix a view-direction phrase");
    app.add_flag("--report-timings", o.report_timings, "Include wall-clock timings in the report");
}

bool write_report(const std::string& path, const RunReport& report, bool timings, std::ostream& err) {
    if (path.empty()) return true;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << report.to_json(timings).dump(2) << '\n';
    if (!f) {
        err << "error: cannot write report " << path << '\n';
        return false;
    }
    return true;
}

std::string snapshot_name(const std::string& prefix, int iter, const char* suffix) {
    std::ostringstream ss;
    ss << prefix << "_iter" << std::setw(5) << std::setfill('0') << iter << suffix;
    return ss.str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"meshdrag"};
    Options o;
    build_app(app, o);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    }

    TriMesh mesh;
    ConstraintFile constraints;
    try {
        mesh = load_obj(o.mesh);
    } catch (const MeshError& e) {
        err << "error: mesh: " << e.what() << '\n';
        return e.kind() == MeshError::Kind::Io ? kFailure : kValidation;
    }
    try {
        constraints = load_constraints(o.constraints);
    } catch (const ConstraintError& e) {
        err << "error: constraints: " << e.what() << '\n';
        return kValidation;
    }
    if (const auto findings = validate(mesh, constraints); !findings.empty()) {
        for (const auto& f : findings) err << "error: constraints: " << f << '\n';
        return kValidation;
    }

    DeformationConfig cfg;
    cfg.handles = to_handles(constraints);
    cfg.mask = to_mask(mesh, constraints);
    cfg.prompt = constraints.prompt;
    cfg.d0 = constraints.camera_distance;
    cfg.iters = o.iters;
    cfg.views_per_iter = o.views;
    cfg.weights.lambda_reg = o.arap_weight;
    cfg.seed = o.seed;
    cfg.snapshot_every = o.snapshot_every;
    cfg.image_size = o.image_size;
    cfg.fixed_views = o.fixed_views;
    cfg.guidance_mode = o.sds ? GuidanceMode::Sds : GuidanceMode::Dds;
    cfg.guidance_scale = o.guidance_scale;
    cfg.gradient_scale = o.gradient_scale;
    cfg.view_prompt_augment = o.view_prompt_augment;
    cfg.adan.learning_rate = o.learning_rate;
    try {
        cfg.validate(mesh);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    }

    std::vector<Image> mock_targets;
    if (!o.mock_target.empty()) {
        try {
            Image t = read_png(o.mock_target);
            if (t.width != o.image_size || t.height != o.image_size) {
                err << "error: --mock-target: image is " << t.width << "x" << t.height << ", expected " << o.image_size
                    << "x" << o.image_size << '\n';
                return kValidation;
            }
            mock_targets.push_back(std::move(t));
        } catch (const std::runtime_error& e) {
            err << "error: --mock-target: " << e.what() << '\n';
            return kValidation;
        }
    }

    GuidanceConfig gcfg;
    gcfg.provider = o.guidance == "service" ? GuidanceConfig::Provider::Service : GuidanceConfig::Provider::Mock;
    gcfg.service_url = o.service_url;
    gcfg.guidance_scale = o.guidance_scale;
    gcfg.gradient_scale = o.gradient_scale;
    gcfg.view_prompt_augment = o.view_prompt_augment;
    std::unique_ptr<GuidanceProvider> provider;
    try {
        provider = make_provider(gcfg, std::move(mock_targets));
    } catch (const GuidanceError& e) {
        err << "error: guidance: " << e.what() << '\n';
        return kGuidance;
    }

    const std::string prefix = o.snapshot_prefix.empty()
                                   ? (std::filesystem::path(o.out).parent_path() /
                                      std::filesystem::path(o.out).stem()).string() + "_snap"
                                   : o.snapshot_prefix;
    SnapshotFn snapshot = [&](int iter, const Positions& verts, const std::vector<RenderedView>& views) {
        TriMesh snap = mesh;
        snap.vertices = verts;
        save_obj(snap, snapshot_name(prefix, iter, ".obj"));
        for (std::size_t v = 0; v < views.size(); ++v)
            write_png(views[v].rgb, snapshot_name(prefix, iter, ("_view" + std::to_string(v) + ".png").c_str()));
    };

    err << "meshdrag: " << mesh.vertex_count() << " vertices, " << mesh.face_count() << " faces, " << cfg.iters
        << " iterations, guidance=" << o.guidance << (o.sds ? " (sds)" : "")
        << ", simd=" << simd::backend_name(simd::active_backend()) << '\n';

    DeformResult result;
    try {
        result = deform(mesh, cfg, *provider, snapshot);
    } catch (const DeformationAborted& e) {
        write_report(o.report, e.report(), o.report_timings, err);
        const bool diverged = e.report().status == RunReport::Status::Diverged;
        err << "error: " << (diverged ? "" : "guidance: ") << e.what() << '\n';
        return diverged ? kDiverged : kGuidance;
    } catch (const MeshError& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    } catch (const FactorizationError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }

    try {
        save_obj(result.mesh, o.out);
    } catch (const MeshError& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    if (!write_report(o.report, result.report, o.report_timings, err)) return kFailure;
    err << "meshdrag: user loss " << result.report.initial_user << " -> " << result.report.final_user << ", ARAP "
        << result.report.final_reg << ", " << result.report.wall_seconds << " s\n";
    return kOk;
}

}  // namespace meshdrag::cli
