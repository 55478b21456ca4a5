#include "meshdrag/optimizer.hpp"

#include "meshdrag/arap.hpp"
#include "meshdrag/rng.hpp"
#include "meshdrag/simd/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace meshdrag {

using json = nlohmann::json;

void LossWeights::validate() const {
    if (!(lambda_user >= 0.0)) throw std::invalid_argument("weights.lambda_user must be >= 0");
    if (!(lambda_dds >= 0.0)) throw std::invalid_argument("weights.lambda_dds must be >= 0");
    if (!(lambda_reg >= 0.0)) throw std::invalid_argument("weights.lambda_reg must be >= 0");
}

void Schedule::validate() const {
    if (!(start <= end)) throw std::invalid_argument("schedule.start must be <= schedule.end");
    if (total_iters < 1) throw std::invalid_argument("schedule.total_iters must be >= 1");
}

double schedule_weight(const Schedule& schedule, int iter) {
    // A single-iteration run only ever sees iteration 0, which gets `start`.
    if (iter <= 0 || schedule.total_iters <= 1) return schedule.start;
    const double frac = static_cast<double>(iter) / static_cast<double>(schedule.total_iters - 1);
    return std::min(schedule.end, schedule.start + (schedule.end - schedule.start) * frac);
}

void adan_step(AdanState& state, std::span<const double> gradient, std::span<double> variable) {
    const std::size_t n = variable.size();
    if (gradient.size() != n || state.first_moment.size() != n || state.grad_diff_moment.size() != n ||
        state.second_moment.size() != n || state.previous_gradient.size() != n)
        throw std::invalid_argument("adan_step: shape mismatch");
    const auto& s = state.settings;
    const long k = ++state.step_count;
    const double kd = static_cast<double>(k);
    simd::AdanCoefficients c;
    c.beta1 = s.beta1;
    c.beta2 = s.beta2;
    c.beta3 = s.beta3;
    c.step1 = s.learning_rate / (1.0 - std::pow(s.beta1, kd));
    c.step2 = s.learning_rate * s.beta2 / (1.0 - std::pow(s.beta2, kd));
    c.bias3_sqrt = std::sqrt(1.0 - std::pow(s.beta3, kd));
    c.decay = 1.0 - s.learning_rate * s.weight_decay;
    c.eps = s.eps;
    c.first_step = k == 1;
    simd::adan_update(c,
                      {variable, state.previous_gradient, state.first_moment, state.grad_diff_moment,
                       state.second_moment},
                      gradient);
}

UserLoss user_loss(const Positions& vertices, const std::vector<HandleConstraint>& handles) {
    UserLoss out;
    out.gradient = Positions::Zero(vertices.rows(), 3);
    for (const auto& h : handles) {
        const Eigen::Vector3d diff = vertices.row(h.vertex_index).transpose() - h.target;
        out.value += diff.squaredNorm();
        out.gradient.row(h.vertex_index) += 2.0 * diff.transpose();
    }
    return out;
}

JacobianField apply_mask(JacobianField field_gradient, const DeformationMask& mask) {
    if (mask.covers_all()) return field_gradient;
    if (static_cast<std::size_t>(field_gradient.face_count()) != mask.face_flags().size())
        throw std::invalid_argument("apply_mask: field length does not match mask face count");
    for (int f = 0; f < field_gradient.face_count(); ++f)
        if (!mask.face_movable(f)) field_gradient.face(f).setZero();
    return field_gradient;
}

void DeformationConfig::validate(const TriMesh& mesh) const {
    if (handles.empty()) throw std::invalid_argument("handles: at least one handle is required");
    std::set<int> seen;
    for (std::size_t i = 0; i < handles.size(); ++i) {
        const auto& h = handles[i];
        const std::string field = "handles[" + std::to_string(i) + "]";
        if (h.vertex_index < 0 || h.vertex_index >= mesh.vertex_count())
            throw std::invalid_argument(field + ".vertex: index " + std::to_string(h.vertex_index) + " out of range");
        if (!h.target.allFinite()) throw std::invalid_argument(field + ".target: not finite");
        if (!seen.insert(h.vertex_index).second) throw std::invalid_argument(field + ".vertex: duplicate handle");
        if (mask && !mask->vertex_movable(h.vertex_index))
            throw std::invalid_argument(field + ".vertex: handle " + std::to_string(h.vertex_index) + " not in mask");
    }
    if (mask && mask->vertex_flags().size() != static_cast<std::size_t>(mesh.vertex_count()))
        throw std::invalid_argument("mask: built for a different mesh");
    if (iters < 1) throw std::invalid_argument("iters must be >= 1");
    if (views_per_iter < 0) throw std::invalid_argument("views must be >= 0");
    if (d0 && !(*d0 > 0.0)) throw std::invalid_argument("camera_distance must be > 0");
    if (image_size < 8) throw std::invalid_argument("image_size must be >= 8");
    if (snapshot_every < 0) throw std::invalid_argument("snapshot_every must be >= 0");
    if (!(guidance_scale > 0.0)) throw std::invalid_argument("guidance_scale must be > 0");
    if (!(gradient_scale > 0.0)) throw std::invalid_argument("gradient_scale must be > 0");
    if (!(adan.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    weights.validate();
    Schedule s = schedule;
    s.total_iters = iters;
    s.validate();
}

json config_to_json(const DeformationConfig& c) {
    json handles = json::array();
    for (const auto& h : c.handles)
        handles.push_back({{"vertex", h.vertex_index}, {"target", {h.target.x(), h.target.y(), h.target.z()}}});
    json mask;
    if (!c.mask || c.mask->covers_all()) {
        mask = {{"type", "all"}};
    } else {
        std::vector<int> verts;
        for (std::size_t v = 0; v < c.mask->vertex_flags().size(); ++v)
            if (c.mask->vertex_flags()[v]) verts.push_back(static_cast<int>(v));
        mask = {{"type", "vertex_set"}, {"vertices", verts}};
    }
    return {
        {"handles", handles},
        {"mask", mask},
        {"prompt", c.prompt},
        {"iters", c.iters},
        {"views_per_iter", c.views_per_iter},
        {"camera_distance", c.d0 ? json(*c.d0) : json(nullptr)},
        {"lambda_dds", c.weights.lambda_dds},
        {"lambda_reg", c.weights.lambda_reg},
        {"schedule", {{"start", c.schedule.start}, {"end", c.schedule.end}}},
        {"seed", c.seed},
        {"snapshot_every", c.snapshot_every},
        {"image_size", c.image_size},
        {"fov_y_deg", c.fov_y_deg},
        {"fixed_views", c.fixed_views},
        {"guidance_mode", c.guidance_mode == GuidanceMode::Dds ? "dds" : "sds"},
        {"guidance_scale", c.guidance_scale},
        {"gradient_scale", c.gradient_scale},
        {"timestep_range", {c.timestep_range.first, c.timestep_range.second}},
        {"view_prompt_augment", c.view_prompt_augment},
        {"adan",
         {{"betas", {c.adan.beta1, c.adan.beta2, c.adan.beta3}},
          {"learning_rate", c.adan.learning_rate},
          {"weight_decay", c.adan.weight_decay},
          {"eps", c.adan.eps}}},
    };
}

json RunReport::to_json(bool include_timings) const {
    const char* status_name = status == Status::Completed ? "completed"
                              : status == Status::Diverged ? "diverged"
                                                           : "guidance_failed";
    json iters = json::array();
    for (const auto& r : iterations) {
        json cams = json::array();
        for (const auto& c : r.cameras) cams.push_back({c.azimuth_deg, c.elevation_deg, c.distance});
        iters.push_back({
            {"iter", r.iter},
            {"lambda_user", r.lambda_user},
            {"user", r.user},
            {"reg", r.reg},
            {"dds", r.dds ? json(*r.dds) : json(nullptr)},
            {"total", r.total},
            {"grad_norm_field", r.grad_norm_field},
            {"grad_norm_user", r.grad_norm_user},
            {"grad_norm_reg", r.grad_norm_reg},
            {"grad_norm_dds", r.grad_norm_dds},
            {"view_gradient_norms", r.view_gradient_norms},
            {"cameras", cams},
        });
    }
    json out = {
        {"status", status_name},
        {"message", message},
        {"failed_iteration", failed_iteration},
        {"seed", seed},
        {"config", config},
        {"initial_user", initial_user},
        {"final_user", final_user},
        {"final_reg", final_reg},
        {"iterations", iters},
    };
    if (include_timings) out["timings"] = {{"wall_seconds", wall_seconds}};
    return out;
}

namespace {

double norm_of(const Positions& p) { return std::sqrt(simd::squared_norm({p.data(), static_cast<std::size_t>(p.size())})); }

[[noreturn]] void abort_run(RunReport& report, RunReport::Status status, int iter, const std::string& msg,
                            std::chrono::steady_clock::time_point t0) {
    report.status = status;
    report.failed_iteration = iter;
    report.message = msg;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    throw DeformationAborted(msg, report);
}

// Same map as poisson_solve, written as rest + linear(field - rest_field) so
// that the untouched field reproduces the rest pose bit for bit. Otherwise
// round-off gradients at a stationary point get amplified by Adan's
// scale-free step.
Positions solve_about_rest(const MeshOperators& ops, const Positions& rest, const JacobianField& rest_field,
                           const JacobianField& field) {
    JacobianField delta = field;
    auto d = delta.values();
    const auto r = rest_field.values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] -= r[k];
    Positions x = ops.solve_linear(delta);
    x += rest;
    return x;
}

}  // namespace

DeformResult deform(const TriMesh& mesh, const DeformationConfig& config, GuidanceProvider& provider,
                    const SnapshotFn& snapshot) {
    config.validate(mesh);
    const auto t0 = std::chrono::steady_clock::now();

    const DeformationMask mask = config.mask ? *config.mask : DeformationMask::all(mesh.vertex_count(), mesh.faces());
    const MeshOperators ops = build_operators(mesh, &mask);
    const JacobianField rest_field = extract_jacobians(ops, mesh.rest_vertices());
    JacobianField field = rest_field;
    AdanState adan(field.values().size(), config.adan);
    ArapState arap = make_arap_state(mesh);

    Schedule schedule = config.schedule;
    schedule.total_iters = config.iters;

    const BoundingInfo bounds = bounding_info(mesh.rest_vertices());
    const double d0 = config.d0.value_or(1.25 * bounds.diagonal);
    const Eigen::Vector3d look_at = bounds.centroid;
    std::vector<Camera> fixed_cams;
    if (config.fixed_views) {
        const auto canon = canonical_cameras(d0, look_at, config.fov_y_deg, config.image_size);
        for (int v = 0; v < config.views_per_iter; ++v) fixed_cams.push_back(canon[static_cast<std::size_t>(v) % canon.size()]);
    }
    const Surface rest_surface{mesh.rest_vertices(), mesh.faces(), mesh.colors() ? &*mesh.colors() : nullptr};
    const bool use_guidance = config.weights.lambda_dds > 0.0 && config.views_per_iter > 0;

    Rng rng(config.seed);
    RunReport report;
    report.seed = config.seed;
    report.config = config_to_json(config);

    for (int it = 0; it < config.iters; ++it) {
        const Positions verts = solve_about_rest(ops, mesh.rest_vertices(), rest_field, field);
        IterationRecord rec;
        rec.iter = it;
        rec.lambda_user = schedule_weight(schedule, it);

        const UserLoss ul = user_loss(verts, config.handles);
        arap = fit_rotations(mesh, verts, std::move(arap));
        const double reg = arap_energy(mesh, verts, arap);
        const Positions greg = arap_gradient(mesh, verts, arap);
        rec.user = ul.value;
        rec.reg = reg;
        if (it == 0) report.initial_user = ul.value;

        Positions gdds = Positions::Zero(verts.rows(), 3);
        std::vector<RenderedView> edit_views;
        if (use_guidance) {
            // All random draws for this iteration happen here, before any rendering.
            const std::vector<Camera> cams =
                config.fixed_views ? fixed_cams
                                   : sample_cameras(rng, d0, look_at, config.views_per_iter, config.fov_y_deg,
                                                    config.image_size);
            const std::uint32_t guidance_seed = rng.next_u32();

            const Surface surface{verts, mesh.faces(), rest_surface.colors};
            GuidanceRequest req;
            req.prompt = config.prompt;
            req.seed = guidance_seed;
            req.guidance_scale = config.guidance_scale;
            req.gradient_scale = config.gradient_scale;
            req.mode = config.guidance_mode;
            req.timestep_range = config.timestep_range;
            req.view_prompt_augment = config.view_prompt_augment;
            for (const auto& cam : cams) {
                edit_views.push_back(render(surface, cam, config.shading));
                req.edit_images.push_back(edit_views.back().rgb);
                req.ref_images.push_back(render(rest_surface, cam, config.shading).rgb);
                req.camera_azimuths.push_back(cam.azimuth_deg);
                rec.cameras.push_back({cam.azimuth_deg, cam.elevation_deg, cam.distance});
            }
            GuidanceResponse resp;
            try {
                resp = dds_gradients(req, provider);
            } catch (const GuidanceError& e) {
                report.iterations.push_back(rec);
                abort_run(report, RunReport::Status::GuidanceFailed, it, e.what(), t0);
            }
            const double inv_views = 1.0 / static_cast<double>(cams.size());
            for (std::size_t v = 0; v < cams.size(); ++v)
                gdds += render_backward(edit_views[v], resp.pixel_gradients[v], surface, config.shading);
            gdds *= inv_views;
            rec.view_gradient_norms = resp.gradient_norms;
            if (resp.loss) rec.dds = *resp.loss * inv_views;
        }

        rec.total = rec.lambda_user * rec.user + config.weights.lambda_reg * rec.reg +
                    (rec.dds ? config.weights.lambda_dds * *rec.dds : 0.0);
        rec.grad_norm_user = norm_of(ul.gradient);
        rec.grad_norm_reg = norm_of(greg);
        rec.grad_norm_dds = norm_of(gdds);

        const Positions gvert =
            rec.lambda_user * ul.gradient + config.weights.lambda_reg * greg + config.weights.lambda_dds * gdds;
        const JacobianField gfield = apply_mask(poisson_adjoint(ops, gvert), mask);
        rec.grad_norm_field = std::sqrt(simd::squared_norm(gfield.values()));

        if (!std::isfinite(rec.total) || !std::isfinite(rec.grad_norm_field) || !gvert.allFinite()) {
            report.iterations.push_back(rec);
            abort_run(report, RunReport::Status::Diverged, it, "diverged at iteration " + std::to_string(it), t0);
        }
        report.iterations.push_back(std::move(rec));

        if (snapshot && config.snapshot_every > 0 && it % config.snapshot_every == 0) snapshot(it, verts, edit_views);

        adan_step(adan, gfield.values(), field.values());
        if (!field.all_finite())
            abort_run(report, RunReport::Status::Diverged, it, "diverged at iteration " + std::to_string(it), t0);
    }

    TriMesh out = mesh;
    out.vertices = solve_about_rest(ops, mesh.rest_vertices(), rest_field, field);
    arap = fit_rotations(mesh, out.vertices, std::move(arap));
    report.final_user = user_loss(out.vertices, config.handles).value;
    report.final_reg = arap_energy(mesh, out.vertices, arap);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.vertices.allFinite())
        abort_run(report, RunReport::Status::Diverged, config.iters, "diverged in final solve", t0);
    return {std::move(out), std::move(field), std::move(report)};
}

}  // namespace meshdrag
