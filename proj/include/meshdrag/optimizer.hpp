#pragma once

// Outer optimization over the per-face Jacobian field: the handle loss with a
// linearly ramped weight, ARAP rigidity, and image-space guidance on randomly
// sampled views, all pulled back to the field through the Poisson adjoint and
// applied with Adan.

#include "meshdrag/guidance.hpp"
#include "meshdrag/mesh.hpp"
#include "meshdrag/operators.hpp"
#include "meshdrag/renderer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshdrag {

struct LossWeights {
    double lambda_user = 1.0;  // overwritten every iteration by the schedule
    double lambda_dds = 1.0;
    double lambda_reg = 0.04;

    void validate() const;
};

/// Linear ramp of the handle-loss weight over the run.
struct Schedule {
    double start = 1.0;
    double end = 50.0;
    int total_iters = 2000;

    void validate() const;
};

/// start + (end - start) * iter / (total - 1), clamped to end.
double schedule_weight(const Schedule& schedule, int iter);

struct AdanSettings {
    double beta1 = 0.98;
    double beta2 = 0.92;
    double beta3 = 0.99;
    double learning_rate = 0.005;
    double weight_decay = 0.0;
    double eps = 1e-8;
};

/// Adan state for a flat parameter vector. The update follows the reference
/// implementation of the optimizer:
///   d = g - g_prev (0 on the first step)
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) d;  n = b3 n + (1-b3) (g + b2 d)^2
///   x = x (1 - lr wd) - lr [m / (1-b1^k) + b2 v / (1-b2^k)] / (sqrt(n / (1-b3^k)) + eps)
struct AdanState {
    AdanSettings settings;
    std::vector<double> first_moment;
    std::vector<double> grad_diff_moment;
    std::vector<double> second_moment;
    std::vector<double> previous_gradient;
    long step_count = 0;

    AdanState() = default;
    AdanState(std::size_t size, AdanSettings s)
        : settings(s), first_moment(size, 0.0), grad_diff_moment(size, 0.0), second_moment(size, 0.0),
          previous_gradient(size, 0.0) {}
};

void adan_step(AdanState& state, std::span<const double> gradient, std::span<double> variable);

struct UserLoss {
    double value = 0.0;
    Positions gradient;
};

/// Sum of squared handle-to-target distances and its vertex gradient.
UserLoss user_loss(const Positions& vertices, const std::vector<HandleConstraint>& handles);

/// Zeroes the gradient on faces outside the mask's face set.
JacobianField apply_mask(JacobianField field_gradient, const DeformationMask& mask);

struct DeformationConfig {
    std::vector<HandleConstraint> handles;
    std::optional<DeformationMask> mask;  // absent: every vertex movable
    std::string prompt;
    int iters = 2000;
    int views_per_iter = 4;
    std::optional<double> d0;  // absent: 1.25 x rest bounding-box diagonal
    LossWeights weights;
    Schedule schedule;  // total_iters is taken from `iters`
    std::uint64_t seed = 0;
    int snapshot_every = 0;
    int image_size = 64;
    double fov_y_deg = 45.0;
    bool fixed_views = false;
    GuidanceMode guidance_mode = GuidanceMode::Dds;
    double guidance_scale = 100.0;
    double gradient_scale = 0.00002;
    std::pair<double, double> timestep_range{0.05, 0.95};
    bool view_prompt_augment = false;
    AdanSettings adan;
    Shading shading;

    /// Throws std::invalid_argument naming the offending field.
    void validate(const TriMesh& mesh) const;
};

struct CameraRecord {
    double azimuth_deg;
    double elevation_deg;
    double distance;
};

struct IterationRecord {
    int iter = 0;
    double lambda_user = 0.0;
    double user = 0.0;
    double reg = 0.0;
    std::optional<double> dds;  // only when the provider reports a scalar
    double total = 0.0;
    double grad_norm_field = 0.0;
    double grad_norm_user = 0.0;
    double grad_norm_reg = 0.0;
    double grad_norm_dds = 0.0;
    std::vector<double> view_gradient_norms;
    std::vector<CameraRecord> cameras;
};

struct RunReport {
    enum class Status { Completed, Diverged, GuidanceFailed };
    Status status = Status::Completed;
    std::string message;
    int failed_iteration = -1;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::vector<IterationRecord> iterations;
    double initial_user = 0.0;
    double final_user = 0.0;
    double final_reg = 0.0;
    double wall_seconds = 0.0;

    /// Timings are excluded unless requested so that reports are reproducible byte-for-byte.
    nlohmann::json to_json(bool include_timings = false) const;
};

class DeformationAborted : public std::runtime_error {
public:
    DeformationAborted(const std::string& what, RunReport report)
        : std::runtime_error(what), report_(std::move(report)) {}
    const RunReport& report() const noexcept { return report_; }

private:
    RunReport report_;
};

/// Called every `snapshot_every` iterations with the current vertices and edit views.
using SnapshotFn = std::function<void(int iter, const Positions& vertices, const std::vector<RenderedView>& views)>;

struct DeformResult {
    TriMesh mesh;
    JacobianField field;
    RunReport report;
};

/// Runs `config.iters` iterations. Throws DeformationAborted (with the partial
/// report) on guidance failure or a non-finite loss/gradient.
DeformResult deform(const TriMesh& mesh, const DeformationConfig& config, GuidanceProvider& provider,
                    const SnapshotFn& snapshot = {});

nlohmann::json config_to_json(const DeformationConfig& config);

}  // namespace meshdrag
