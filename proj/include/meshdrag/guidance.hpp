#pragma once

// Image-space guidance: providers return raw per-pixel loss gradients for a
// batch of rendered views; dds_gradients validates the batch and applies the
// gradient scale.

#include "meshdrag/image.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meshdrag {

enum class GuidanceMode { Dds, Sds };

struct GuidanceRequest {
    std::vector<Image> edit_images;
    std::vector<Image> ref_images;
    std::string prompt;
    std::vector<double> camera_azimuths;
    std::uint32_t seed = 0;
    double guidance_scale = 100.0;
    double gradient_scale = 0.00002;
    GuidanceMode mode = GuidanceMode::Dds;
    std::pair<double, double> timestep_range{0.05, 0.95};
    bool view_prompt_augment = false;
};

struct GuidanceResponse {
    std::vector<Image> pixel_gradients;
    std::vector<double> timesteps;
    std::vector<double> gradient_norms;  // L2 norm of each view's scaled gradient
    /// Scalar loss behind the gradients, when the provider can state one.
    std::optional<double> loss;
};

struct GuidanceConfig {
    enum class Provider { Mock, Service };
    Provider provider = Provider::Mock;
    std::string service_url = "http://127.0.0.1:8000";
    double guidance_scale = 100.0;
    double gradient_scale = 0.00002;
    std::pair<double, double> timestep_range{0.05, 0.95};
    bool view_prompt_augment = false;
    int max_attempts = 3;
    std::chrono::milliseconds retry_backoff{200};
    std::chrono::seconds connect_timeout{5};
    std::chrono::seconds timeout{120};  // read/write; covers denoiser compute

    void validate() const;
};

class GuidanceError : public std::runtime_error {
public:
    GuidanceError(const std::string& what, bool retryable) : std::runtime_error(what), retryable_(retryable) {}
    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;
    /// Unscaled gradients (gradient_scale is applied by dds_gradients).
    virtual GuidanceResponse evaluate(const GuidanceRequest& request) = 0;
};

/// Validates shapes, queries the provider, scales by gradient_scale and fills diagnostics.
GuidanceResponse dds_gradients(const GuidanceRequest& request, GuidanceProvider& provider);

/// Deterministic stand-in for the denoiser: the SDS branch of image x is
/// 2 (x - T), the gradient of |x - T|^2. Targets are either fixed per view
/// or, when none are given, the request's reference images.
class MockProvider : public GuidanceProvider {
public:
    MockProvider() = default;
    explicit MockProvider(std::vector<Image> targets) : targets_(std::move(targets)) {}
    /// One target reused for every view.
    static MockProvider uniform_target(Image target) { return MockProvider(std::vector<Image>{std::move(target)}); }

    GuidanceResponse evaluate(const GuidanceRequest& request) override;

private:
    const Image& target_for(const GuidanceRequest& request, std::size_t view) const;
    std::vector<Image> targets_;
};

/// Client for the dds/1 HTTP protocol.
class ServiceProvider : public GuidanceProvider {
public:
    /// Checks GET /v1/health (with retries). Throws GuidanceError.
    explicit ServiceProvider(GuidanceConfig config);
    GuidanceResponse evaluate(const GuidanceRequest& request) override;
    const std::string& model() const noexcept { return model_; }

private:
    GuidanceConfig config_;
    std::string model_;
};

/// Builds the configured provider; DRAGD3D_GUIDANCE_URL overrides service_url.
std::unique_ptr<GuidanceProvider> make_provider(GuidanceConfig config, std::vector<Image> mock_targets = {});

namespace wire {
inline constexpr const char* kVersion = "dds/1";
/// Base64 of little-endian float32 H x W x 3, row-major.
std::string encode_image(const Image& image);
Image decode_image(const std::string& b64, int width, int height);
std::string request_body(const GuidanceRequest& request);
/// Parses and shape-checks a response against the request. Throws GuidanceError (not retryable).
GuidanceResponse parse_response(const std::string& body, const GuidanceRequest& request);
}  // namespace wire

}  // namespace meshdrag
