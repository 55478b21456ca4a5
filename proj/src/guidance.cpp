#include "meshdrag/guidance.hpp"

#include "meshdrag/simd/kernels.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace meshdrag {

using json = nlohmann::json;

void GuidanceConfig::validate() const {
    if (!(guidance_scale > 0.0)) throw std::invalid_argument("guidance_scale must be > 0");
    if (!(gradient_scale > 0.0)) throw std::invalid_argument("gradient_scale must be > 0");
    const auto [lo, hi] = timestep_range;
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0)) throw std::invalid_argument("timestep_range must satisfy 0 <= t_min < t_max <= 1");
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

namespace {

void check_request(const GuidanceRequest& r) {
    if (r.edit_images.empty()) throw GuidanceError("guidance request has no views", false);
    if (r.mode == GuidanceMode::Dds && r.ref_images.size() != r.edit_images.size())
        throw GuidanceError("edit and reference batches differ in size", false);
    if (!r.ref_images.empty() && r.ref_images.size() != r.edit_images.size())
        throw GuidanceError("edit and reference batches differ in size", false);
    if (!r.camera_azimuths.empty() && r.camera_azimuths.size() != r.edit_images.size())
        throw GuidanceError("one azimuth per view required", false);
    for (std::size_t i = 0; i < r.edit_images.size(); ++i) {
        const Image& e = r.edit_images[i];
        if (e.width <= 0 || e.height <= 0 || e.data.size() != static_cast<std::size_t>(e.width * e.height * 3))
            throw GuidanceError("edit image " + std::to_string(i) + " is malformed", false);
        if (i < r.ref_images.size() && !(r.ref_images[i].same_shape(e) && r.ref_images[i].data.size() == e.data.size()))
            throw GuidanceError("edit/ref shape mismatch at view " + std::to_string(i), false);
    }
}

}  // namespace

GuidanceResponse dds_gradients(const GuidanceRequest& request, GuidanceProvider& provider) {
    check_request(request);
    GuidanceResponse resp = provider.evaluate(request);
    if (resp.pixel_gradients.size() != request.edit_images.size())
        throw GuidanceError("provider returned " + std::to_string(resp.pixel_gradients.size()) + " gradients for " +
                                std::to_string(request.edit_images.size()) + " views",
                            false);
    resp.gradient_norms.clear();
    for (std::size_t i = 0; i < resp.pixel_gradients.size(); ++i) {
        Image& g = resp.pixel_gradients[i];
        if (!g.same_shape(request.edit_images[i]) || g.data.size() != request.edit_images[i].data.size())
            throw GuidanceError("gradient shape mismatch at view " + std::to_string(i), false);
        simd::scale(g.values(), request.gradient_scale);
        const double norm = std::sqrt(simd::squared_norm(g.values()));
        if (!std::isfinite(norm)) throw GuidanceError("non-finite guidance gradient at view " + std::to_string(i), false);
        resp.gradient_norms.push_back(norm);
    }
    if (resp.timesteps.size() != resp.pixel_gradients.size()) resp.timesteps.assign(resp.pixel_gradients.size(), 0.0);
    if (resp.loss) *resp.loss *= request.gradient_scale;
    return resp;
}

const Image& MockProvider::target_for(const GuidanceRequest& request, std::size_t view) const {
    if (targets_.empty()) {
        if (request.ref_images.size() <= view) throw GuidanceError("mock provider needs reference images as targets", false);
        return request.ref_images[view];
    }
    return targets_.size() == 1 ? targets_.front() : targets_.at(view);
}

GuidanceResponse MockProvider::evaluate(const GuidanceRequest& request) {
    if (!targets_.empty() && targets_.size() != 1 && targets_.size() != request.edit_images.size())
        throw GuidanceError("mock provider target count does not match view count", false);
    GuidanceResponse resp;
    double loss = 0.0;
    for (std::size_t i = 0; i < request.edit_images.size(); ++i) {
        const Image& edit = request.edit_images[i];
        const Image& target = target_for(request, i);
        if (!target.same_shape(edit)) throw GuidanceError("mock target shape mismatch at view " + std::to_string(i), false);
        Image grad(edit.width, edit.height);
        if (request.mode == GuidanceMode::Dds) {
            const Image& ref = request.ref_images[i];
            simd::residual_difference(edit.values(), ref.values(), target.values(), grad.values());
            for (std::size_t k = 0; k < edit.data.size(); ++k) {
                const double de = edit.data[k] - target.data[k];
                const double dr = ref.data[k] - target.data[k];
                loss += de * de - dr * dr;
            }
        } else {
            simd::residual(edit.values(), target.values(), grad.values());
            for (std::size_t k = 0; k < edit.data.size(); ++k) {
                const double de = edit.data[k] - target.data[k];
                loss += de * de;
            }
        }
        resp.pixel_gradients.push_back(std::move(grad));
        resp.timesteps.push_back(0.0);
    }
    resp.loss = loss;
    return resp;
}

namespace wire {

std::string encode_image(const Image& image) {
    std::string raw(image.data.size() * 4, '\0');
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.data[i]));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(raw.data() + 4 * i, &bits, 4);
    }
    std::string out(4 * ((raw.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(raw.data()), static_cast<int>(raw.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Image decode_image(const std::string& b64, int width, int height) {
    const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3 * 4;
    if (b64.size() % 4 != 0) throw GuidanceError("image payload is not valid base64", false);
    std::string raw(b64.size() / 4 * 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                  reinterpret_cast<const unsigned char*>(b64.data()), static_cast<int>(b64.size()));
    if (n < 0) throw GuidanceError("image payload is not valid base64", false);
    std::size_t len = static_cast<std::size_t>(n);
    // EVP_DecodeBlock counts padding as zero bytes.
    if (!b64.empty() && b64.back() == '=') --len;
    if (b64.size() > 1 && b64[b64.size() - 2] == '=') --len;
    if (len != expected)
        throw GuidanceError("image payload has " + std::to_string(len) + " bytes, expected " + std::to_string(expected),
                            false);
    Image img(width, height);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, raw.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        img.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return img;
}

std::string request_body(const GuidanceRequest& request) {
    json body;
    body["prompt"] = request.prompt;
    body["mode"] = request.mode == GuidanceMode::Dds ? "dds" : "sds";
    body["guidance_scale"] = request.guidance_scale;
    body["seed"] = request.seed;
    body["timestep_range"] = {request.timestep_range.first, request.timestep_range.second};
    body["azimuths"] = request.camera_azimuths;
    body["view_prompt_augment"] = request.view_prompt_augment;
    json edits = json::array();
    for (const auto& img : request.edit_images) edits.push_back(encode_image(img));
    json refs = json::array();
    for (const auto& img : request.ref_images) refs.push_back(encode_image(img));
    body["edit_images"] = std::move(edits);
    body["ref_images"] = std::move(refs);
    return body.dump();
}

GuidanceResponse parse_response(const std::string& body, const GuidanceRequest& request) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        throw GuidanceError(std::string("malformed service response: ") + e.what(), false);
    }
    if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_string())
        throw GuidanceError("service response lacks a protocol version", false);
    if (doc["version"].get<std::string>() != kVersion)
        throw GuidanceError("protocol version mismatch: service speaks '" + doc["version"].get<std::string>() +
                                "', client speaks '" + kVersion + "'",
                            false);
    if (!doc.contains("gradients") || !doc["gradients"].is_array())
        throw GuidanceError("service response lacks gradients", false);
    const auto& grads = doc["gradients"];
    if (grads.size() != request.edit_images.size())
        throw GuidanceError("shape mismatch: service returned " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(request.edit_images.size()) + " views",
                            false);
    GuidanceResponse resp;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i].is_string()) throw GuidanceError("gradient " + std::to_string(i) + " is not a string", false);
        const Image& e = request.edit_images[i];
        resp.pixel_gradients.push_back(decode_image(grads[i].get<std::string>(), e.width, e.height));
    }
    if (doc.contains("timesteps")) {
        const auto& ts = doc["timesteps"];
        if (!ts.is_array() || ts.size() != grads.size())
            throw GuidanceError("shape mismatch: timesteps count differs from gradient count", false);
        for (const auto& t : ts) {
            if (!t.is_number()) throw GuidanceError("timestep is not a number", false);
            resp.timesteps.push_back(t.get<double>());
        }
    }
    return resp;
}

}  // namespace wire

namespace {

std::unique_ptr<httplib::Client> make_client(const GuidanceConfig& cfg) {
    auto cli = std::make_unique<httplib::Client>(cfg.service_url);
    cli->set_connection_timeout(cfg.connect_timeout.count(), 0);
    cli->set_read_timeout(cfg.timeout.count(), 0);
    cli->set_write_timeout(cfg.timeout.count(), 0);
    return cli;
}

template <class Call>
auto with_retries(const GuidanceConfig& cfg, const std::string& what, Call&& call) {
    std::string last_error;
    auto backoff = cfg.retry_backoff;
    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        try {
            return call();
        } catch (const GuidanceError& e) {
            if (!e.retryable()) throw;
            last_error = e.what();
        }
        if (attempt < cfg.max_attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw GuidanceError(what + " failed after " + std::to_string(cfg.max_attempts) + " attempts: " + last_error, false);
}

}  // namespace

ServiceProvider::ServiceProvider(GuidanceConfig config) : config_(std::move(config)) {
    config_.validate();
    model_ = with_retries(config_, "health check at " + config_.service_url, [&] {
        auto cli = make_client(config_);
        auto res = cli->Get("/v1/health");
        if (!res) throw GuidanceError("cannot reach " + config_.service_url + ": " + httplib::to_string(res.error()), true);
        if (res->status == 503) throw GuidanceError("service not ready (503)", true);
        if (res->status != 200) throw GuidanceError("health check returned HTTP " + std::to_string(res->status), false);
        json doc;
        try {
            doc = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw GuidanceError("health response is not JSON", false);
        }
        if (!doc.is_object() || doc.value("status", "") != "ok")
            throw GuidanceError("service health status is not ok", true);
        return doc.value("model", std::string("unknown"));
    });
}

GuidanceResponse ServiceProvider::evaluate(const GuidanceRequest& request) {
    const std::string body = wire::request_body(request);
    return with_retries(config_, "guidance request to " + config_.service_url, [&] {
        auto cli = make_client(config_);
        auto res = cli->Post("/v1/dds", body, "application/json");
        if (!res) throw GuidanceError("cannot reach " + config_.service_url + ": " + httplib::to_string(res.error()), true);
        if (res->status >= 500) throw GuidanceError("service returned HTTP " + std::to_string(res->status), true);
        if (res->status != 200)
            throw GuidanceError("service rejected request with HTTP " + std::to_string(res->status) + ": " + res->body, false);
        return wire::parse_response(res->body, request);
    });
}

std::unique_ptr<GuidanceProvider> make_provider(GuidanceConfig config, std::vector<Image> mock_targets) {
    config.validate();
    if (config.provider == GuidanceConfig::Provider::Mock) return std::make_unique<MockProvider>(std::move(mock_targets));
    if (const char* url = std::getenv("DRAGD3D_GUIDANCE_URL"); url && *url) config.service_url = url;
    return std::make_unique<ServiceProvider>(std::move(config));
}

}  // namespace meshdrag
