#include "meshdrag/guidance.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <random>

using namespace meshdrag;

namespace {

Image random_image(int w, int h, std::mt19937& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (double& x : img.data) x = u(gen);
    return img;
}

GuidanceRequest two_view_request(std::mt19937& gen) {
    GuidanceRequest r;
    r.prompt = "a chair";
    for (int i = 0; i < 2; ++i) {
        r.edit_images.push_back(random_image(5, 4, gen));
        r.ref_images.push_back(random_image(5, 4, gen));
        r.camera_azimuths.push_back(-30.0 + 60.0 * i);
    }
    return r;
}

}  // namespace

TEST_CASE("edit equal to ref gives exactly zero DDS gradient") {
    std::mt19937 gen(1);
    auto req = two_view_request(gen);
    req.ref_images = req.edit_images;
    SUBCASE("targets default to the reference renders") {
        MockProvider mock;
        const auto resp = dds_gradients(req, mock);
        for (const auto& g : resp.pixel_gradients)
            for (double x : g.data) CHECK(x == 0.0);
        for (double n : resp.gradient_norms) CHECK(n == 0.0);
    }
    SUBCASE("any fixed target") {
        auto mock = MockProvider::uniform_target(random_image(5, 4, gen));
        const auto resp = dds_gradients(req, mock);
        for (const auto& g : resp.pixel_gradients)
            for (double x : g.data) CHECK(x == 0.0);
    }
}

TEST_CASE("mock DDS arithmetic matches a direct computation") {
    std::mt19937 gen(2);
    const auto req = two_view_request(gen);
    const Image target = random_image(5, 4, gen);
    auto mock = MockProvider::uniform_target(target);
    const auto resp = dds_gradients(req, mock);
    REQUIRE(resp.pixel_gradients.size() == 2);
    double loss = 0.0;
    for (std::size_t v = 0; v < 2; ++v) {
        double norm2 = 0.0;
        for (std::size_t k = 0; k < target.data.size(); ++k) {
            const double e = req.edit_images[v].data[k], r = req.ref_images[v].data[k], t = target.data[k];
            const double want = req.gradient_scale * 2.0 * (e - t) - req.gradient_scale * 2.0 * (r - t);
            CHECK(resp.pixel_gradients[v].data[k] == doctest::Approx(want).epsilon(1e-12));
            norm2 += resp.pixel_gradients[v].data[k] * resp.pixel_gradients[v].data[k];
            loss += (e - t) * (e - t) - (r - t) * (r - t);
        }
        CHECK(resp.gradient_norms[v] == doctest::Approx(std::sqrt(norm2)).epsilon(1e-12));
    }
    REQUIRE(resp.loss.has_value());
    CHECK(*resp.loss == doctest::Approx(loss * req.gradient_scale).epsilon(1e-12));
}

TEST_CASE("edit at the target leaves pure reference subtraction") {
    std::mt19937 gen(3);
    auto req = two_view_request(gen);
    const Image target = req.edit_images[0];
    req.edit_images[1] = target;
    auto mock = MockProvider::uniform_target(target);
    const auto resp = dds_gradients(req, mock);
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t k = 0; k < target.data.size(); ++k)
            CHECK(resp.pixel_gradients[v].data[k] ==
                  doctest::Approx(-2.0 * (req.ref_images[v].data[k] - target.data[k]) * req.gradient_scale)
                      .epsilon(1e-12));
}

TEST_CASE("all-gray scene gives zero") {
    GuidanceRequest req;
    req.edit_images = {Image(6, 6, 0.5)};
    req.ref_images = {Image(6, 6, 0.5)};
    auto mock = MockProvider::uniform_target(Image(6, 6, 0.5));
    const auto resp = dds_gradients(req, mock);
    for (double x : resp.pixel_gradients[0].data) CHECK(x == 0.0);
}

TEST_CASE("doubling the gradient scale doubles the gradient") {
    std::mt19937 gen(4);
    auto req = two_view_request(gen);
    MockProvider mock = MockProvider::uniform_target(random_image(5, 4, gen));
    const auto a = dds_gradients(req, mock);
    req.gradient_scale *= 2.0;
    const auto b = dds_gradients(req, mock);
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t k = 0; k < a.pixel_gradients[v].data.size(); ++k)
            CHECK(b.pixel_gradients[v].data[k] == doctest::Approx(2.0 * a.pixel_gradients[v].data[k]).epsilon(1e-14));
}

TEST_CASE("mock responses are deterministic") {
    std::mt19937 gen(5);
    const auto req = two_view_request(gen);
    MockProvider mock = MockProvider::uniform_target(random_image(5, 4, gen));
    const auto a = dds_gradients(req, mock);
    const auto b = dds_gradients(req, mock);
    for (std::size_t v = 0; v < 2; ++v) CHECK(a.pixel_gradients[v].data == b.pixel_gradients[v].data);
}

TEST_CASE("SDS mode drops the reference branch") {
    std::mt19937 gen(6);
    auto req = two_view_request(gen);
    req.ref_images = req.edit_images;
    req.mode = GuidanceMode::Sds;
    const Image target(5, 4, 0.5);
    auto mock = MockProvider::uniform_target(target);
    const auto resp = dds_gradients(req, mock);
    double norm = 0.0;
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t k = 0; k < target.data.size(); ++k) {
            CHECK(resp.pixel_gradients[v].data[k] ==
                  doctest::Approx(2.0 * (req.edit_images[v].data[k] - 0.5) * req.gradient_scale).epsilon(1e-12));
            norm += std::abs(resp.pixel_gradients[v].data[k]);
        }
    CHECK(norm > 0.0);
}

TEST_CASE("shape errors are fatal") {
    std::mt19937 gen(7);
    MockProvider mock;
    auto req = two_view_request(gen);
    req.ref_images.pop_back();
    try {
        (void)dds_gradients(req, mock);
        FAIL("expected shape error");
    } catch (const GuidanceError& e) {
        CHECK_FALSE(e.retryable());
    }
    req = two_view_request(gen);
    req.ref_images[1] = Image(3, 3, 0.0);
    CHECK_THROWS_AS((void)dds_gradients(req, mock), GuidanceError);
    req = two_view_request(gen);
    req.edit_images.clear();
    req.ref_images.clear();
    CHECK_THROWS_AS((void)dds_gradients(req, mock), GuidanceError);
}

TEST_CASE("config validation") {
    GuidanceConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.guidance_scale == 100.0);
    CHECK(c.gradient_scale == 0.00002);
    CHECK(c.timestep_range.first == 0.05);
    CHECK(c.timestep_range.second == 0.95);
    c.gradient_scale = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = GuidanceConfig{};
    c.timestep_range = {0.6, 0.4};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("wire images are float32 little-endian base64") {
    Image img(2, 1);
    img.data = {0.0, 1.0, 0.5, -2.0, 0.25, 3.0};
    const std::string b64 = wire::encode_image(img);
    // 24 bytes -> 32 base64 characters; first float 0.0 is four zero bytes.
    CHECK(b64.size() == 32);
    CHECK(b64.substr(0, 5) == "AAAAA");
    // 1.0f is 00 00 80 3f little-endian.
    const Image one = [] {
        Image i(1, 1);
        i.data = {1.0, 1.0, 1.0};
        return i;
    }();
    CHECK(wire::encode_image(one) == "AACAPwAAgD8AAIA/");
    const Image back = wire::decode_image(b64, 2, 1);
    CHECK(back.data == img.data);
    CHECK_THROWS_AS((void)wire::decode_image(b64, 3, 1), GuidanceError);
    CHECK_THROWS_AS((void)wire::decode_image("abc", 1, 1), GuidanceError);
}

TEST_CASE("request body carries every protocol field") {
    std::mt19937 gen(8);
    auto req = two_view_request(gen);
    req.seed = 1234;
    req.mode = GuidanceMode::Sds;
    req.view_prompt_augment = true;
    const auto doc = nlohmann::json::parse(wire::request_body(req));
    CHECK(doc["prompt"] == "a chair");
    CHECK(doc["mode"] == "sds");
    CHECK(doc["guidance_scale"] == 100.0);
    CHECK(doc["seed"] == 1234);
    CHECK(doc["timestep_range"][0] == 0.05);
    CHECK(doc["timestep_range"][1] == 0.95);
    CHECK(doc["azimuths"].size() == 2);
    CHECK(doc["view_prompt_augment"] == true);
    CHECK(doc["edit_images"].size() == 2);
    CHECK(doc["ref_images"].size() == 2);
    const Image e0 = wire::decode_image(doc["edit_images"][0].get<std::string>(), 5, 4);
    for (std::size_t k = 0; k < e0.data.size(); ++k)
        CHECK(e0.data[k] == static_cast<double>(static_cast<float>(req.edit_images[0].data[k])));
}

TEST_CASE("response parsing checks version and shapes") {
    std::mt19937 gen(9);
    const auto req = two_view_request(gen);
    nlohmann::json good;
    good["version"] = "dds/1";
    good["gradients"] = {wire::encode_image(Image(5, 4, 0.25)), wire::encode_image(Image(5, 4, -0.5))};
    good["timesteps"] = {0.3, 0.7};
    const auto resp = wire::parse_response(good.dump(), req);
    CHECK(resp.pixel_gradients.size() == 2);
    CHECK(resp.pixel_gradients[1].data[0] == -0.5);
    CHECK(resp.timesteps == std::vector<double>{0.3, 0.7});

    auto bad = good;
    bad["version"] = "dds/2";
    try {
        (void)wire::parse_response(bad.dump(), req);
        FAIL("expected version mismatch");
    } catch (const GuidanceError& e) {
        CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
        CHECK_FALSE(e.retryable());
    }
    bad = good;
    bad["gradients"].erase(1);
    CHECK_THROWS_WITH_AS((void)wire::parse_response(bad.dump(), req), doctest::Contains("shape mismatch"), GuidanceError);
    bad = good;
    bad["gradients"][0] = wire::encode_image(Image(4, 4, 0.0));
    CHECK_THROWS_AS((void)wire::parse_response(bad.dump(), req), GuidanceError);
    CHECK_THROWS_AS((void)wire::parse_response("not json", req), GuidanceError);
}
