#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "monrec/embed.hpp"

using namespace monrec;
using embed::Embedder;
using embed::EmbedderOptions;
using embed::HashedEmbedder;
using embed::Vec;

TEST_CASE("empty text embeds to the zero vector") {
    HashedEmbedder h{64};
    Vec v = h.embed("");
    CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("hashed embedding is deterministic and unit-norm") {
    HashedEmbedder h{128};
    Vec a = h.embed("Raw RAM utilization in MBs");
    Vec b = h.embed("Raw RAM utilization in MBs");
    CHECK(a == b);
    double norm = 0.0;
    for (double x : a) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
}

TEST_CASE("synonym pairs score above distractors on a 50-pair corpus") {
    // Synthetic synonym corpus: base phrase, a lexical variant, and an
    // unrelated phrase. The hashed fallback must keep the variant closer.
    const std::vector<std::string> stems = {
        "RAM utilization",     "CPU usage",          "disk write latency", "request count",
        "error rate",          "queue depth",        "network throughput", "cache hit ratio",
        "heap allocation",     "thread pool size"};
    const std::vector<std::string> suffixes = {" %", " percent", " (avg)", " per node", " raw"};
    HashedEmbedder h{256};
    int wins = 0, total = 0;
    for (std::size_t i = 0; i < stems.size(); ++i) {
        for (const auto& suffix : suffixes) {
            const std::string base = stems[i];
            const std::string synonym = stems[i] + suffix;
            const std::string distractor = stems[(i + 3) % stems.size()];
            const Vec vb = h.embed(base);
            const double close = embed::cosine(vb, h.embed(synonym));
            const double far = embed::cosine(vb, h.embed(distractor));
            ++total;
            if (close > far) ++wins;
        }
    }
    CHECK(total == 50);
    CHECK(wins == 50);
}

TEST_CASE("mean pooling: singleton, symmetry, permutation invariance") {
    Vec v{1.0, -2.0, 3.0};
    CHECK(embed::mean_pool({v}, 3) == v);

    Vec neg{-1.0, 2.0, -3.0};
    Vec zero = embed::mean_pool({v, neg}, 3);
    for (double x : zero) CHECK(x == doctest::Approx(0.0));

    std::mt19937_64 rng(41);
    std::vector<Vec> set;
    for (int i = 0; i < 7; ++i) {
        Vec u(5);
        std::normal_distribution<double> d;
        for (double& x : u) x = d(rng);
        set.push_back(u);
    }
    Vec before = embed::mean_pool(set, 5);
    std::shuffle(set.begin(), set.end(), rng);
    Vec after = embed::mean_pool(set, 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(before[i] == doctest::Approx(after[i]).epsilon(1e-12));
}

TEST_CASE("cosine conventions") {
    Vec v{3.0, 4.0};
    CHECK(embed::cosine(v, v) == doctest::Approx(1.0));
    CHECK(embed::cosine(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(embed::cosine(v, Vec{0.0, 0.0}) == 0.0);
    CHECK_THROWS_AS(embed::cosine(v, Vec{1.0}), ShapeError);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> d;
    for (int i = 0; i < 20; ++i) {
        Vec a(9), b(9);
        for (double& x : a) x = d(rng);
        for (double& x : b) x = d(rng);
        CHECK(std::abs(embed::cosine(a, b) - embed::cosine(b, a)) < 1e-12);
    }
}

TEST_CASE("embedder caches and repeats itself") {
    EmbedderOptions opts;
    opts.width = 64;
    Embedder e(opts);
    Vec a = e.embed_text("queue depth");
    Vec b = e.embed_text("queue depth");
    CHECK(a == b);
    CHECK(e.cache_size() == 1);
}

TEST_CASE("external provider wire contract against a local server") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        auto doc = nlohmann::json::parse(req.body);
        REQUIRE(doc.contains("model"));
        REQUIRE(doc.contains("texts"));
        nlohmann::json vectors = nlohmann::json::array();
        for (const auto& text : doc["texts"]) {
            // constant direction derived from text length: enough to verify plumbing
            const double x = static_cast<double>(text.get<std::string>().size());
            vectors.push_back(std::vector<double>{x, 1.0, 0.0, 0.0});
        }
        res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    EmbedderOptions opts;
    opts.width = 4;
    opts.use_external = true;
    opts.client.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/embed";
    opts.client.api_key = "test-key";
    Embedder e(opts);
    Vec v = e.embed_text("latency");
    CHECK(v.size() == 4);
    // server vectors are L2-normalized by the embedder
    double norm = 0.0;
    for (double x : v) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    e.embed_text("latency");
    CHECK(calls.load() == 1);  // cache hit on the repeat

    server.stop();
    t.join();
}

TEST_CASE("external provider failure falls back to hashing when allowed") {
    EmbedderOptions opts;
    opts.width = 32;
    opts.use_external = true;
    opts.fallback_on_error = true;
    opts.client.endpoint = "http://127.0.0.1:1/unreachable";
    opts.client.timeout_ms = 200;
    Embedder e(opts);
    Vec v = e.embed_text("cpu usage");
    HashedEmbedder h{32};
    CHECK(v == h.embed("cpu usage"));

    opts.fallback_on_error = false;
    Embedder strict(opts);
    CHECK_THROWS_AS(strict.embed_text("cpu usage"), Error);
}
