#include "monrec/embed.hpp"

#include <cmath>

#include <httplib.h>
#include <json.hpp>

namespace monrec::embed {

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine: vector widths differ");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

Vec mean_pool(const std::vector<Vec>& vectors, std::size_t width) {
    Vec out(width, 0.0);
    if (vectors.empty()) return out;
    for (const Vec& v : vectors) {
        if (v.size() != width) throw ShapeError("mean_pool: vector width mismatch");
        for (std::size_t i = 0; i < width; ++i) out[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(vectors.size());
    for (double& x : out) x *= inv;
    return out;
}

void l2_normalize(Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    if (acc == 0.0) return;
    const double inv = 1.0 / std::sqrt(acc);
    for (double& x : v) x *= inv;
}

Vec HashedEmbedder::embed(std::string_view text) const {
    Vec out(width, 0.0);
    if (text.empty() || width == 0) return out;
    // sentinel-padded byte 3-grams
    std::string padded;
    padded.reserve(text.size() + 2);
    padded.push_back('\x02');
    padded.append(text);
    padded.push_back('\x03');
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3), salt);
        const std::size_t bucket = static_cast<std::size_t>(h % width);
        out[bucket] += (h >> 63) ? 1.0 : -1.0;
    }
    l2_normalize(out);
    return out;
}

namespace {

// Splits "http://host:port/path" into client base and path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme = endpoint.find("://");
    if (scheme == std::string::npos) throw Error("malformed endpoint (missing scheme): " + endpoint);
    auto slash = endpoint.find('/', scheme + 3);
    if (slash == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

}  // namespace

std::vector<Vec> ExternalEmbedClient::embed(const std::vector<std::string>& texts) const {
    auto [base, path] = split_endpoint(cfg_.endpoint);
    httplib::Client cli(base);
    cli.set_connection_timeout(0, cfg_.timeout_ms * 1000);
    cli.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    nlohmann::json req{{"model", cfg_.model}, {"texts", texts}};
    auto res = cli.Post(path, headers, req.dump(), "application/json");
    if (!res) throw Error("embedding endpoint unreachable: " + cfg_.endpoint);
    if (res->status != 200)
        throw Error("embedding endpoint returned status " + std::to_string(res->status));
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("embedding response is not valid JSON: ") + e.what());
    }
    if (!doc.contains("vectors") || !doc["vectors"].is_array())
        throw Error("embedding response missing 'vectors' array");
    std::vector<Vec> out;
    out.reserve(doc["vectors"].size());
    for (const auto& row : doc["vectors"]) out.push_back(row.get<Vec>());
    if (out.size() != texts.size())
        throw Error("embedding response count mismatch: asked " + std::to_string(texts.size()) +
                    ", got " + std::to_string(out.size()));
    return out;
}

Embedder::Embedder(EmbedderOptions opts) : opts_(std::move(opts)) {
    hashed_.width = opts_.width;
    if (opts_.use_external) client_ = std::make_unique<ExternalEmbedClient>(opts_.client);
}

std::size_t Embedder::cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

Vec Embedder::embed_uncached(const std::string& text) {
    if (text.empty()) return Vec(opts_.width, 0.0);
    if (client_) {
        try {
            Vec v = client_->embed({text}).at(0);
            if (v.size() != opts_.width)
                throw Error("embedding width " + std::to_string(v.size()) + " != configured " +
                            std::to_string(opts_.width));
            l2_normalize(v);
            return v;
        } catch (const Error&) {
            if (!opts_.fallback_on_error) throw;
        }
    }
    return hashed_.embed(text);
}

Vec Embedder::embed_text(const std::string& text) {
    const std::uint64_t key = fnv1a64(text);
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    Vec v = embed_uncached(text);
    std::lock_guard lock(mu_);
    cache_[key] = v;  // last write wins on identical keys
    return v;
}

Vec Embedder::embed_set(const std::vector<std::string>& texts) {
    std::vector<Vec> vecs;
    vecs.reserve(texts.size());
    for (const auto& t : texts) vecs.push_back(embed_text(t));
    return mean_pool(vecs, opts_.width);
}

}  // namespace monrec::embed
