#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "monrec/common.hpp"

// Text embeddings for ontology strings. The production path talks to an
// external sentence-embedding endpoint; the offline fallback hashes character
// 3-grams with signed buckets, which keeps lexical similarity and is fully
// deterministic across processes.

namespace monrec::embed {

using Vec = std::vector<double>;

/// Cosine similarity. Returns 0 when either vector is zero (documented
/// convention) and throws on width mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Mean pooling over a set of equal-width vectors; the empty set maps to a
/// zero vector. Permutation invariant by construction.
Vec mean_pool(const std::vector<Vec>& vectors, std::size_t width);

void l2_normalize(Vec& v);

/// Signed character-3-gram feature hashing into `width` buckets followed by
/// L2 normalization. Empty text maps to the zero vector.
struct HashedEmbedder {
    std::size_t width = 256;
    std::uint64_t salt = 0x6d6f6e7265633164ULL;  // fixed: reproducible across processes

    Vec embed(std::string_view text) const;
};

struct EmbedClientConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8089/v1/embed
    std::string api_key;
    std::string model = "e5-base";
    int timeout_ms = 10000;
};

/// Wire contract: POST {"model": <id>, "texts": [...]} and the service
/// answers {"vectors": [[...], ...]}. Throws Error on transport or contract
/// violations.
class ExternalEmbedClient {
public:
    explicit ExternalEmbedClient(EmbedClientConfig cfg) : cfg_(std::move(cfg)) {}
    std::vector<Vec> embed(const std::vector<std::string>& texts) const;
    const EmbedClientConfig& config() const { return cfg_; }

private:
    EmbedClientConfig cfg_;
};

struct EmbedderOptions {
    std::size_t width = 256;
    bool use_external = false;
    bool fallback_on_error = true;  // policy: degrade to hashing instead of failing
    EmbedClientConfig client;
};

/// Facade used by every module that needs text vectors. Responses are cached
/// by content hash, which also pins determinism for a provider session.
class Embedder {
public:
    explicit Embedder(EmbedderOptions opts);

    Vec embed_text(const std::string& text);
    Vec embed_set(const std::vector<std::string>& texts);
    std::size_t width() const { return opts_.width; }
    std::size_t cache_size() const;

private:
    Vec embed_uncached(const std::string& text);

    EmbedderOptions opts_;
    HashedEmbedder hashed_;
    std::unique_ptr<ExternalEmbedClient> client_;
    mutable std::mutex mu_;
    std::unordered_map<std::uint64_t, Vec> cache_;
};

}  // namespace monrec::embed
