#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "resmatch/embedder.hpp"

namespace resmatch {

// Client for an external sentence-encoder service. Sends the raw expression
// as {"text": ...} and expects {"embedding": [...]} back. Responses are
// cached by raw string for the lifetime of the client, so repeated lookups
// of the same expression cost one request. The first response fixes the
// embedding dimension; later responses must agree.
class RemoteEmbedder {
public:
    RemoteEmbedder(std::string endpoint, int timeout_ms = 5000)
        : endpoint_(std::move(endpoint)),
          client_(std::make_unique<httplib::Client>(endpoint_)) {
        client_->set_connection_timeout(0, timeout_ms * 1000);
        client_->set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        client_->set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    }

    EmbeddingVector embed(const Expression& expression) {
        const std::string key = expression.raw;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        EmbeddingVector fetched = fetch(key);
        std::lock_guard<std::mutex> lock(mutex_);
        if (dimension_ == 0)
            dimension_ = fetched.dimension();
        else if (fetched.dimension() != dimension_)
            throw ProtocolError("embedding service changed dimension from " +
                                std::to_string(dimension_) + " to " +
                                std::to_string(fetched.dimension()));
        cache_.emplace(key, fetched);  // duplicate fetches return equal vectors
        return fetched;
    }

    const std::string& endpoint() const { return endpoint_; }

private:
    EmbeddingVector fetch(const std::string& text) {
        nlohmann::json body;
        body["text"] = text;
        httplib::Result res =
            client_->Post("/embed", body.dump(), "application/json");
        if (!res)
            throw TransportError("embedding service unreachable at " + endpoint_);
        if (res->status != 200)
            throw TransportError("embedding service at " + endpoint_ +
                                 " returned status " +
                                 std::to_string(res->status));
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw TransportError("malformed response from embedding service at " +
                                 endpoint_);
        }
        if (!parsed.contains("embedding") || !parsed["embedding"].is_array())
            throw TransportError("embedding service response missing 'embedding' array");
        EmbeddingVector out;
        out.values.reserve(parsed["embedding"].size());
        for (const auto& v : parsed["embedding"]) {
            if (!v.is_number())
                throw ProtocolError("non-numeric embedding entry for text '" +
                                    text + "'");
            double d = v.get<double>();
            if (!std::isfinite(d))
                throw ProtocolError("non-finite embedding entry for text '" +
                                    text + "'");
            out.values.push_back(d);
        }
        if (out.values.empty())
            throw ProtocolError("empty embedding for text '" + text + "'");
        return out;
    }

    std::string endpoint_;
    std::unique_ptr<httplib::Client> client_;
    std::mutex mutex_;
    std::unordered_map<std::string, EmbeddingVector> cache_;
    int dimension_ = 0;
};

}  // namespace resmatch
