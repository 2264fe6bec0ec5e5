// HTTP client for an external model server.
//
//   GET  /v1/meta      -> {"num_classes": N, "input_height": H, "input_width": W}
//   POST /v1/classify  {"images": [{"rgb8_b64": ..., "height": H, "width": W}]}
//                      -> {"probs": [[...], ...]}
//
// rgb8_b64 is the base64 of H*W*3 bytes, row-major, channels interleaved.
// Preprocessing (normalization) is the server's business; the client sends
// raw 8-bit pixels at the declared input resolution.

#pragma once

#include <cstddef>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>

#include "mse/classifier.hpp"

namespace mse {

/// Connection failure, timeout or 5xx after all retries.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed reply, or a request the server rejected. `item` names the
/// offending batch entry when the server reported one.
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what, std::optional<std::size_t> item = std::nullopt)
        : std::runtime_error(what), item_(item) {}
    std::optional<std::size_t> item() const { return item_; }

private:
    std::optional<std::size_t> item_;
};

struct ModelMeta {
    int num_classes = 0;
    int input_height = 0;
    int input_width = 0;
};

struct RemoteConfig {
    std::string endpoint;  // e.g. "http://127.0.0.1:8000"
    double timeout_seconds = 30.0;
    std::size_t max_batch = 16;
    int retries = 2;
    std::ptrdiff_t max_in_flight = 4;
};

/// Value of SAG_MODEL_ENDPOINT, if set and non-empty.
std::optional<std::string> endpoint_from_env();

ModelMeta fetch_metadata(const std::string& endpoint, double timeout_seconds = 30.0);

/// Request body for a batch of images already at the model resolution.
std::string encode_classify_request(std::span<const Image> images);
/// Parses and validates a /v1/classify reply.
std::vector<Scores> decode_classify_response(const std::string& body, std::size_t batch_size,
                                             int num_classes);
ModelMeta decode_meta_response(const std::string& body);

class RemoteClassifier final : public Classifier {
public:
    /// Fetches metadata from the server.
    explicit RemoteClassifier(RemoteConfig config);
    RemoteClassifier(RemoteConfig config, ModelMeta meta);

    int num_classes() const override { return meta_.num_classes; }
    std::vector<Scores> classify_batch(std::span<const Image> images) const override;
    std::size_t max_batch() const override { return config_.max_batch; }
    std::optional<std::pair<int, int>> input_size() const override {
        return std::make_pair(meta_.input_height, meta_.input_width);
    }

    const ModelMeta& meta() const { return meta_; }
    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    ModelMeta meta_;
    mutable std::counting_semaphore<> in_flight_;
};

}  // namespace mse
