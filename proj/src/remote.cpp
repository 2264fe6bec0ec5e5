#include "mse/remote.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "mse/base64.hpp"
#include "mse/image_io.hpp"

namespace mse {

using nlohmann::json;

namespace {

void set_timeouts(httplib::Client& client, double seconds) {
    const auto usec = std::chrono::microseconds(static_cast<long long>(seconds * 1e6));
    const auto sec = std::chrono::duration_cast<std::chrono::seconds>(usec);
    const auto rest = std::chrono::duration_cast<std::chrono::microseconds>(usec - sec);
    client.set_connection_timeout(sec.count(), rest.count());
    client.set_read_timeout(sec.count(), rest.count());
    client.set_write_timeout(sec.count(), rest.count());
}

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("reply is not JSON: ") + e.what());
    }
}

int positive_int(const json& doc, const char* field) {
    if (!doc.contains(field)) throw ProtocolError(std::string("reply missing ") + field);
    const auto& v = doc.at(field);
    if (!v.is_number_integer() || v.get<long long>() <= 0)
        throw ProtocolError(std::string("reply field ") + field + " is not a positive integer");
    return v.get<int>();
}

}  // namespace

std::optional<std::string> endpoint_from_env() {
    const char* v = std::getenv("SAG_MODEL_ENDPOINT");
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

ModelMeta decode_meta_response(const std::string& body) {
    const json doc = parse_body(body);
    if (!doc.is_object()) throw ProtocolError("meta reply is not an object");
    return {positive_int(doc, "num_classes"), positive_int(doc, "input_height"),
            positive_int(doc, "input_width")};
}

ModelMeta fetch_metadata(const std::string& endpoint, double timeout_seconds) {
    httplib::Client client(endpoint);
    set_timeouts(client, timeout_seconds);
    auto res = client.Get("/v1/meta");
    if (!res) throw TransportError("GET /v1/meta: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ProtocolError("GET /v1/meta: status " + std::to_string(res->status));
    return decode_meta_response(res->body);
}

std::string encode_classify_request(std::span<const Image> images) {
    json arr = json::array();
    for (const auto& img : images) {
        arr.push_back({{"rgb8_b64", base64_encode(to_rgb8(img))},
                       {"height", img.height},
                       {"width", img.width}});
    }
    return json{{"images", std::move(arr)}}.dump();
}

std::vector<Scores> decode_classify_response(const std::string& body, std::size_t batch_size,
                                             int num_classes) {
    const json doc = parse_body(body);
    if (!doc.is_object() || !doc.contains("probs") || !doc.at("probs").is_array())
        throw ProtocolError("classify reply missing probs array");
    const auto& probs = doc.at("probs");
    if (probs.size() != batch_size)
        throw ProtocolError("classify reply has " + std::to_string(probs.size()) +
                            " vectors for a batch of " + std::to_string(batch_size));
    std::vector<Scores> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto& row = probs[i];
        if (!row.is_array() || row.size() != static_cast<std::size_t>(num_classes))
            throw ProtocolError("classify reply vector has wrong length", i);
        Scores s;
        s.reserve(row.size());
        for (const auto& v : row) {
            if (!v.is_number()) throw ProtocolError("classify reply has a non-numeric score", i);
            const double p = v.get<double>();
            if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("classify reply score outside [0,1]", i);
            s.push_back(p);
        }
        out.push_back(std::move(s));
    }
    return out;
}

RemoteClassifier::RemoteClassifier(RemoteConfig config)
    : RemoteClassifier(config, fetch_metadata(config.endpoint, config.timeout_seconds)) {}

RemoteClassifier::RemoteClassifier(RemoteConfig config, ModelMeta meta)
    : config_(std::move(config)), meta_(meta), in_flight_(std::max<std::ptrdiff_t>(1, config_.max_in_flight)) {
    if (config_.max_batch == 0) throw std::invalid_argument("remote classifier: max_batch must be >= 1");
    if (meta_.num_classes <= 0 || meta_.input_height <= 0 || meta_.input_width <= 0)
        throw std::invalid_argument("remote classifier: invalid model metadata");
}

std::vector<Scores> RemoteClassifier::classify_batch(std::span<const Image> images) const {
    if (images.empty()) return {};
    if (images.size() > config_.max_batch)
        throw std::invalid_argument("remote classifier: batch larger than max_batch");

    std::vector<Image> resized;
    resized.reserve(images.size());
    for (const auto& img : images) resized.push_back(resize_bilinear(img, meta_.input_height, meta_.input_width));
    const std::string body = encode_classify_request(resized);

    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    httplib::Client client(config_.endpoint);
    set_timeouts(client, config_.timeout_seconds);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << std::min(attempt, 6)));
        auto res = client.Post("/v1/classify", body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            std::optional<std::size_t> item;
            std::string message = "status " + std::to_string(res->status);
            try {
                const json err = json::parse(res->body);
                if (err.contains("index") && err.at("index").is_number_unsigned())
                    item = err.at("index").get<std::size_t>();
                if (err.contains("error") && err.at("error").is_string())
                    message += ": " + err.at("error").get<std::string>();
            } catch (const json::exception&) {
            }
            if (item) message += " (item " + std::to_string(*item) + ")";
            throw ProtocolError("POST /v1/classify rejected: " + message, item);
        }
        return decode_classify_response(res->body, images.size(), meta_.num_classes);
    }
    throw TransportError("POST /v1/classify failed after " + std::to_string(config_.retries + 1) +
                         " attempts: " + last_error);
}

}  // namespace mse
