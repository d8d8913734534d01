#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pseudoscene/common.hpp"
#include "pseudoscene/oracle.hpp"

namespace pseudoscene::oracle {

struct HttpOracleConfig {
    std::string base_url;                          // "http://host:port"
    std::string bearer_token;                      // empty = no Authorization header
    std::array<int, 3> patch_color{128, 128, 128};
    int timeout_seconds = 30;
    int retries = 0;
};

// Client for an external classifier service. POST /classify with
// {image_id, removed_boxes, patch_color}, expects {"confidences":
// {class_id: probability, ...}}. Responses are memoized by canonical query
// key, so a box set is sent over the wire at most once per oracle instance.
class HttpOracle final : public Oracle {
public:
    explicit HttpOracle(HttpOracleConfig config)
        : config_(std::move(config)), client_(config_.base_url) {
        if (config_.base_url.empty()) {
            throw ConfigError("oracle endpoint URL is empty");
        }
        if (config_.timeout_seconds < 1) {
            throw ConfigError("oracle timeout must be at least 1 second");
        }
        if (config_.retries < 0) {
            throw ConfigError("oracle retry count must be non-negative");
        }
        client_.set_connection_timeout(config_.timeout_seconds, 0);
        client_.set_read_timeout(config_.timeout_seconds, 0);
        client_.set_write_timeout(config_.timeout_seconds, 0);
        if (!config_.bearer_token.empty()) {
            client_.set_bearer_token_auth(config_.bearer_token);
        }
    }

    OracleAnswer confidence(const OracleQuery& query) override {
        const std::string key = query.canonical();
        // One lock spans lookup and fetch so each key reaches the service at
        // most once even under concurrent callers.
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = memo_.find(key);
        if (it == memo_.end()) {
            it = memo_.emplace(key, fetch(query, key)).first;
        }
        return answer_from_confidences(it->second, query.target_class);
    }

    std::size_t memo_size() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return memo_.size();
    }

private:
    std::map<int, double> fetch(const OracleQuery& query, const std::string& key) {
        std::vector<geometry::BBox> boxes = query.removed_boxes;
        std::sort(boxes.begin(), boxes.end());
        nlohmann::json body;
        body["image_id"] = query.image_id;
        body["removed_boxes"] = nlohmann::json::array();
        for (const auto& b : boxes) {
            body["removed_boxes"].push_back({b.x, b.y, b.w, b.h});
        }
        body["patch_color"] = {config_.patch_color[0], config_.patch_color[1],
                               config_.patch_color[2]};
        const std::string payload = body.dump();

        httplib::Result result;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            result = client_.Post("/classify", payload, "application/json");
            if (result) {
                break;
            }
        }
        if (!result) {
            throw OracleError("classifier request failed (" + httplib::to_string(result.error()) +
                              ") for query \"" + key + "\"");
        }
        if (result->status != 200) {
            throw OracleError("classifier returned HTTP " + std::to_string(result->status) +
                              " for query \"" + key + "\"");
        }

        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::exception& e) {
            throw OracleError("classifier reply is not valid JSON for query \"" + key +
                              "\": " + e.what());
        }
        if (!reply.is_object() || !reply.contains("confidences") ||
            !reply["confidences"].is_object()) {
            throw OracleError("classifier reply missing confidences object for query \"" + key +
                              "\"");
        }
        std::map<int, double> confidences;
        for (const auto& [cls_key, prob] : reply["confidences"].items()) {
            int cls = 0;
            try {
                std::size_t pos = 0;
                cls = std::stoi(cls_key, &pos);
                if (pos != cls_key.size()) {
                    throw std::invalid_argument(cls_key);
                }
            } catch (const std::exception&) {
                throw OracleError("classifier reply has non-integer class id \"" + cls_key +
                                  "\" for query \"" + key + "\"");
            }
            if (!prob.is_number()) {
                throw OracleError("classifier reply confidence for class " + cls_key +
                                  " is not a number for query \"" + key + "\"");
            }
            confidences[cls] = prob.get<double>();
        }
        if (confidences.empty()) {
            throw OracleError("classifier reply carried no confidences for query \"" + key + "\"");
        }
        return confidences;
    }

    HttpOracleConfig config_;
    httplib::Client client_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::map<int, double>> memo_;
};

}  // namespace pseudoscene::oracle
