#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudoscene/common.hpp"
#include "pseudoscene/geometry.hpp"

namespace pseudoscene::oracle {

// Shortest decimal form that round-trips. Integral values print without a
// decimal point, -0.0 prints as "0". Used wherever box coordinates become
// part of a lookup key, so the rule must stay stable.
inline std::string minimal_number(double value) {
    if (!std::isfinite(value)) {
        throw InvalidArgument("minimal_number: value must be finite");
    }
    if (value == 0.0) {
        return "0";
    }
    if (value == std::floor(value) && std::abs(value) < 9.0e18) {
        return std::to_string(static_cast<std::int64_t>(value));
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

// Key format: "<image_id>|x,y,w,h;x,y,w,h;..." with boxes sorted by
// (x, y, w, h). Equal box sets map to equal keys; an empty set maps to
// "<image_id>|".
inline std::string canonical_key(std::int64_t image_id, std::vector<geometry::BBox> boxes) {
    std::sort(boxes.begin(), boxes.end());
    std::string key = std::to_string(image_id);
    key += '|';
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (i != 0) {
            key += ';';
        }
        const auto& b = boxes[i];
        key += minimal_number(b.x);
        key += ',';
        key += minimal_number(b.y);
        key += ',';
        key += minimal_number(b.w);
        key += ',';
        key += minimal_number(b.h);
    }
    return key;
}

struct OracleQuery {
    std::int64_t image_id = 0;
    std::vector<geometry::BBox> removed_boxes;
    int target_class = 0;

    std::string canonical() const { return canonical_key(image_id, removed_boxes); }
};

struct OracleAnswer {
    double target_confidence = 0.0;
    int top_class = 0;
};

// Reduces a full per-class confidence map to an answer for one target class.
// Top class is the argmax; ties resolve to the lowest class id. A target
// class absent from the map scores 0.
inline OracleAnswer answer_from_confidences(const std::map<int, double>& confidences,
                                            int target_class) {
    if (confidences.empty()) {
        throw OracleError("classifier response carried no confidences");
    }
    int top = 0;
    double best = -1.0;
    for (const auto& [cls, prob] : confidences) {
        if (!(prob >= 0.0 && prob <= 1.0)) {
            throw OracleError("confidence for class " + std::to_string(cls) +
                              " outside [0,1]: " + std::to_string(prob));
        }
        if (prob > best) {
            best = prob;
            top = cls;
        }
    }
    OracleAnswer answer;
    answer.top_class = top;
    if (auto it = confidences.find(target_class); it != confidences.end()) {
        answer.target_confidence = it->second;
    }
    return answer;
}

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual OracleAnswer confidence(const OracleQuery& query) = 0;
};

// Table-backed oracle. The table is a JSON object mapping canonical query
// keys to {"confidence": p, "top_class": id}; answers are exact lookups and
// a missing key is an error naming that key.
class FileOracle final : public Oracle {
public:
    explicit FileOracle(const nlohmann::json& table) {
        if (!table.is_object()) {
            throw ParseError("oracle table must be a JSON object keyed by canonical query");
        }
        for (const auto& [key, entry] : table.items()) {
            if (!entry.is_object() || !entry.contains("confidence") || !entry.contains("top_class")) {
                throw ParseError("oracle table entry \"" + key +
                                 "\" must be {confidence, top_class}");
            }
            if (!entry["confidence"].is_number() || !entry["top_class"].is_number_integer()) {
                throw ParseError("oracle table entry \"" + key + "\" has wrong field types");
            }
            OracleAnswer answer;
            answer.target_confidence = entry["confidence"].get<double>();
            answer.top_class = entry["top_class"].get<int>();
            if (!(answer.target_confidence >= 0.0 && answer.target_confidence <= 1.0)) {
                throw ParseError("oracle table entry \"" + key + "\" confidence outside [0,1]");
            }
            table_.emplace(key, answer);
        }
    }

    static FileOracle from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open oracle table: " + path);
        }
        nlohmann::json table;
        try {
            in >> table;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("oracle table " + path + ": " + e.what());
        }
        return FileOracle(table);
    }

    OracleAnswer confidence(const OracleQuery& query) override {
        const std::string key = query.canonical();
        auto it = table_.find(key);
        if (it == table_.end()) {
            throw OracleError("oracle table has no entry for key \"" + key + "\"");
        }
        return it->second;
    }

    std::size_t size() const { return table_.size(); }

private:
    std::unordered_map<std::string, OracleAnswer> table_;
};

}  // namespace pseudoscene::oracle
