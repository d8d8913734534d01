#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudoscene/buckets.hpp"
#include "pseudoscene/common.hpp"
#include "pseudoscene/dataset_io.hpp"

namespace pseudoscene::catalog {

using nlohmann::json;

struct ClassRecord {
    int class_id = 0;
    std::string name;
    std::optional<std::string> synset_id;
    std::int64_t gold_image_count = 0;
    std::int64_t gold_instance_count = 0;
    std::int64_t oci_image_count = 0;
    Bucket bucket = Bucket::Rare;
};

// WordNet-style synset keys: one letter followed by eight digits.
inline bool is_valid_synset(const std::string& synset) {
    if (synset.size() != 9 || !std::isalpha(static_cast<unsigned char>(synset[0]))) {
        return false;
    }
    for (std::size_t i = 1; i < synset.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(synset[i]))) {
            return false;
        }
    }
    return true;
}

struct MatchedPair {
    ClassRecord gold;
    ClassRecord oci;
};

struct MatchResult {
    std::vector<MatchedPair> matches;
    std::vector<ClassRecord> unmatched_gold;
    std::vector<ClassRecord> unmatched_oci;
};

namespace detail {

inline std::string fold_name(const std::string& name) {
    std::string folded = name;
    std::transform(folded.begin(), folded.end(), folded.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return folded;
}

inline std::unordered_map<std::string, std::size_t> synset_index(
    const std::vector<ClassRecord>& classes, const char* side) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!classes[i].synset_id) {
            continue;
        }
        const std::string& synset = *classes[i].synset_id;
        if (!is_valid_synset(synset)) {
            throw InvalidArgument(std::string(side) + " class " +
                                  std::to_string(classes[i].class_id) + " has malformed synset \"" +
                                  synset + "\"");
        }
        if (!index.emplace(synset, i).second) {
            throw InvalidArgument(std::string(side) + " taxonomy repeats synset \"" + synset +
                                  "\"");
        }
    }
    return index;
}

}  // namespace detail

// Joins the two class lists on synset id; classes without a synset fall back
// to a case-insensitive exact-name join, where the i-th occurrence of a name
// on one side pairs with the i-th on the other. Repeating a synset within
// one side is an error. Output order follows the gold input.
inline MatchResult match_synsets(const std::vector<ClassRecord>& gold_classes,
                                 const std::vector<ClassRecord>& oci_classes) {
    const auto gold_index = detail::synset_index(gold_classes, "gold");
    const auto oci_index = detail::synset_index(oci_classes, "object-centric");

    MatchResult result;
    std::vector<bool> oci_matched(oci_classes.size(), false);

    std::unordered_map<std::string, std::deque<std::size_t>> oci_names;
    for (std::size_t i = 0; i < oci_classes.size(); ++i) {
        if (!oci_classes[i].synset_id) {
            oci_names[detail::fold_name(oci_classes[i].name)].push_back(i);
        }
    }

    for (const auto& gold : gold_classes) {
        std::optional<std::size_t> partner;
        if (gold.synset_id) {
            if (auto it = oci_index.find(*gold.synset_id); it != oci_index.end()) {
                partner = it->second;
            }
        } else {
            auto it = oci_names.find(detail::fold_name(gold.name));
            if (it != oci_names.end() && !it->second.empty()) {
                partner = it->second.front();
                it->second.pop_front();
            }
        }
        if (partner) {
            oci_matched[*partner] = true;
            result.matches.push_back(MatchedPair{gold, oci_classes[*partner]});
        } else {
            result.unmatched_gold.push_back(gold);
        }
    }
    for (std::size_t i = 0; i < oci_classes.size(); ++i) {
        if (!oci_matched[i]) {
            result.unmatched_oci.push_back(oci_classes[i]);
        }
    }
    return result;
}

struct FrequencyReport {
    std::vector<ClassRecord> classes;  // sorted by class_id
    std::int64_t rare = 0;
    std::int64_t common = 0;
    std::int64_t frequent = 0;
    std::int64_t matched_class_count = 0;
    std::int64_t zero_gold_image_classes = 0;
    double mean_instances_per_image = 0.0;
    double median_instances_per_image = 0.0;
};

// Per-class gold frequencies with object-centric availability joined in.
// Mean and median instances per image run over every gold image, including
// ones without a single annotation; an even image count medians as the
// average of the two middle values.
inline FrequencyReport frequency_report(const dataset_io::CocoDataset& gold_dataset,
                                        const std::vector<ClassRecord>& oci_catalog) {
    std::unordered_set<std::int64_t> image_ids;
    for (const auto& image : gold_dataset.images) {
        image_ids.insert(image.id);
    }
    std::unordered_map<int, const dataset_io::CocoCategory*> categories;
    for (const auto& category : gold_dataset.categories) {
        categories.emplace(category.id, &category);
    }

    std::unordered_map<int, std::unordered_set<std::int64_t>> class_images;
    std::unordered_map<int, std::int64_t> class_instances;
    std::unordered_map<std::int64_t, std::int64_t> per_image;
    for (const auto& annotation : gold_dataset.annotations) {
        if (image_ids.find(annotation.image_id) == image_ids.end()) {
            throw InvalidArgument("annotation " + std::to_string(annotation.id) +
                                  " references missing image " +
                                  std::to_string(annotation.image_id));
        }
        if (categories.find(annotation.category_id) == categories.end()) {
            throw InvalidArgument("annotation " + std::to_string(annotation.id) +
                                  " references missing category " +
                                  std::to_string(annotation.category_id));
        }
        class_images[annotation.category_id].insert(annotation.image_id);
        ++class_instances[annotation.category_id];
        ++per_image[annotation.image_id];
    }

    FrequencyReport report;
    std::vector<ClassRecord> gold_records;
    gold_records.reserve(gold_dataset.categories.size());
    for (const auto& category : gold_dataset.categories) {
        ClassRecord record;
        record.class_id = category.id;
        record.name = category.name;
        record.synset_id = category.synset;
        auto images_it = class_images.find(category.id);
        record.gold_image_count =
            images_it == class_images.end() ? 0 : static_cast<std::int64_t>(images_it->second.size());
        auto instances_it = class_instances.find(category.id);
        record.gold_instance_count = instances_it == class_instances.end() ? 0 : instances_it->second;
        record.bucket = bucket_of(record.gold_image_count);
        gold_records.push_back(std::move(record));
    }

    const MatchResult matched = match_synsets(gold_records, oci_catalog);
    std::unordered_map<int, std::int64_t> oci_counts;
    for (const auto& pair : matched.matches) {
        oci_counts.emplace(pair.gold.class_id, pair.oci.oci_image_count);
    }
    report.matched_class_count = static_cast<std::int64_t>(matched.matches.size());

    for (auto& record : gold_records) {
        if (auto it = oci_counts.find(record.class_id); it != oci_counts.end()) {
            record.oci_image_count = it->second;
        }
        if (record.gold_image_count == 0) {
            ++report.zero_gold_image_classes;
        }
        switch (record.bucket) {
            case Bucket::Rare: ++report.rare; break;
            case Bucket::Common: ++report.common; break;
            case Bucket::Frequent: ++report.frequent; break;
        }
    }
    std::sort(gold_records.begin(), gold_records.end(),
              [](const ClassRecord& a, const ClassRecord& b) { return a.class_id < b.class_id; });
    report.classes = std::move(gold_records);

    if (!gold_dataset.images.empty()) {
        std::vector<std::int64_t> counts;
        counts.reserve(gold_dataset.images.size());
        for (const auto& image : gold_dataset.images) {
            auto it = per_image.find(image.id);
            counts.push_back(it == per_image.end() ? 0 : it->second);
        }
        std::sort(counts.begin(), counts.end());
        report.mean_instances_per_image =
            static_cast<double>(gold_dataset.annotations.size()) /
            static_cast<double>(gold_dataset.images.size());
        const std::size_t n = counts.size();
        report.median_instances_per_image =
            n % 2 == 1 ? static_cast<double>(counts[n / 2])
                       : (static_cast<double>(counts[n / 2 - 1]) +
                          static_cast<double>(counts[n / 2])) / 2.0;
    }
    return report;
}

inline json report_to_json(const FrequencyReport& report) {
    json root;
    root["classes"] = json::array();
    for (const auto& record : report.classes) {
        json obj;
        obj["class_id"] = record.class_id;
        obj["name"] = record.name;
        if (record.synset_id) {
            obj["synset_id"] = *record.synset_id;
        }
        obj["gold_image_count"] = record.gold_image_count;
        obj["gold_instance_count"] = record.gold_instance_count;
        obj["oci_image_count"] = record.oci_image_count;
        obj["bucket"] = to_string(record.bucket);
        root["classes"].push_back(std::move(obj));
    }
    json totals;
    totals["rare"] = report.rare;
    totals["common"] = report.common;
    totals["frequent"] = report.frequent;
    root["bucket_totals"] = std::move(totals);
    root["matched_class_count"] = report.matched_class_count;
    root["zero_gold_image_classes"] = report.zero_gold_image_classes;
    root["mean_instances_per_image"] = report.mean_instances_per_image;
    root["median_instances_per_image"] = report.median_instances_per_image;
    return root;
}

namespace detail {

inline std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) {
        return value;
    }
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') {
            quoted += '"';
        }
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

}  // namespace detail

inline std::string report_to_csv(const FrequencyReport& report) {
    std::string csv =
        "class_id,name,synset_id,gold_image_count,gold_instance_count,oci_image_count,bucket\n";
    for (const auto& record : report.classes) {
        csv += std::to_string(record.class_id);
        csv += ',';
        csv += detail::csv_field(record.name);
        csv += ',';
        csv += record.synset_id ? detail::csv_field(*record.synset_id) : "";
        csv += ',';
        csv += std::to_string(record.gold_image_count);
        csv += ',';
        csv += std::to_string(record.gold_instance_count);
        csv += ',';
        csv += std::to_string(record.oci_image_count);
        csv += ',';
        csv += to_string(record.bucket);
        csv += '\n';
    }
    return csv;
}

struct RepeatFactorTable {
    double threshold = 0.001;
    std::map<int, double> class_factors;
    std::map<std::int64_t, double> image_factors;
};

// Repeat factors r(c) = max(1, sqrt(t / f(c))) where f(c) is the fraction of
// images containing class c; an image repeats by the max factor over its
// classes. Classes absent from every image carry no factor.
inline RepeatFactorTable rfs_weights(const dataset_io::CocoDataset& dataset, double t = 0.001) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw InvalidArgument("repeat-factor threshold must lie in (0,1]");
    }
    if (dataset.images.empty()) {
        throw InvalidArgument("repeat-factor sampling needs a non-empty dataset");
    }

    std::unordered_set<std::int64_t> image_ids;
    for (const auto& image : dataset.images) {
        image_ids.insert(image.id);
    }
    std::unordered_map<int, std::unordered_set<std::int64_t>> class_images;
    std::unordered_map<std::int64_t, std::unordered_set<int>> image_classes;
    for (const auto& annotation : dataset.annotations) {
        if (image_ids.find(annotation.image_id) == image_ids.end()) {
            throw InvalidArgument("annotation " + std::to_string(annotation.id) +
                                  " references missing image " +
                                  std::to_string(annotation.image_id));
        }
        class_images[annotation.category_id].insert(annotation.image_id);
        image_classes[annotation.image_id].insert(annotation.category_id);
    }

    RepeatFactorTable table;
    table.threshold = t;
    const double total = static_cast<double>(dataset.images.size());
    for (const auto& [cls, images] : class_images) {
        const double fraction = static_cast<double>(images.size()) / total;
        table.class_factors[cls] = std::max(1.0, std::sqrt(t / fraction));
    }
    for (const auto& image : dataset.images) {
        double factor = 1.0;
        if (auto it = image_classes.find(image.id); it != image_classes.end()) {
            for (int cls : it->second) {
                factor = std::max(factor, table.class_factors.at(cls));
            }
        }
        table.image_factors[image.id] = factor;
    }
    return table;
}

// threshold(c) = base * (N_c / N_max)^gamma over per-class image counts.
// Zero-count classes are rejected; drop them or floor their counts first.
inline std::map<int, double> calibrated_thresholds(
    const std::map<int, std::int64_t>& class_counts, double gamma = 0.5, double base = 0.5) {
    if (class_counts.empty()) {
        throw InvalidArgument("calibration needs at least one class count");
    }
    if (!(base > 0.0 && base <= 1.0)) {
        throw InvalidArgument("calibration base must lie in (0,1]");
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw InvalidArgument("calibration exponent must be non-negative");
    }
    std::int64_t n_max = 0;
    for (const auto& [cls, count] : class_counts) {
        if (count < 1) {
            throw InvalidArgument("class " + std::to_string(cls) +
                                  " has no training images; exclude it or floor its count "
                                  "before calibrating");
        }
        n_max = std::max(n_max, count);
    }
    std::map<int, double> thresholds;
    for (const auto& [cls, count] : class_counts) {
        const double ratio = static_cast<double>(count) / static_cast<double>(n_max);
        thresholds[cls] = base * std::pow(ratio, gamma);
    }
    return thresholds;
}

struct OciClass {
    int class_id = 0;
    std::string name;
    std::optional<std::string> synset_id;
    std::vector<std::string> image_paths;
};

inline ClassRecord to_class_record(const OciClass& oci) {
    ClassRecord record;
    record.class_id = oci.class_id;
    record.name = oci.name;
    record.synset_id = oci.synset_id;
    record.oci_image_count = static_cast<std::int64_t>(oci.image_paths.size());
    return record;
}

// Object-centric catalog file: JSON array of
// {class_id, name, synset_id?, image_paths: [path, ...]}.
inline std::vector<OciClass> parse_oci_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open catalog: " + path);
    }
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!root.is_array()) {
        throw ParseError(path + ": catalog must be a JSON array");
    }

    std::vector<OciClass> classes;
    std::unordered_set<int> seen;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& obj = root[i];
        const std::string ctx = path + ": classes[" + std::to_string(i) + "]";
        if (!obj.is_object()) {
            throw ParseError(ctx + " is not an object");
        }
        OciClass record;
        record.class_id = static_cast<int>(dataset_io::detail::require_int(obj, "class_id", ctx));
        record.name = dataset_io::detail::require_string(obj, "name", ctx);
        if (obj.contains("synset_id")) {
            record.synset_id = dataset_io::detail::require_string(obj, "synset_id", ctx);
            if (!is_valid_synset(*record.synset_id)) {
                throw ParseError(ctx + ": malformed synset \"" + *record.synset_id + "\"");
            }
        }
        if (!obj.contains("image_paths") || !obj["image_paths"].is_array()) {
            throw ParseError(ctx + ": missing array \"image_paths\"");
        }
        for (const auto& element : obj["image_paths"]) {
            if (!element.is_string()) {
                throw ParseError(ctx + ": image_paths entries must be strings");
            }
            record.image_paths.push_back(element.get<std::string>());
        }
        if (!seen.insert(record.class_id).second) {
            throw ParseError(ctx + ": duplicate class id " + std::to_string(record.class_id));
        }
        classes.push_back(std::move(record));
    }
    return classes;
}

}  // namespace pseudoscene::catalog
