#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudoscene/buckets.hpp"
#include "pseudoscene/common.hpp"
#include "pseudoscene/geometry.hpp"
#include "pseudoscene/pseudolabel.hpp"

namespace pseudoscene::dataset_io {

using nlohmann::json;

// COCO-style dataset containers. Fields the toolkit understands are typed;
// anything else a file carries lands in `extra` and survives a round trip.

struct CocoImage {
    std::int64_t id = 0;
    std::string file_name;
    int width = 0;
    int height = 0;
    json extra = json::object();
};

struct CocoAnnotation {
    std::int64_t id = 0;
    std::int64_t image_id = 0;
    int category_id = 0;
    geometry::BBox bbox;
    double area = 0.0;
    std::optional<int> iscrowd;
    std::optional<std::string> strategy;
    std::optional<double> source_score;
    json extra = json::object();
};

struct CocoCategory {
    int id = 0;
    std::string name;
    std::optional<std::string> synset;
    std::optional<std::int64_t> image_count;
    std::optional<std::int64_t> instance_count;
    json extra = json::object();
};

struct CocoDataset {
    std::vector<CocoImage> images;
    std::vector<CocoAnnotation> annotations;
    std::vector<CocoCategory> categories;
    json extra = json::object();
};

namespace detail {

inline double require_number(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field) || !obj[field].is_number()) {
        throw ParseError(where + ": missing or non-numeric field \"" + field + "\"");
    }
    return obj[field].get<double>();
}

inline std::int64_t require_int(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field) || !obj[field].is_number_integer()) {
        throw ParseError(where + ": missing or non-integer field \"" + field + "\"");
    }
    return obj[field].get<std::int64_t>();
}

inline std::string require_string(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field) || !obj[field].is_string()) {
        throw ParseError(where + ": missing or non-string field \"" + field + "\"");
    }
    return obj[field].get<std::string>();
}

inline geometry::BBox require_bbox(const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field) || !obj[field].is_array() || obj[field].size() != 4) {
        throw ParseError(where + ": field \"" + field + "\" must be [x, y, w, h]");
    }
    geometry::BBox box;
    double* coords[4] = {&box.x, &box.y, &box.w, &box.h};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!obj[field][i].is_number()) {
            throw ParseError(where + ": bbox element " + std::to_string(i) + " is not a number");
        }
        *coords[i] = obj[field][i].get<double>();
    }
    return box;
}

inline json collect_extra(const json& obj, std::initializer_list<const char*> known) {
    json extra = json::object();
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end()) {
            extra[key] = value;
        }
    }
    return extra;
}

}  // namespace detail

inline CocoDataset dataset_from_json(const json& root, const std::string& where) {
    if (!root.is_object()) {
        throw ParseError(where + ": top level must be a JSON object");
    }
    for (const char* key : {"images", "annotations", "categories"}) {
        if (!root.contains(key) || !root[key].is_array()) {
            throw ParseError(where + ": missing array \"" + std::string(key) + "\"");
        }
    }

    CocoDataset dataset;
    dataset.extra = detail::collect_extra(root, {"images", "annotations", "categories"});

    std::unordered_set<std::int64_t> image_ids;
    for (std::size_t i = 0; i < root["images"].size(); ++i) {
        const json& obj = root["images"][i];
        const std::string ctx = where + ": images[" + std::to_string(i) + "]";
        if (!obj.is_object()) {
            throw ParseError(ctx + " is not an object");
        }
        CocoImage image;
        image.id = detail::require_int(obj, "id", ctx);
        image.file_name = detail::require_string(obj, "file_name", ctx);
        image.width = static_cast<int>(detail::require_int(obj, "width", ctx));
        image.height = static_cast<int>(detail::require_int(obj, "height", ctx));
        image.extra = detail::collect_extra(obj, {"id", "file_name", "width", "height"});
        if (!image_ids.insert(image.id).second) {
            throw ParseError(ctx + ": duplicate image id " + std::to_string(image.id));
        }
        dataset.images.push_back(std::move(image));
    }

    std::unordered_set<int> category_ids;
    for (std::size_t i = 0; i < root["categories"].size(); ++i) {
        const json& obj = root["categories"][i];
        const std::string ctx = where + ": categories[" + std::to_string(i) + "]";
        if (!obj.is_object()) {
            throw ParseError(ctx + " is not an object");
        }
        CocoCategory category;
        category.id = static_cast<int>(detail::require_int(obj, "id", ctx));
        category.name = detail::require_string(obj, "name", ctx);
        if (obj.contains("synset")) {
            category.synset = detail::require_string(obj, "synset", ctx);
        }
        if (obj.contains("image_count")) {
            category.image_count = detail::require_int(obj, "image_count", ctx);
        }
        if (obj.contains("instance_count")) {
            category.instance_count = detail::require_int(obj, "instance_count", ctx);
        }
        category.extra = detail::collect_extra(
            obj, {"id", "name", "synset", "image_count", "instance_count"});
        if (!category_ids.insert(category.id).second) {
            throw ParseError(ctx + ": duplicate category id " + std::to_string(category.id));
        }
        dataset.categories.push_back(std::move(category));
    }

    std::unordered_set<std::int64_t> annotation_ids;
    for (std::size_t i = 0; i < root["annotations"].size(); ++i) {
        const json& obj = root["annotations"][i];
        const std::string ctx = where + ": annotations[" + std::to_string(i) + "]";
        if (!obj.is_object()) {
            throw ParseError(ctx + " is not an object");
        }
        CocoAnnotation annotation;
        annotation.id = detail::require_int(obj, "id", ctx);
        annotation.image_id = detail::require_int(obj, "image_id", ctx);
        annotation.category_id = static_cast<int>(detail::require_int(obj, "category_id", ctx));
        annotation.bbox = detail::require_bbox(obj, "bbox", ctx);
        annotation.area = obj.contains("area") ? detail::require_number(obj, "area", ctx)
                                               : annotation.bbox.w * annotation.bbox.h;
        if (obj.contains("iscrowd")) {
            annotation.iscrowd = static_cast<int>(detail::require_int(obj, "iscrowd", ctx));
        }
        if (obj.contains("strategy")) {
            annotation.strategy = detail::require_string(obj, "strategy", ctx);
        }
        if (obj.contains("source_score")) {
            annotation.source_score = detail::require_number(obj, "source_score", ctx);
        }
        annotation.extra = detail::collect_extra(
            obj, {"id", "image_id", "category_id", "bbox", "area", "iscrowd", "strategy",
                  "source_score"});
        if (!annotation_ids.insert(annotation.id).second) {
            throw ParseError(ctx + ": duplicate annotation id " + std::to_string(annotation.id));
        }
        if (image_ids.find(annotation.image_id) == image_ids.end()) {
            throw ParseError(ctx + ": annotation " + std::to_string(annotation.id) +
                             " references missing image " + std::to_string(annotation.image_id));
        }
        if (category_ids.find(annotation.category_id) == category_ids.end()) {
            throw ParseError(ctx + ": annotation " + std::to_string(annotation.id) +
                             " references missing category " +
                             std::to_string(annotation.category_id));
        }
        dataset.annotations.push_back(std::move(annotation));
    }

    return dataset;
}

inline CocoDataset parse_coco(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open dataset: " + path);
    }
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return dataset_from_json(root, path);
}

// Serialization is canonical: collections sorted by id, keys emitted in
// sorted order, so equal datasets always produce identical bytes.
inline json dataset_to_json(const CocoDataset& dataset) {
    json root = dataset.extra.is_object() ? dataset.extra : json::object();

    std::vector<const CocoImage*> images;
    images.reserve(dataset.images.size());
    for (const auto& image : dataset.images) {
        images.push_back(&image);
    }
    std::sort(images.begin(), images.end(),
              [](const CocoImage* a, const CocoImage* b) { return a->id < b->id; });
    root["images"] = json::array();
    for (const CocoImage* image : images) {
        json obj = image->extra.is_object() ? image->extra : json::object();
        obj["id"] = image->id;
        obj["file_name"] = image->file_name;
        obj["width"] = image->width;
        obj["height"] = image->height;
        root["images"].push_back(std::move(obj));
    }

    std::vector<const CocoAnnotation*> annotations;
    annotations.reserve(dataset.annotations.size());
    for (const auto& annotation : dataset.annotations) {
        annotations.push_back(&annotation);
    }
    std::sort(annotations.begin(), annotations.end(),
              [](const CocoAnnotation* a, const CocoAnnotation* b) { return a->id < b->id; });
    root["annotations"] = json::array();
    for (const CocoAnnotation* annotation : annotations) {
        json obj = annotation->extra.is_object() ? annotation->extra : json::object();
        obj["id"] = annotation->id;
        obj["image_id"] = annotation->image_id;
        obj["category_id"] = annotation->category_id;
        obj["bbox"] = {annotation->bbox.x, annotation->bbox.y, annotation->bbox.w,
                       annotation->bbox.h};
        obj["area"] = annotation->area;
        if (annotation->iscrowd) {
            obj["iscrowd"] = *annotation->iscrowd;
        }
        if (annotation->strategy) {
            obj["strategy"] = *annotation->strategy;
        }
        if (annotation->source_score) {
            obj["source_score"] = *annotation->source_score;
        }
        root["annotations"].push_back(std::move(obj));
    }

    std::vector<const CocoCategory*> categories;
    categories.reserve(dataset.categories.size());
    for (const auto& category : dataset.categories) {
        categories.push_back(&category);
    }
    std::sort(categories.begin(), categories.end(),
              [](const CocoCategory* a, const CocoCategory* b) { return a->id < b->id; });
    root["categories"] = json::array();
    for (const CocoCategory* category : categories) {
        json obj = category->extra.is_object() ? category->extra : json::object();
        obj["id"] = category->id;
        obj["name"] = category->name;
        if (category->synset) {
            obj["synset"] = *category->synset;
        }
        if (category->image_count) {
            obj["image_count"] = *category->image_count;
        }
        if (category->instance_count) {
            obj["instance_count"] = *category->instance_count;
        }
        root["categories"].push_back(std::move(obj));
    }

    return root;
}

inline void write_json_file(const json& value, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << value.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

inline void emit_coco(const CocoDataset& dataset, const std::string& path) {
    write_json_file(dataset_to_json(dataset), path);
}

// COCO results format: a JSON array of {image_id, category_id, bbox, score}.
// Rows sharing an image and an identical box merge into one record carrying
// all their class scores; a repeated (image, box, class) row is an error.
inline std::map<std::int64_t, std::vector<pseudolabel::DetectionRecord>> parse_detections(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open detections: " + path);
    }
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!root.is_array()) {
        throw ParseError(path + ": detections must be a JSON array");
    }

    std::map<std::int64_t, std::vector<pseudolabel::DetectionRecord>> grouped;
    std::map<std::int64_t, std::map<geometry::BBox, std::size_t>> record_index;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& obj = root[i];
        const std::string ctx = path + ": detections[" + std::to_string(i) + "]";
        if (!obj.is_object()) {
            throw ParseError(ctx + " is not an object");
        }
        const std::int64_t image_id = detail::require_int(obj, "image_id", ctx);
        const int category_id = static_cast<int>(detail::require_int(obj, "category_id", ctx));
        const geometry::BBox box = detail::require_bbox(obj, "bbox", ctx);
        const double score = detail::require_number(obj, "score", ctx);
        if (!(score >= 0.0 && score <= 1.0)) {
            throw ParseError(ctx + ": score " + std::to_string(score) + " outside [0,1]");
        }
        if (!(box.w > 0.0 && box.h > 0.0)) {
            throw ParseError(ctx + ": bbox dimensions must be positive");
        }

        auto& records = grouped[image_id];
        auto& index = record_index[image_id];
        auto it = index.find(box);
        if (it == index.end()) {
            pseudolabel::DetectionRecord record;
            record.image_id = image_id;
            record.box = box;
            record.scores.emplace_back(category_id, score);
            index.emplace(box, records.size());
            records.push_back(std::move(record));
        } else {
            auto& record = records[it->second];
            for (const auto& [cls, prob] : record.scores) {
                if (cls == category_id) {
                    throw ParseError(ctx + ": duplicate (image, bbox, category) row for class " +
                                     std::to_string(category_id));
                }
            }
            record.scores.emplace_back(category_id, score);
        }
    }
    return grouped;
}

// Validation report. Fatal findings are structural breaks (duplicate ids,
// dangling references, degenerate boxes); warnings are quality flags
// (out-of-bounds boxes, stale area fields).

struct Finding {
    bool fatal = false;
    std::string code;
    std::string message;
};

struct BucketSummary {
    std::int64_t categories_total = 0;
    std::int64_t zero_image_categories = 0;
    std::int64_t rare = 0;
    std::int64_t common = 0;
    std::int64_t frequent = 0;
};

struct ValidationReport {
    std::vector<Finding> findings;
    BucketSummary buckets;
    std::int64_t image_count = 0;
    std::int64_t annotation_count = 0;

    std::int64_t fatal_count() const {
        std::int64_t n = 0;
        for (const auto& f : findings) {
            n += f.fatal ? 1 : 0;
        }
        return n;
    }
    std::int64_t warning_count() const {
        return static_cast<std::int64_t>(findings.size()) - fatal_count();
    }
};

inline ValidationReport validate_dataset(const CocoDataset& dataset) {
    ValidationReport report;
    report.image_count = static_cast<std::int64_t>(dataset.images.size());
    report.annotation_count = static_cast<std::int64_t>(dataset.annotations.size());
    auto add = [&](bool fatal, std::string code, std::string message) {
        report.findings.push_back(Finding{fatal, std::move(code), std::move(message)});
    };

    std::unordered_map<std::int64_t, const CocoImage*> images_by_id;
    for (const auto& image : dataset.images) {
        if (!images_by_id.emplace(image.id, &image).second) {
            add(true, "duplicate_image_id", "image id " + std::to_string(image.id) + " repeats");
        }
        if (image.width < 1 || image.height < 1) {
            add(true, "degenerate_image",
                "image " + std::to_string(image.id) + " has non-positive dimensions");
        }
    }
    std::unordered_set<int> category_ids;
    for (const auto& category : dataset.categories) {
        if (!category_ids.insert(category.id).second) {
            add(true, "duplicate_category_id",
                "category id " + std::to_string(category.id) + " repeats");
        }
    }

    std::unordered_set<std::int64_t> annotation_ids;
    std::unordered_map<int, std::unordered_set<std::int64_t>> category_images;
    for (const auto& annotation : dataset.annotations) {
        const std::string who = "annotation " + std::to_string(annotation.id);
        if (!annotation_ids.insert(annotation.id).second) {
            add(true, "duplicate_annotation_id", who + " repeats its id");
        }
        auto image_it = images_by_id.find(annotation.image_id);
        if (image_it == images_by_id.end()) {
            add(true, "dangling_image_ref",
                who + " references missing image " + std::to_string(annotation.image_id));
        }
        if (category_ids.find(annotation.category_id) == category_ids.end()) {
            add(true, "dangling_category_ref",
                who + " references missing category " + std::to_string(annotation.category_id));
        } else {
            category_images[annotation.category_id].insert(annotation.image_id);
        }

        const auto& box = annotation.bbox;
        if (!(box.w > 0.0 && box.h > 0.0)) {
            add(true, "degenerate_bbox", who + " has non-positive bbox dimensions");
            continue;
        }
        if (image_it != images_by_id.end()) {
            const CocoImage& image = *image_it->second;
            if (box.x < 0.0 || box.y < 0.0 || box.x2() > image.width || box.y2() > image.height) {
                add(false, "bbox_out_of_bounds",
                    who + " extends past image " + std::to_string(image.id));
            }
        }
        const double expected = box.w * box.h;
        if (std::abs(annotation.area - expected) > 1e-6 * std::max(1.0, expected)) {
            add(false, "area_mismatch", who + " area field disagrees with bbox dimensions");
        }
    }

    report.buckets.categories_total = static_cast<std::int64_t>(dataset.categories.size());
    for (const auto& category : dataset.categories) {
        auto it = category_images.find(category.id);
        const std::int64_t count =
            it == category_images.end() ? 0 : static_cast<std::int64_t>(it->second.size());
        if (count == 0) {
            ++report.buckets.zero_image_categories;
        }
        switch (catalog::bucket_of(count)) {
            case catalog::Bucket::Rare: ++report.buckets.rare; break;
            case catalog::Bucket::Common: ++report.buckets.common; break;
            case catalog::Bucket::Frequent: ++report.buckets.frequent; break;
        }
    }
    return report;
}

inline json report_to_json(const ValidationReport& report) {
    json root;
    root["image_count"] = report.image_count;
    root["annotation_count"] = report.annotation_count;
    root["fatal_count"] = report.fatal_count();
    root["warning_count"] = report.warning_count();
    root["findings"] = json::array();
    for (const auto& finding : report.findings) {
        json obj;
        obj["severity"] = finding.fatal ? "fatal" : "warning";
        obj["code"] = finding.code;
        obj["message"] = finding.message;
        root["findings"].push_back(std::move(obj));
    }
    json buckets;
    buckets["categories_total"] = report.buckets.categories_total;
    buckets["zero_image_categories"] = report.buckets.zero_image_categories;
    buckets["rare"] = report.buckets.rare;
    buckets["common"] = report.buckets.common;
    buckets["frequent"] = report.buckets.frequent;
    root["buckets"] = std::move(buckets);
    return root;
}

}  // namespace pseudoscene::dataset_io
