#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pseudoscene/common.hpp"
#include "pseudoscene/geometry.hpp"
#include "pseudoscene/oracle.hpp"

namespace pseudoscene::pseudolabel {

enum class Strategy { F, S, D, Dt, Dc, LORE };

inline std::string to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::F: return "F";
        case Strategy::S: return "S";
        case Strategy::D: return "D";
        case Strategy::Dt: return "Dt";
        case Strategy::Dc: return "Dc";
        case Strategy::LORE: return "LORE";
    }
    throw InvalidArgument("unknown strategy value");
}

inline Strategy strategy_from_string(const std::string& token) {
    if (token == "F") return Strategy::F;
    if (token == "S") return Strategy::S;
    if (token == "D") return Strategy::D;
    if (token == "Dt") return Strategy::Dt;
    if (token == "Dc") return Strategy::Dc;
    if (token == "LORE") return Strategy::LORE;
    throw InvalidArgument("unknown strategy token \"" + token + "\"");
}

// One detector proposal. A single proposal may carry scores for several
// classes; a length-1 list is a plain top-1 detection.
struct DetectionRecord {
    std::int64_t image_id = 0;
    geometry::BBox box;
    std::vector<std::pair<int, double>> scores;

    double top_score() const {
        double best = 0.0;
        for (const auto& [cls, prob] : scores) {
            best = std::max(best, prob);
        }
        return best;
    }
};

inline void require_valid(const DetectionRecord& record) {
    geometry::require_valid(record.box, "detection box");
    if (record.scores.empty()) {
        throw InvalidArgument("detection record needs at least one class score");
    }
    std::set<int> seen;
    for (const auto& [cls, prob] : record.scores) {
        if (!(prob >= 0.0 && prob <= 1.0)) {
            throw InvalidArgument("detection score for class " + std::to_string(cls) +
                                  " outside [0,1]");
        }
        if (!seen.insert(cls).second) {
            throw InvalidArgument("detection record repeats class " + std::to_string(cls));
        }
    }
}

struct PseudoAnnotation {
    std::int64_t image_id = 0;
    geometry::BBox box;
    int class_id = 0;
    Strategy strategy = Strategy::F;
    std::optional<double> source_score;

    friend bool operator==(const PseudoAnnotation& a, const PseudoAnnotation& b) {
        return a.image_id == b.image_id && a.box == b.box && a.class_id == b.class_id &&
               a.strategy == b.strategy && a.source_score == b.source_score;
    }
};

struct LoreParams {
    int prefilter_top_k = 300;
    double prefilter_nms_iou = 0.5;
    double prefilter_stop_confidence = 0.1;
    double reduce_ratio_threshold = 0.9;
};

inline void require_valid(const LoreParams& params) {
    if (params.prefilter_top_k < 1) {
        throw InvalidArgument("prefilter_top_k must be at least 1");
    }
    auto ratio_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!ratio_ok(params.prefilter_nms_iou) || !ratio_ok(params.prefilter_stop_confidence) ||
        !ratio_ok(params.reduce_ratio_threshold)) {
        throw InvalidArgument("LORE ratio parameters must lie in [0,1]");
    }
}

struct LoreResult {
    std::vector<PseudoAnnotation> annotations;
    std::optional<std::string> warning;
};

/// Six boxes per image: the whole frame plus five crops at 80% of each side,
// centered and in the four corners. All carry the image label.
inline std::vector<PseudoAnnotation> strategy_fixed(std::int64_t image_id, int width, int height,
                                                    int image_label) {
    const auto boxes = geometry::fixed_location_boxes(width, height);
    std::vector<PseudoAnnotation> out;
    out.reserve(boxes.size());
    for (const auto& box : boxes) {
        PseudoAnnotation a;
        a.image_id = image_id;
        a.box = box;
        a.class_id = image_label;
        a.strategy = Strategy::F;
        out.push_back(a);
    }
    return out;
}

inline std::vector<PseudoAnnotation> strategy_single(std::int64_t image_id, int width, int height,
                                                     int image_label) {
    if (width < 1 || height < 1) {
        throw InvalidArgument("image dimensions must be positive");
    }
    PseudoAnnotation a;
    a.image_id = image_id;
    a.box = geometry::BBox{0.0, 0.0, static_cast<double>(width), static_cast<double>(height)};
    a.class_id = image_label;
    a.strategy = Strategy::S;
    return {a};
}

namespace detail {

inline std::int64_t require_single_image(const std::vector<DetectionRecord>& detections) {
    std::int64_t image_id = detections.empty() ? 0 : detections.front().image_id;
    for (const auto& record : detections) {
        require_valid(record);
        if (record.image_id != image_id) {
            throw InvalidArgument("detections span multiple images (" + std::to_string(image_id) +
                                  " and " + std::to_string(record.image_id) + ")");
        }
    }
    return image_id;
}

// Expands records to per-class scored boxes, drops scores at or below the
// class threshold, and runs per-class NMS. Survivors keep detector classes
// and come back in descending-score visit order.
template <typename ThresholdFn>
std::vector<geometry::ScoredBox> detector_survivors(const std::vector<DetectionRecord>& detections,
                                                    ThresholdFn&& threshold_for, double nms_iou) {
    std::vector<geometry::ScoredBox> expanded;
    for (const auto& record : detections) {
        for (const auto& [cls, prob] : record.scores) {
            if (prob > threshold_for(cls)) {
                expanded.push_back(geometry::ScoredBox{record.box, prob, cls});
            }
        }
    }
    const auto kept = geometry::per_class_nms(expanded, nms_iou);
    std::vector<geometry::ScoredBox> out;
    out.reserve(kept.size());
    for (std::size_t idx : kept) {
        out.push_back(expanded[idx]);
    }
    return out;
}

inline std::vector<PseudoAnnotation> relabel_and_dedup(std::vector<geometry::ScoredBox> survivors,
                                                       std::int64_t image_id, int image_label,
                                                       double nms_iou, Strategy strategy,
                                                       bool dedup) {
    for (auto& s : survivors) {
        s.class_id = image_label;
    }
    std::vector<geometry::ScoredBox> kept_boxes;
    if (dedup) {
        const auto kept = geometry::nms(survivors, nms_iou);
        kept_boxes.reserve(kept.size());
        for (std::size_t idx : kept) {
            kept_boxes.push_back(survivors[idx]);
        }
    } else {
        kept_boxes = std::move(survivors);
    }
    std::vector<PseudoAnnotation> out;
    out.reserve(kept_boxes.size());
    for (const auto& s : kept_boxes) {
        PseudoAnnotation a;
        a.image_id = image_id;
        a.box = s.box;
        a.class_id = image_label;
        a.strategy = strategy;
        a.source_score = s.score;
        out.push_back(a);
    }
    return out;
}

}  // namespace detail

// Trust the detector: strict score cut, then per-class NMS. Labels are the
// detected classes. An image with no surviving score yields no output.
inline std::vector<PseudoAnnotation> strategy_detector(
    const std::vector<DetectionRecord>& detections, double conf_threshold = 0.5,
    double nms_iou = 0.5) {
    const std::int64_t image_id = detail::require_single_image(detections);
    const auto survivors =
        detail::detector_survivors(detections, [&](int) { return conf_threshold; }, nms_iou);
    std::vector<PseudoAnnotation> out;
    out.reserve(survivors.size());
    for (const auto& s : survivors) {
        PseudoAnnotation a;
        a.image_id = image_id;
        a.box = s.box;
        a.class_id = s.class_id;
        a.strategy = Strategy::D;
        a.source_score = s.score;
        out.push_back(a);
    }
    return out;
}

// Detector boxes, image label: run the detector strategy, relabel every kept
// box to the image label, then (by default) dedupe with one class-agnostic
// NMS pass so boxes that survived under different classes collapse.
inline std::vector<PseudoAnnotation> strategy_detector_relabel(
    const std::vector<DetectionRecord>& detections, double conf_threshold, double nms_iou,
    int image_label, bool dedup = true) {
    const std::int64_t image_id = detail::require_single_image(detections);
    auto survivors =
        detail::detector_survivors(detections, [&](int) { return conf_threshold; }, nms_iou);
    return detail::relabel_and_dedup(std::move(survivors), image_id, image_label, nms_iou,
                                     Strategy::Dt, dedup);
}

// Calibrated variant: per-class thresholds instead of one global cut. A score
// for a class missing from the threshold table is an error, not a pass.
inline std::vector<PseudoAnnotation> strategy_calibrated_relabel(
    const std::vector<DetectionRecord>& detections, const std::map<int, double>& thresholds,
    double nms_iou, int image_label, bool dedup = true) {
    const std::int64_t image_id = detail::require_single_image(detections);
    auto threshold_for = [&](int cls) {
        auto it = thresholds.find(cls);
        if (it == thresholds.end()) {
            throw InvalidArgument("no calibrated threshold for class " + std::to_string(cls));
        }
        return it->second;
    };
    auto survivors = detail::detector_survivors(detections, threshold_for, nms_iou);
    return detail::relabel_and_dedup(std::move(survivors), image_id, image_label, nms_iou,
                                     Strategy::Dc, dedup);
}

// Builds the LORE candidate pool: top-k proposals by top-1 score, NMS with
// labels discarded, then cumulative removal in descending score with an
// oracle query after every addition. The pool is the removed set at the
// moment the target confidence first falls below the stop threshold (that
// final box included), or all survivors if it never does.
inline std::vector<geometry::BBox> lore_prefilter(const std::vector<DetectionRecord>& detections,
                                                  oracle::Oracle& oracle, int image_label,
                                                  const LoreParams& params = {}) {
    require_valid(params);
    const std::int64_t image_id = detail::require_single_image(detections);
    if (detections.empty()) {
        return {};
    }

    std::vector<geometry::ScoredBox> pool;
    pool.reserve(detections.size());
    for (const auto& record : detections) {
        pool.push_back(geometry::ScoredBox{record.box, record.top_score(), 0});
    }
    auto order = geometry::detail::score_order(pool);
    if (order.size() > static_cast<std::size_t>(params.prefilter_top_k)) {
        order.resize(static_cast<std::size_t>(params.prefilter_top_k));
    }
    std::vector<geometry::ScoredBox> top;
    top.reserve(order.size());
    for (std::size_t idx : order) {
        top.push_back(pool[idx]);
    }

    const auto kept = geometry::nms(top, params.prefilter_nms_iou);
    std::vector<geometry::BBox> removed;
    removed.reserve(kept.size());
    for (std::size_t idx : kept) {
        removed.push_back(top[idx].box);
        oracle::OracleQuery query;
        query.image_id = image_id;
        query.removed_boxes = removed;
        query.target_class = image_label;
        const auto answer = oracle.confidence(query);
        if (answer.target_confidence < params.prefilter_stop_confidence) {
            break;
        }
    }
    return removed;
}

// Ranks candidates by how much removing each alone drops the target
// confidence, then removes them cumulatively in that order until the top
// class flips away from the image label or the confidence-reducing ratio
// (1 - conf/baseline) reaches the threshold. Removed boxes become the
// annotations. A pool that is empty, or an image the classifier already gets
// wrong, yields no annotations and a warning instead.
inline LoreResult lore_localize(std::int64_t image_id,
                                const std::vector<geometry::BBox>& candidates,
                                oracle::Oracle& oracle, int image_label,
                                const LoreParams& params = {}) {
    require_valid(params);
    LoreResult result;
    if (candidates.empty()) {
        result.warning = "empty candidate pool for image " + std::to_string(image_id);
        return result;
    }

    oracle::OracleQuery baseline_query;
    baseline_query.image_id = image_id;
    baseline_query.target_class = image_label;
    const auto baseline = oracle.confidence(baseline_query);
    if (baseline.top_class != image_label) {
        result.warning = "classifier misses label " + std::to_string(image_label) +
                         " on unmodified image " + std::to_string(image_id);
        return result;
    }
    if (!(baseline.target_confidence > 0.0)) {
        result.warning = "baseline confidence is zero for image " + std::to_string(image_id);
        return result;
    }

    struct Ranked {
        std::size_t index;
        double drop;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        oracle::OracleQuery query;
        query.image_id = image_id;
        query.removed_boxes = {candidates[i]};
        query.target_class = image_label;
        const auto answer = oracle.confidence(query);
        ranked.push_back(Ranked{i, baseline.target_confidence - answer.target_confidence});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.drop != b.drop) {
            return a.drop > b.drop;
        }
        return a.index < b.index;
    });

    std::vector<geometry::BBox> removed;
    removed.reserve(ranked.size());
    for (const auto& r : ranked) {
        removed.push_back(candidates[r.index]);
        oracle::OracleQuery query;
        query.image_id = image_id;
        query.removed_boxes = removed;
        query.target_class = image_label;
        const auto answer = oracle.confidence(query);
        const double ratio = 1.0 - answer.target_confidence / baseline.target_confidence;
        if (answer.top_class != image_label || ratio >= params.reduce_ratio_threshold) {
            break;
        }
    }

    result.annotations.reserve(removed.size());
    for (const auto& box : removed) {
        PseudoAnnotation a;
        a.image_id = image_id;
        a.box = box;
        a.class_id = image_label;
        a.strategy = Strategy::LORE;
        result.annotations.push_back(a);
    }
    return result;
}

inline LoreResult lore(const std::vector<DetectionRecord>& detections, oracle::Oracle& oracle,
                       int image_label, const LoreParams& params = {}) {
    const std::int64_t image_id = detail::require_single_image(detections);
    if (detections.empty()) {
        LoreResult result;
        result.warning = "no detections, so no candidate pool";
        return result;
    }
    const auto pool = lore_prefilter(detections, oracle, image_label, params);
    return lore_localize(image_id, pool, oracle, image_label, params);
}

}  // namespace pseudoscene::pseudolabel
