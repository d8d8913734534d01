#pragma once

// Shared fixtures and reference implementations for the test suite. The
// reference code here is written independently of the library so the two can
// disagree; tests compare them.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pseudoscene/geometry.hpp"
#include "pseudoscene/image.hpp"
#include "pseudoscene/oracle.hpp"
#include "pseudoscene/pseudolabel.hpp"

namespace testutil {

namespace geo = pseudoscene::geometry;

// mt19937_64 gives portable engine output; fixture draws avoid
// std::uniform_* distributions because those differ across standard
// libraries.
inline std::uint64_t draw(std::mt19937_64& rng, std::uint64_t bound) {
    return rng() % bound;
}

inline double draw_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline geo::BBox random_box(std::mt19937_64& rng, double span = 100.0) {
    geo::BBox box;
    box.x = draw_unit(rng) * span;
    box.y = draw_unit(rng) * span;
    box.w = draw_unit(rng) * span + 0.5;
    box.h = draw_unit(rng) * span + 0.5;
    return box;
}

// Overlap ratio computed via clamped overlap extents rather than corner
// comparisons, as an independent cross-check of the library formula.
inline double reference_iou(const geo::BBox& a, const geo::BBox& b) {
    const double ow = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double oh = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ow * oh;
    if (inter <= 0.0) {
        return 0.0;
    }
    return inter / (a.w * a.h + b.w * b.h - inter);
}

// Greedy suppression transcribed directly from its definition: walk the
// candidates from highest score down (stable order breaks ties toward
// earlier input), keep a candidate when no kept box overlaps it too much.
inline std::vector<std::size_t> reference_nms(const std::vector<geo::ScoredBox>& candidates,
                                              double threshold) {
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].score > candidates[b].score;
    });
    std::vector<std::size_t> kept;
    for (std::size_t candidate : order) {
        bool suppressed = false;
        for (std::size_t keeper : kept) {
            if (reference_iou(candidates[candidate].box, candidates[keeper].box) > threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(candidate);
        }
    }
    return kept;
}

// Single-shot bilinear reference: same sampling convention as the library
// (center-aligned, clamp to edge) but structured around explicit corner
// fetches and long double accumulation.
inline pseudoscene::image::Image reference_resize(const pseudoscene::image::Image& src, int dst_w,
                                                  int dst_h) {
    pseudoscene::image::Image dst;
    dst.width = dst_w;
    dst.height = dst_h;
    dst.rgb.resize(static_cast<std::size_t>(3) * dst_w * dst_h);
    auto fetch = [&](int x, int y, int c) -> long double {
        x = std::clamp(x, 0, src.width - 1);
        y = std::clamp(y, 0, src.height - 1);
        return static_cast<long double>(src.at(x, y, c));
    };
    for (int dy = 0; dy < dst_h; ++dy) {
        for (int dx = 0; dx < dst_w; ++dx) {
            long double sx = (dx + 0.5L) * src.width / dst_w - 0.5L;
            long double sy = (dy + 0.5L) * src.height / dst_h - 0.5L;
            sx = std::clamp(sx, 0.0L, static_cast<long double>(src.width - 1));
            sy = std::clamp(sy, 0.0L, static_cast<long double>(src.height - 1));
            const int x0 = static_cast<int>(sx);
            const int y0 = static_cast<int>(sy);
            const long double fx = sx - x0;
            const long double fy = sy - y0;
            for (int c = 0; c < 3; ++c) {
                const long double value = (1 - fx) * (1 - fy) * fetch(x0, y0, c) +
                                          fx * (1 - fy) * fetch(x0 + 1, y0, c) +
                                          (1 - fx) * fy * fetch(x0, y0 + 1, c) +
                                          fx * fy * fetch(x0 + 1, y0 + 1, c);
                dst.at(dx, dy, c) =
                    static_cast<std::uint8_t>(std::clamp(value + 0.5L, 0.0L, 255.0L));
            }
        }
    }
    return dst;
}

// Oracle backed by an explicit answer table, for scripting exact query
// schedules in tests.
class TabulatedOracle final : public pseudoscene::oracle::Oracle {
public:
    void put(const std::string& key, double confidence, int top_class) {
        table_[key] = pseudoscene::oracle::OracleAnswer{confidence, top_class};
    }

    pseudoscene::oracle::OracleAnswer confidence(
        const pseudoscene::oracle::OracleQuery& query) override {
        auto it = table_.find(query.canonical());
        if (it == table_.end()) {
            throw pseudoscene::OracleError("tabulated oracle has no entry for \"" +
                                           query.canonical() + "\"");
        }
        ++hits_;
        return it->second;
    }

    const std::unordered_map<std::string, pseudoscene::oracle::OracleAnswer>& table() const {
        return table_;
    }
    std::int64_t hits() const { return hits_; }

private:
    std::unordered_map<std::string, pseudoscene::oracle::OracleAnswer> table_;
    std::int64_t hits_ = 0;
};

// A fully tabulated removal experiment over k distinct boxes: every subset of
// removals has a recorded confidence and top class.
struct RemovalExperiment {
    std::int64_t image_id = 0;
    int label = 0;
    int other_label = 0;
    std::vector<geo::BBox> candidates;
    std::map<std::vector<std::size_t>, pseudoscene::oracle::OracleAnswer> by_subset;

    pseudoscene::oracle::OracleAnswer lookup(std::vector<std::size_t> subset) const {
        std::sort(subset.begin(), subset.end());
        return by_subset.at(subset);
    }

    // Materializes the experiment as an oracle answer table keyed by
    // canonical query keys.
    void fill(TabulatedOracle& oracle) const {
        for (const auto& [subset, answer] : by_subset) {
            std::vector<geo::BBox> removed;
            for (std::size_t index : subset) {
                removed.push_back(candidates[index]);
            }
            oracle.put(pseudoscene::oracle::canonical_key(image_id, removed),
                       answer.target_confidence, answer.top_class);
        }
    }
};

// Random experiment generator. Confidence of a subset is a clamped additive
// model plus subset-specific noise; the top class flips away from the label
// once confidence falls under a per-experiment level. Ties in single-box
// drops are injected regularly so ordering rules get exercised.
inline RemovalExperiment random_experiment(std::mt19937_64& rng, int max_candidates = 6) {
    RemovalExperiment exp;
    exp.image_id = 1 + static_cast<std::int64_t>(draw(rng, 50));
    exp.label = 1 + static_cast<int>(draw(rng, 5));
    exp.other_label = exp.label + 1;

    const std::size_t k = 1 + draw(rng, static_cast<std::uint64_t>(max_candidates));
    for (std::size_t i = 0; i < k; ++i) {
        geo::BBox box;
        box.x = 10.0 * static_cast<double>(i) + draw_unit(rng);
        box.y = draw_unit(rng) * 5.0;
        box.w = 1.0 + draw_unit(rng) * 8.0;
        box.h = 1.0 + draw_unit(rng) * 8.0;
        exp.candidates.push_back(box);
    }

    const double baseline = 0.5 + draw_unit(rng) * 0.5;
    std::vector<double> drops(k);
    for (std::size_t i = 0; i < k; ++i) {
        drops[i] = draw_unit(rng) * baseline * 0.6;
        if (i > 0 && draw(rng, 10) < 3) {
            drops[i] = drops[i - 1];
        }
    }
    const double flip_level = draw(rng, 3) == 0 ? -1.0 : draw_unit(rng) * 0.4;

    std::vector<std::size_t> subset;
    const std::size_t subsets = std::size_t{1} << k;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        subset.clear();
        double confidence = baseline;
        for (std::size_t i = 0; i < k; ++i) {
            if (mask & (std::size_t{1} << i)) {
                subset.push_back(i);
                confidence -= drops[i];
            }
        }
        if (subset.size() > 1) {
            confidence -= draw_unit(rng) * 0.02;
        }
        confidence = std::clamp(confidence, 0.0, 1.0);
        pseudoscene::oracle::OracleAnswer answer;
        answer.target_confidence = confidence;
        answer.top_class = confidence < flip_level ? exp.other_label : exp.label;
        exp.by_subset.emplace(subset, answer);
    }
    return exp;
}

enum class LoreStop { Flip, Ratio, Exhausted, Degenerate };

// Direct transcription of the region-removal localization procedure, kept
// intentionally separate from the library implementation: score each
// candidate by its lone-removal confidence drop, then remove in rank order
// until the top class flips or the relative confidence drop crosses the
// threshold.
inline std::pair<std::vector<geo::BBox>, LoreStop> simulate_lore(
    const RemovalExperiment& exp, double reduce_ratio_threshold) {
    const auto baseline = exp.lookup({});
    if (baseline.top_class != exp.label || baseline.target_confidence <= 0.0) {
        return {{}, LoreStop::Degenerate};
    }

    std::vector<std::size_t> rank(exp.candidates.size());
    for (std::size_t i = 0; i < rank.size(); ++i) {
        rank[i] = i;
    }
    std::vector<double> drop(exp.candidates.size());
    for (std::size_t i = 0; i < exp.candidates.size(); ++i) {
        drop[i] = baseline.target_confidence - exp.lookup({i}).target_confidence;
    }
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t a, std::size_t b) { return drop[a] > drop[b]; });

    std::vector<std::size_t> removed_indices;
    std::vector<geo::BBox> removed;
    LoreStop stop = LoreStop::Exhausted;
    for (std::size_t index : rank) {
        removed_indices.push_back(index);
        removed.push_back(exp.candidates[index]);
        const auto answer = exp.lookup(removed_indices);
        if (answer.top_class != exp.label) {
            stop = LoreStop::Flip;
            break;
        }
        if (1.0 - answer.target_confidence / baseline.target_confidence >=
            reduce_ratio_threshold) {
            stop = LoreStop::Ratio;
            break;
        }
    }
    return {removed, stop};
}

inline std::vector<pseudoscene::pseudolabel::DetectionRecord> one_class_detections(
    std::int64_t image_id, const std::vector<std::pair<geo::BBox, double>>& boxes, int cls) {
    std::vector<pseudoscene::pseudolabel::DetectionRecord> records;
    for (const auto& [box, score] : boxes) {
        pseudoscene::pseudolabel::DetectionRecord record;
        record.image_id = image_id;
        record.box = box;
        record.scores.emplace_back(cls, score);
        records.push_back(std::move(record));
    }
    return records;
}

// Unique temp directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        auto pattern = std::filesystem::temp_directory_path() / "pseudoscene-test-XXXXXX";
        std::string buffer = pattern.string();
        if (!mkdtemp(buffer.data())) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = buffer;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace testutil
