#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <vector>

#include "pseudoscene/common.hpp"

namespace pseudoscene::geometry {

/// Axis-aligned box in XYWH pixel coordinates (the COCO "bbox" convention).
/// Every operation in this library stores and passes boxes in this single
/// convention; corner form exists only transiently inside iou().
struct BBox {
    double x = 0.0; // left edge
    double y = 0.0; // top edge
    double w = 0.0;
    double h = 0.0;

    double x2() const { return x + w; }
    double y2() const { return y + h; }
    double area() const { return w * h; }

    bool valid() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
               std::isfinite(h) && w > 0.0 && h > 0.0;
    }

    friend bool operator==(const BBox& a, const BBox& b) {
        return a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h;
    }
    /// Lexicographic (x, y, w, h); also the canonical ordering for box sets.
    friend bool operator<(const BBox& a, const BBox& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        if (a.w != b.w) return a.w < b.w;
        return a.h < b.h;
    }
};

struct ScoredBox {
    BBox box;
    double score = 0.0; // in [0, 1]
    int class_id = 0;
};

inline void require_valid(const BBox& b, const char* who) {
    if (!b.valid()) {
        std::ostringstream os;
        os << who << ": invalid box (" << b.x << "," << b.y << "," << b.w << ","
           << b.h << "); width and height must be positive and finite";
        throw InvalidArgument(os.str());
    }
}

/// Intersection-over-union of two valid boxes. Symmetric, exactly 1 for
/// identical boxes (areas are derived from the same corner coordinates as the
/// intersection, so a self-overlap cancels exactly), 0 when disjoint.
inline double iou(const BBox& a, const BBox& b) {
    require_valid(a, "iou");
    require_valid(b, "iou");
    const double ax2 = a.x2(), ay2 = a.y2();
    const double bx2 = b.x2(), by2 = b.y2();
    const double iw = std::min(ax2, bx2) - std::max(a.x, b.x);
    const double ih = std::min(ay2, by2) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double area_a = (ax2 - a.x) * (ay2 - a.y);
    const double area_b = (bx2 - b.x) * (by2 - b.y);
    return inter / (area_a + area_b - inter);
}

namespace detail {

// Candidate visit order: descending score, ties by lower input index.
inline std::vector<std::size_t> score_order(const std::vector<ScoredBox>& c) {
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (c[i].score != c[j].score) return c[i].score > c[j].score;
        return i < j;
    });
    return order;
}

inline void check_nms_inputs(const std::vector<ScoredBox>& candidates,
                             double iou_threshold) {
    if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
        throw InvalidArgument("nms: iou threshold must lie in [0, 1]");
    }
    for (const ScoredBox& c : candidates) {
        require_valid(c.box, "nms");
        if (!std::isfinite(c.score)) {
            throw InvalidArgument("nms: scores must be finite");
        }
    }
}

} // namespace detail

/// Greedy non-maximum suppression. Candidates are visited in descending score
/// order (equal scores break toward the lower input index); a candidate is
/// kept iff its IoU with every previously kept candidate is <= iou_threshold.
/// Returns kept input indices in visit order.
inline std::vector<std::size_t> nms(const std::vector<ScoredBox>& candidates,
                                    double iou_threshold) {
    detail::check_nms_inputs(candidates, iou_threshold);
    std::vector<std::size_t> kept;
    for (std::size_t i : detail::score_order(candidates)) {
        bool keep = true;
        for (std::size_t k : kept) {
            if (iou(candidates[i].box, candidates[k].box) > iou_threshold) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(i);
    }
    return kept;
}

/// NMS run independently within each class_id partition; boxes of different
/// classes never suppress each other. The union of kept indices is returned
/// in global (score desc, input index asc) order.
inline std::vector<std::size_t>
per_class_nms(const std::vector<ScoredBox>& candidates, double iou_threshold) {
    detail::check_nms_inputs(candidates, iou_threshold);
    std::vector<std::size_t> kept;
    for (std::size_t i : detail::score_order(candidates)) {
        bool keep = true;
        for (std::size_t k : kept) {
            if (candidates[k].class_id != candidates[i].class_id) continue;
            if (iou(candidates[i].box, candidates[k].box) > iou_threshold) {
                keep = false;
                break;
            }
        }
        if (keep) kept.push_back(i);
    }
    return kept;
}

namespace detail {
inline double round_half_up(double v) { return std::floor(v + 0.5); }
} // namespace detail

/// The six fixed pseudo-label locations for an image: the whole image, a
/// centered crop, and four corner crops. Crops are 80% of the image per side,
/// rounded half-up to whole pixels and clamped to the image.
/// Order: whole, center, top-left, top-right, bottom-left, bottom-right.
inline std::array<BBox, 6> fixed_location_boxes(int width, int height) {
    if (width < 5 || height < 5) {
        std::ostringstream os;
        os << "fixed_location_boxes: degenerate dimensions " << width << "x"
           << height << "; both sides must be >= 5";
        throw InvalidArgument(os.str());
    }
    const double w = width, h = height;
    const double cw = std::min(detail::round_half_up(0.8 * w), w);
    const double ch = std::min(detail::round_half_up(0.8 * h), h);
    const double rx = w - cw; // rightmost crop offset
    const double by = h - ch; // bottommost crop offset
    return {BBox{0.0, 0.0, w, h},
            BBox{rx / 2.0, by / 2.0, cw, ch},
            BBox{0.0, 0.0, cw, ch},
            BBox{rx, 0.0, cw, ch},
            BBox{0.0, by, cw, ch},
            BBox{rx, by, cw, ch}};
}

/// Map a box from source-image coordinates into a mosaic cell: scale by
/// (cell_w/src_w, cell_h/src_h), then translate by the cell origin
/// (cell_col*cell_w, cell_row*cell_h). The result stays inside its cell.
inline BBox transform_to_cell(const BBox& box, int cell_row, int cell_col,
                              int cell_w, int cell_h, int src_w, int src_h) {
    require_valid(box, "transform_to_cell");
    if (cell_row < 0 || cell_col < 0 || cell_w <= 0 || cell_h <= 0 ||
        src_w <= 0 || src_h <= 0) {
        throw InvalidArgument("transform_to_cell: non-positive cell or source "
                              "dimensions, or negative cell index");
    }
    if (box.x < 0.0 || box.y < 0.0 || box.x2() > static_cast<double>(src_w) ||
        box.y2() > static_cast<double>(src_h)) {
        std::ostringstream os;
        os << "transform_to_cell: source box (" << box.x << "," << box.y << ","
           << box.w << "," << box.h << ") exceeds source bounds " << src_w
           << "x" << src_h;
        throw InvalidArgument(os.str());
    }
    const double sx = static_cast<double>(cell_w) / src_w;
    const double sy = static_cast<double>(cell_h) / src_h;
    return BBox{box.x * sx + static_cast<double>(cell_col) * cell_w,
                box.y * sy + static_cast<double>(cell_row) * cell_h,
                box.w * sx, box.h * sy};
}

} // namespace pseudoscene::geometry
