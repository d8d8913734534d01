#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudoscene/common.hpp"
#include "pseudoscene/geometry.hpp"
#include "pseudoscene/image.hpp"
#include "pseudoscene/pseudolabel.hpp"
#include "pseudoscene/rng.hpp"

namespace pseudoscene::mosaic {

using nlohmann::json;

enum class Grid { TwoByTwo = 2, ThreeByThree = 3 };

inline int dimension(Grid grid) { return static_cast<int>(grid); }

inline std::string to_string(Grid grid) {
    return grid == Grid::TwoByTwo ? "2x2" : "3x3";
}

inline Grid grid_from_string(const std::string& token) {
    if (token == "2x2") return Grid::TwoByTwo;
    if (token == "3x3") return Grid::ThreeByThree;
    throw InvalidArgument("unknown grid \"" + token + "\" (expected 2x2 or 3x3)");
}

enum class SamplingMode { SameClass, Hybrid };

inline std::string to_string(SamplingMode mode) {
    return mode == SamplingMode::SameClass ? "same_class" : "hybrid";
}

inline SamplingMode sampling_mode_from_string(const std::string& token) {
    if (token == "same_class") return SamplingMode::SameClass;
    if (token == "hybrid") return SamplingMode::Hybrid;
    throw InvalidArgument("unknown sampling mode \"" + token +
                          "\" (expected same_class or hybrid)");
}

struct PoolImage {
    std::int64_t image_id = 0;
    int class_id = 0;
};

struct MosaicPlan {
    std::int64_t mosaic_id = 0;
    Grid grid = Grid::TwoByTwo;
    int cell_w = 512;
    int cell_h = 512;
    std::vector<std::int64_t> cells;  // row-major source image ids
    SamplingMode sampling_mode = SamplingMode::SameClass;
    std::uint64_t seed = 0;
};

inline void require_valid(const MosaicPlan& plan) {
    const int dim = dimension(plan.grid);
    if (plan.cells.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim)) {
        throw InvalidArgument("plan " + std::to_string(plan.mosaic_id) + " needs " +
                              std::to_string(dim * dim) + " cells, has " +
                              std::to_string(plan.cells.size()));
    }
    if (plan.cell_w < 32 || plan.cell_h < 32) {
        throw InvalidArgument("plan " + std::to_string(plan.mosaic_id) +
                              " cell size must be at least 32 pixels");
    }
}

// Draws `count` plans from the pool, sampling cells with replacement. Each
// plan gets its own derived RNG stream, so plan i is reproducible from
// (seed, i) alone and the recorded per-plan seed. Same-class mode first
// draws a class uniformly over the classes present (ordered by first
// appearance in the pool), then draws that class's images; hybrid draws
// uniformly over the whole pool.
inline std::vector<MosaicPlan> plan_mosaics(const std::vector<PoolImage>& pool, Grid grid,
                                            SamplingMode mode, std::int64_t count,
                                            std::uint64_t seed, int cell_w = 512, int cell_h = 512,
                                            std::int64_t first_mosaic_id = 1) {
    if (pool.empty()) {
        throw InvalidArgument("mosaic planning needs a non-empty image pool");
    }
    if (count < 0) {
        throw InvalidArgument("mosaic count must be non-negative");
    }
    if (cell_w < 32 || cell_h < 32) {
        throw InvalidArgument("cell size must be at least 32 pixels");
    }

    std::vector<int> class_order;
    std::unordered_map<int, std::vector<std::int64_t>> by_class;
    for (const auto& entry : pool) {
        auto [it, inserted] = by_class.try_emplace(entry.class_id);
        if (inserted) {
            class_order.push_back(entry.class_id);
        }
        it->second.push_back(entry.image_id);
    }

    const int cells_per_plan = dimension(grid) * dimension(grid);
    std::vector<MosaicPlan> plans;
    plans.reserve(static_cast<std::size_t>(count));
    for (std::int64_t index = 0; index < count; ++index) {
        auto stream = rng::stream_for(seed, static_cast<std::uint64_t>(index));
        MosaicPlan plan;
        plan.mosaic_id = first_mosaic_id + index;
        plan.grid = grid;
        plan.cell_w = cell_w;
        plan.cell_h = cell_h;
        plan.sampling_mode = mode;
        plan.seed = stream.state;
        plan.cells.reserve(static_cast<std::size_t>(cells_per_plan));
        if (mode == SamplingMode::SameClass) {
            const int cls = class_order[stream.next_below(class_order.size())];
            const auto& images = by_class[cls];
            for (int c = 0; c < cells_per_plan; ++c) {
                plan.cells.push_back(images[stream.next_below(images.size())]);
            }
        } else {
            for (int c = 0; c < cells_per_plan; ++c) {
                plan.cells.push_back(pool[stream.next_below(pool.size())].image_id);
            }
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

inline json plan_to_json(const MosaicPlan& plan) {
    json obj;
    obj["mosaic_id"] = plan.mosaic_id;
    obj["grid"] = to_string(plan.grid);
    obj["cell_w"] = plan.cell_w;
    obj["cell_h"] = plan.cell_h;
    obj["cells"] = plan.cells;
    obj["sampling_mode"] = to_string(plan.sampling_mode);
    obj["seed"] = plan.seed;
    return obj;
}

inline json plans_to_json(const std::vector<MosaicPlan>& plans) {
    json root = json::array();
    for (const auto& plan : plans) {
        root.push_back(plan_to_json(plan));
    }
    return root;
}

inline MosaicPlan plan_from_json(const json& obj, const std::string& where) {
    if (!obj.is_object()) {
        throw ParseError(where + " is not an object");
    }
    for (const char* field : {"mosaic_id", "grid", "cell_w", "cell_h", "cells", "sampling_mode",
                              "seed"}) {
        if (!obj.contains(field)) {
            throw ParseError(where + ": missing field \"" + std::string(field) + "\"");
        }
    }
    MosaicPlan plan;
    plan.mosaic_id = obj["mosaic_id"].get<std::int64_t>();
    plan.grid = grid_from_string(obj["grid"].get<std::string>());
    plan.cell_w = obj["cell_w"].get<int>();
    plan.cell_h = obj["cell_h"].get<int>();
    if (!obj["cells"].is_array()) {
        throw ParseError(where + ": \"cells\" must be an array");
    }
    for (const auto& cell : obj["cells"]) {
        plan.cells.push_back(cell.get<std::int64_t>());
    }
    plan.sampling_mode = sampling_mode_from_string(obj["sampling_mode"].get<std::string>());
    plan.seed = obj["seed"].get<std::uint64_t>();
    require_valid(plan);
    return plan;
}

inline std::vector<MosaicPlan> plans_from_json(const json& root) {
    if (!root.is_array()) {
        throw ParseError("plan manifest must be a JSON array");
    }
    std::vector<MosaicPlan> plans;
    plans.reserve(root.size());
    for (std::size_t i = 0; i < root.size(); ++i) {
        plans.push_back(plan_from_json(root[i], "plans[" + std::to_string(i) + "]"));
    }
    return plans;
}

struct CompositeImage {
    std::int64_t mosaic_id = 0;
    image::Image image;
};

// Concatenates the cell images row-major, each resized (non-aspect-
// preserving, bilinear) to the cell size. No blending and no padding, so
// seams between cells stay sharp.
inline CompositeImage compose(const MosaicPlan& plan, const image::ImageLoader& loader) {
    require_valid(plan);
    const int dim = dimension(plan.grid);
    CompositeImage composite;
    composite.mosaic_id = plan.mosaic_id;
    composite.image.width = dim * plan.cell_w;
    composite.image.height = dim * plan.cell_h;
    composite.image.rgb.assign(static_cast<std::size_t>(3) * composite.image.width *
                                   composite.image.height,
                               0);
    for (int row = 0; row < dim; ++row) {
        for (int col = 0; col < dim; ++col) {
            const std::int64_t source_id = plan.cells[static_cast<std::size_t>(row) * dim + col];
            image::Image cell;
            try {
                cell = image::bilinear_resize(loader.load(source_id), plan.cell_w, plan.cell_h);
            } catch (const Error& e) {
                throw IoError("plan " + std::to_string(plan.mosaic_id) + " cell (" +
                              std::to_string(row) + "," + std::to_string(col) + "), image " +
                              std::to_string(source_id) + ": " + e.what());
            }
            const int x0 = col * plan.cell_w;
            const int y0 = row * plan.cell_h;
            for (int y = 0; y < plan.cell_h; ++y) {
                for (int x = 0; x < plan.cell_w; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        composite.image.at(x0 + x, y0 + y, c) = cell.at(x, y, c);
                    }
                }
            }
        }
    }
    return composite;
}

struct RemapResult {
    std::vector<pseudolabel::PseudoAnnotation> annotations;
    std::int64_t skipped = 0;  // annotations for images the plan never placed
};

// Projects per-source annotations into the composite frame. Every cell gets
// its own copy of its source image's annotations; a source appearing in two
// cells contributes twice. Annotations keyed by an image id outside the plan
// are counted in `skipped` rather than dropped silently.
inline RemapResult remap_annotations(
    const MosaicPlan& plan, std::int64_t composite_image_id,
    const std::map<std::int64_t, std::vector<pseudolabel::PseudoAnnotation>>& per_image,
    const std::map<std::int64_t, std::pair<int, int>>& source_dims) {
    require_valid(plan);
    const int dim = dimension(plan.grid);

    RemapResult result;
    for (int row = 0; row < dim; ++row) {
        for (int col = 0; col < dim; ++col) {
            const std::int64_t source_id = plan.cells[static_cast<std::size_t>(row) * dim + col];
            auto annotations_it = per_image.find(source_id);
            if (annotations_it == per_image.end()) {
                continue;
            }
            auto dims_it = source_dims.find(source_id);
            if (dims_it == source_dims.end()) {
                throw InvalidArgument("no source dimensions for image " +
                                      std::to_string(source_id));
            }
            const auto [src_w, src_h] = dims_it->second;
            for (const auto& annotation : annotations_it->second) {
                pseudolabel::PseudoAnnotation remapped = annotation;
                remapped.image_id = composite_image_id;
                remapped.box = geometry::transform_to_cell(annotation.box, row, col, plan.cell_w,
                                                           plan.cell_h, src_w, src_h);
                result.annotations.push_back(std::move(remapped));
            }
        }
    }

    std::set<std::int64_t> placed(plan.cells.begin(), plan.cells.end());
    for (const auto& [image_id, annotations] : per_image) {
        if (placed.find(image_id) == placed.end()) {
            result.skipped += static_cast<std::int64_t>(annotations.size());
        }
    }
    return result;
}

}  // namespace pseudoscene::mosaic
