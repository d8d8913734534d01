#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <vector>

#include "pseudoscene/common.hpp"

namespace pseudoscene::image {

/// Interleaved 8-bit RGB raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // 3 * width * height bytes

    bool empty() const { return width <= 0 || height <= 0; }

    std::uint8_t at(int x, int y, int c) const {
        return rgb[static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * width + x) + c];
    }
    std::uint8_t& at(int x, int y, int c) {
        return rgb[static_cast<std::size_t>(3) * (static_cast<std::size_t>(y) * width + x) + c];
    }

    static Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        Image img;
        img.width = w;
        img.height = h;
        img.rgb.resize(static_cast<std::size_t>(3) * w * h);
        for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
            img.rgb[i] = r;
            img.rgb[i + 1] = g;
            img.rgb[i + 2] = b;
        }
        return img;
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.width == b.width && a.height == b.height && a.rgb == b.rgb;
    }
};

/// Separable bilinear resampling, center-aligned sample positions
/// ((d + 0.5) * src/dst - 0.5), clamp-to-edge, channel values rounded half-up.
/// Non-aspect-preserving by design; an identity-size call copies pixels
/// exactly. This is the one resize kernel in the toolkit and is named
/// "bilinear_center_aligned" in emitted provenance metadata.
inline Image bilinear_resize(const Image& src, int dst_w, int dst_h) {
    if (src.empty()) throw InvalidArgument("bilinear_resize: empty source image");
    if (dst_w <= 0 || dst_h <= 0) {
        throw InvalidArgument("bilinear_resize: non-positive target size");
    }
    Image dst;
    dst.width = dst_w;
    dst.height = dst_h;
    dst.rgb.resize(static_cast<std::size_t>(3) * dst_w * dst_h);

    const double x_scale = static_cast<double>(src.width) / dst_w;
    const double y_scale = static_cast<double>(src.height) / dst_h;
    for (int dy = 0; dy < dst_h; ++dy) {
        double sy = (dy + 0.5) * y_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fy = sy - y0;
        for (int dx = 0; dx < dst_w; ++dx) {
            double sx = (dx + 0.5) * x_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - fx) * src.at(x0, y0, c) + fx * src.at(x1, y0, c);
                const double bot = (1.0 - fx) * src.at(x0, y1, c) + fx * src.at(x1, y1, c);
                const double v = (1.0 - fy) * top + fy * bot;
                dst.at(dx, dy, c) =
                    static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return dst;
}

/// Source of cell pixels for mosaic composition.
class ImageLoader {
public:
    virtual ~ImageLoader() = default;
    virtual Image load(std::int64_t image_id) const = 0;
};

/// In-memory loader; the unit as well as the pipeline tests feed composition
/// through this without touching the filesystem.
class MemoryLoader final : public ImageLoader {
public:
    void put(std::int64_t image_id, Image img) { images_[image_id] = std::move(img); }

    Image load(std::int64_t image_id) const override {
        auto it = images_.find(image_id);
        if (it == images_.end()) {
            std::ostringstream os;
            os << "no image registered for id " << image_id;
            throw IoError(os.str());
        }
        return it->second;
    }

private:
    std::map<std::int64_t, Image> images_;
};

} // namespace pseudoscene::image
