#include "cropvqa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cropvqa/errors.hpp"

namespace cropvqa {

Rect Rect::make(int x0, int y0, int x1, int y1) {
    if (x0 < 0 || y0 < 0) {
        throw BoundsError("negative rect coordinate in " + to_string(Rect{x0, y0, x1, y1}));
    }
    if (x0 >= x1 || y0 >= y1) {
        throw DegenerateRectError("empty rect " + to_string(Rect{x0, y0, x1, y1}));
    }
    return Rect{x0, y0, x1, y1};
}

std::string to_string(const Rect& r) {
    std::ostringstream os;
    os << '[' << r.x0 << ',' << r.y0 << ',' << r.x1 << ',' << r.y1 << ')';
    return os.str();
}

Image::Image(int width, int height)
    : Image(width, height,
            std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                      static_cast<std::size_t>(std::max(height, 0)) * 3)) {}

Image::Image(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), pixels_(std::move(rgb)) {
    if (width < 1 || height < 1) {
        throw BoundsError("image dimensions must be positive");
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
        throw BoundsError("pixel buffer size does not match width x height x 3");
    }
}

PatchMap::PatchMap(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows < 1 || cols < 1) {
        throw BoundsError("patch map dimensions must be positive");
    }
    if (values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
        throw BoundsError("patch map value count does not match rows x cols");
    }
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw BoundsError("patch map values must be finite and non-negative");
        }
    }
}

const char* to_string(Side side) {
    switch (side) {
        case Side::top: return "top";
        case Side::bottom: return "bottom";
        case Side::left: return "left";
        case Side::right: return "right";
    }
    return "?";
}

int round_half_up(double value) {
    return static_cast<int>(std::floor(value + 0.5 + 1e-9));
}

std::int64_t area(const Rect& r) {
    return static_cast<std::int64_t>(r.width()) * r.height();
}

std::optional<Rect> intersection(const Rect& a, const Rect& b) {
    Rect r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    if (r.x0 >= r.x1 || r.y0 >= r.y1) {
        return std::nullopt;
    }
    return r;
}

std::int64_t intersection_area(const Rect& a, const Rect& b) {
    auto r = intersection(a, b);
    return r ? area(*r) : 0;
}

double rel_size(const Rect& r, int image_width, int image_height) {
    if (!Rect{0, 0, image_width, image_height}.contains(r) || !r.valid()) {
        throw BoundsError("rect " + to_string(r) + " outside " + std::to_string(image_width) + "x" +
                          std::to_string(image_height) + " image");
    }
    return static_cast<double>(area(r)) /
           (static_cast<double>(image_width) * static_cast<double>(image_height));
}

double rel_size(const Rect& r, const Image& img) {
    return rel_size(r, img.width(), img.height());
}

double iou(const Rect& a, const Rect& b) {
    const std::int64_t inter = intersection_area(a, b);
    if (inter == 0) {
        return 0.0;
    }
    const std::int64_t uni = area(a) + area(b) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Rect shrink_side(const Rect& r, Side side, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw DegenerateRectError("shrink ratio must lie in (0,1)");
    }
    Rect out = r;
    const double cut_w = (1.0 - ratio) * r.width();
    const double cut_h = (1.0 - ratio) * r.height();
    switch (side) {
        case Side::top: out.y0 = round_half_up(r.y0 + cut_h); break;
        case Side::bottom: out.y1 = round_half_up(r.y1 - cut_h); break;
        case Side::left: out.x0 = round_half_up(r.x0 + cut_w); break;
        case Side::right: out.x1 = round_half_up(r.x1 - cut_w); break;
    }
    if (out.width() < 1 || out.height() < 1) {
        throw DegenerateRectError("shrinking " + to_string(r) + " from " + to_string(side) +
                                  " collapses it below one pixel");
    }
    if (out == r) {
        throw DegenerateRectError("shrinking " + to_string(r) + " from " + to_string(side) +
                                  " removes less than half a pixel");
    }
    return out;
}

Image crop_image(const Image& img, const Rect& r) {
    if (!r.valid() || !img.bounds().contains(r)) {
        throw BoundsError("crop rect " + to_string(r) + " outside image bounds");
    }
    Image out(r.width(), r.height());
    const std::size_t row_bytes = static_cast<std::size_t>(r.width()) * 3;
    for (int y = r.y0; y < r.y1; ++y) {
        std::copy_n(img.pixel(r.x0, y), row_bytes, out.pixel(0, y - r.y0));
    }
    return out;
}

namespace {

// round_half_up(index * extent / cells) without floating point.
int grid_boundary(int index, int extent, int cells) {
    const std::int64_t num = 2 * static_cast<std::int64_t>(index) * extent + cells;
    return static_cast<int>(num / (2 * static_cast<std::int64_t>(cells)));
}

}  // namespace

Rect patch_to_pixel_rect(const Rect& grid_rect, int rows, int cols, int image_width, int image_height) {
    if (!grid_rect.valid() || !Rect{0, 0, cols, rows}.contains(grid_rect)) {
        throw BoundsError("grid rect " + to_string(grid_rect) + " outside " + std::to_string(rows) +
                          "x" + std::to_string(cols) + " grid");
    }
    Rect px{grid_boundary(grid_rect.x0, image_width, cols), grid_boundary(grid_rect.y0, image_height, rows),
            grid_boundary(grid_rect.x1, image_width, cols), grid_boundary(grid_rect.y1, image_height, rows)};
    px.x1 = std::min(px.x1, image_width);
    px.y1 = std::min(px.y1, image_height);
    // Grids finer than the image can round a cell to zero width; keep one pixel.
    if (px.x1 <= px.x0) {
        px.x1 = std::min(px.x0 + 1, image_width);
        px.x0 = px.x1 - 1;
    }
    if (px.y1 <= px.y0) {
        px.y1 = std::min(px.y0 + 1, image_height);
        px.y0 = px.y1 - 1;
    }
    return px;
}

Rect patch_to_pixel_rect(const Rect& grid_rect, const PatchMap& pm, const Image& img) {
    return patch_to_pixel_rect(grid_rect, pm.rows(), pm.cols(), img.width(), img.height());
}

}  // namespace cropvqa
