#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cropvqa {

/**
 * Half-open integer pixel rectangle: [x0, x1) x [y0, y1).
 *
 * A valid Rect has non-negative coordinates and covers at least one pixel.
 * Construction through make() enforces that; the aggregate form is kept so
 * rects can live in containers and be compared cheaply.
 */
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 1;
    int y1 = 1;

    /// Throws DegenerateRectError for empty rects and BoundsError for negative coordinates.
    static Rect make(int x0, int y0, int x1, int y1);

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool valid() const { return x0 >= 0 && y0 >= 0 && x0 < x1 && y0 < y1; }
    bool contains(const Rect& inner) const {
        return inner.x0 >= x0 && inner.y0 >= y0 && inner.x1 <= x1 && inner.y1 <= y1;
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

std::string to_string(const Rect& r);

/// Row-major interleaved RGB8 image.
class Image {
public:
    Image(int width, int height);
    Image(int width, int height, std::vector<std::uint8_t> rgb);

    int width() const { return width_; }
    int height() const { return height_; }
    Rect bounds() const { return Rect{0, 0, width_, height_}; }

    std::span<const std::uint8_t> pixels() const { return pixels_; }
    std::span<std::uint8_t> pixels() { return pixels_; }

    const std::uint8_t* pixel(int x, int y) const { return &pixels_[offset(x, y)]; }
    std::uint8_t* pixel(int x, int y) { return &pixels_[offset(x, y)]; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * 3;
    }

    int width_;
    int height_;
    std::vector<std::uint8_t> pixels_;
};

/// Grid of non-negative saliency values, row-major.
class PatchMap {
public:
    PatchMap(int rows, int cols, std::vector<double> values);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double at(int row, int col) const { return values_[static_cast<std::size_t>(row * cols_ + col)]; }
    std::span<const double> values() const { return values_; }

private:
    int rows_;
    int cols_;
    std::vector<double> values_;
};

enum class Side { top, bottom, left, right };

inline constexpr Side kAllSides[] = {Side::top, Side::bottom, Side::left, Side::right};

const char* to_string(Side side);

/// Rounds half-up. A 1e-9 guard absorbs binary representation error so that
/// e.g. 0.1 * 5 lands on 0.5 and rounds up.
int round_half_up(double value);

std::int64_t area(const Rect& r);

/// Area of the intersection, 0 when disjoint.
std::int64_t intersection_area(const Rect& a, const Rect& b);

std::optional<Rect> intersection(const Rect& a, const Rect& b);

/// Fraction of the image covered by r. Throws BoundsError when r leaves the image.
double rel_size(const Rect& r, int image_width, int image_height);
double rel_size(const Rect& r, const Image& img);

double iou(const Rect& a, const Rect& b);

/**
 * Removes (1 - ratio) of the rect's extent from the named side.
 *
 * The new boundary is the real-valued cut rounded half-up. Throws
 * DegenerateRectError when the result would be narrower than one pixel or
 * when rounding leaves the rect unchanged (no strict shrink is possible).
 */
Rect shrink_side(const Rect& r, Side side, double ratio);

Image crop_image(const Image& img, const Rect& r);

/**
 * Maps a rect in patch-grid coordinates (x = column, y = row) to pixels.
 *
 * Column boundary j sits at round_half_up(j * W / cols), evaluated in exact
 * integer arithmetic; rows likewise with H / rows.
 */
Rect patch_to_pixel_rect(const Rect& grid_rect, int rows, int cols, int image_width, int image_height);
Rect patch_to_pixel_rect(const Rect& grid_rect, const PatchMap& pm, const Image& img);

}  // namespace cropvqa
