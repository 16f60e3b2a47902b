#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cropvqa/geometry.hpp"

namespace cropvqa {

/// Decodes any format OpenCV reads (JPEG, PNG, ...) into RGB8. Throws Error on failure.
Image load_image(const std::filesystem::path& path);
Image decode_image(const std::vector<std::uint8_t>& encoded);

/// Lossless PNG; the wire format for images.
std::vector<std::uint8_t> encode_png(const Image& img);
void save_png(const Image& img, const std::filesystem::path& path);

/// Width and height without keeping the pixels around.
std::pair<int, int> probe_image_size(const std::filesystem::path& path);

}  // namespace cropvqa
