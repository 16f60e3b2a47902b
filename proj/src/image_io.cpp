#include "cropvqa/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <fstream>

#include "cropvqa/errors.hpp"

namespace cropvqa {

namespace {

Image from_bgr(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    if (!rgb.isContinuous()) {
        rgb = rgb.clone();
    }
    std::vector<std::uint8_t> pixels(rgb.datastart, rgb.dataend);
    return Image(rgb.cols, rgb.rows, std::move(pixels));
}

cv::Mat to_bgr(const Image& img) {
    // cv::Mat over our buffer without copying; cvtColor writes a fresh matrix.
    const cv::Mat rgb(img.height(), img.width(), CV_8UC3, const_cast<std::uint8_t*>(img.pixels().data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw Error("cannot read image " + path.string());
    }
    return from_bgr(bgr);
}

Image decode_image(const std::vector<std::uint8_t>& encoded) {
    cv::Mat bgr = cv::imdecode(encoded, cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw ProtocolError("undecodable image payload");
    }
    return from_bgr(bgr);
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", to_bgr(img), out)) {
        throw Error("PNG encoding failed");
    }
    return out;
}

void save_png(const Image& img, const std::filesystem::path& path) {
    const auto bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw Error("cannot write " + path.string());
    }
}

std::pair<int, int> probe_image_size(const std::filesystem::path& path) {
    const Image img = load_image(path);
    return {img.width(), img.height()};
}

}  // namespace cropvqa
