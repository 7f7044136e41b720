#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textpainter/common.hpp"

namespace textpainter {

// 8-bit image, HWC layout, RGB channel order.
struct Image {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<uint8_t> data;

    Image() = default;
    Image(int h_, int w_, int c_, uint8_t fill = 0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    uint8_t& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    uint8_t at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    bool empty() const { return data.empty(); }
    bool operator==(const Image&) const = default;
};

// Float image, HWC, values nominally in [0, 1].
struct ImageF {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> data;

    ImageF() = default;
    ImageF(int h_, int w_, int c_, float fill = 0.f)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    float at(int y, int x, int ch) const {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    bool empty() const { return data.empty(); }
};

ImageF to_float(const Image& img);                  // v / 255
Image to_u8(const ImageF& img);                     // round(clamp(v, 0, 1) * 255)

Image crop(const Image& img, const Rect& r);        // r must lie inside img
void paste(Image& dst, const Image& src, int y, int x);

// Crop of size (h, w) at origin (y0, x0); coordinates outside the image
// sample the nearest edge pixel (replicate).
Image crop_replicate(const Image& img, int y0, int x0, int h, int w);

// Box-filter resize. Exact area averaging when downscaling; bilinear up.
ImageF resize_area(const ImageF& img, int out_h, int out_w);
Image resize_area(const Image& img, int out_h, int out_w);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace textpainter
