#include "textpainter/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace textpainter {

ImageF to_float(const Image& img) {
    ImageF out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<float>(img.data[i]) * (1.f / 255.f);
    return out;
}

Image to_u8(const ImageF& img) {
    Image out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.data.size(); ++i) {
        float v = std::clamp(img.data[i], 0.f, 1.f);
        out.data[i] = static_cast<uint8_t>(std::lround(v * 255.f));
    }
    return out;
}

Image crop(const Image& img, const Rect& r) {
    check(r.x >= 0 && r.y >= 0 && r.x + r.w <= img.w && r.y + r.h <= img.h,
          "crop_oob", "crop rectangle outside image bounds");
    Image out(r.h, r.w, img.c);
    for (int y = 0; y < r.h; ++y) {
        const uint8_t* src = &img.data[((static_cast<size_t>(y) + r.y) * img.w + r.x) * img.c];
        std::copy(src, src + static_cast<size_t>(r.w) * img.c,
                  &out.data[static_cast<size_t>(y) * r.w * img.c]);
    }
    return out;
}

void paste(Image& dst, const Image& src, int y, int x) {
    check(dst.c == src.c, "paste_channels", "channel mismatch");
    check(y >= 0 && x >= 0 && y + src.h <= dst.h && x + src.w <= dst.w,
          "paste_oob", "paste outside destination");
    for (int r = 0; r < src.h; ++r) {
        const uint8_t* s = &src.data[static_cast<size_t>(r) * src.w * src.c];
        uint8_t* d = &dst.data[((static_cast<size_t>(r) + y) * dst.w + x) * dst.c];
        std::copy(s, s + static_cast<size_t>(src.w) * src.c, d);
    }
}

Image crop_replicate(const Image& img, int y0, int x0, int h, int w) {
    check(img.h > 0 && img.w > 0, "crop_empty", "cannot crop an empty image");
    Image out(h, w, img.c);
    for (int y = 0; y < h; ++y) {
        int sy = std::clamp(y0 + y, 0, img.h - 1);
        for (int x = 0; x < w; ++x) {
            int sx = std::clamp(x0 + x, 0, img.w - 1);
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(sy, sx, ch);
        }
    }
    return out;
}

ImageF resize_area(const ImageF& img, int out_h, int out_w) {
    check(out_h > 0 && out_w > 0, "resize_size", "non-positive target size");
    if (out_h == img.h && out_w == img.w) return img;
    ImageF out(out_h, out_w, img.c);
    double sy = static_cast<double>(img.h) / out_h;
    double sx = static_cast<double>(img.w) / out_w;
    bool down = out_h <= img.h && out_w <= img.w;
    if (down) {
        for (int y = 0; y < out_h; ++y) {
            double y0 = y * sy, y1 = (y + 1) * sy;
            int iy0 = static_cast<int>(std::floor(y0));
            int iy1 = std::min(img.h, static_cast<int>(std::ceil(y1)));
            for (int x = 0; x < out_w; ++x) {
                double x0 = x * sx, x1 = (x + 1) * sx;
                int ix0 = static_cast<int>(std::floor(x0));
                int ix1 = std::min(img.w, static_cast<int>(std::ceil(x1)));
                for (int ch = 0; ch < img.c; ++ch) {
                    double acc = 0.0, area = 0.0;
                    for (int yy = iy0; yy < iy1; ++yy) {
                        double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                        for (int xx = ix0; xx < ix1; ++xx) {
                            double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                            acc += wy * wx * img.at(yy, xx, ch);
                            area += wy * wx;
                        }
                    }
                    out.at(y, x, ch) = static_cast<float>(acc / area);
                }
            }
        }
    } else {
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int iy = static_cast<int>(std::floor(fy));
            double ty = fy - iy;
            int y0c = std::clamp(iy, 0, img.h - 1), y1c = std::clamp(iy + 1, 0, img.h - 1);
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                int ix = static_cast<int>(std::floor(fx));
                double tx = fx - ix;
                int x0c = std::clamp(ix, 0, img.w - 1), x1c = std::clamp(ix + 1, 0, img.w - 1);
                for (int ch = 0; ch < img.c; ++ch) {
                    double v = (1 - ty) * ((1 - tx) * img.at(y0c, x0c, ch) + tx * img.at(y0c, x1c, ch)) +
                               ty * ((1 - tx) * img.at(y1c, x0c, ch) + tx * img.at(y1c, x1c, ch));
                    out.at(y, x, ch) = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

Image resize_area(const Image& img, int out_h, int out_w) {
    return to_u8(resize_area(to_float(img), out_h, out_w));
}

void write_png(const std::string& path, const Image& img) {
    check(!img.empty(), "png_empty", "refusing to write an empty image");
    check(img.c == 1 || img.c == 3, "png_channels", "only 1- or 3-channel PNG supported");
    cv::Mat m(img.h, img.w, img.c == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.c == 3) {
                // OpenCV is BGR.
                m.at<cv::Vec3b>(y, x) = cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
            } else {
                m.at<uint8_t>(y, x) = img.at(y, x, 0);
            }
        }
    if (!cv::imwrite(path, m)) fail("png_write", "failed to write " + path);
}

Image read_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) fail("png_read", "failed to read " + path);
    if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
    check(m.channels() == 1 || m.channels() == 3, "png_channels",
          "unsupported channel count in " + path);
    Image out(m.rows, m.cols, m.channels());
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            if (out.c == 3) {
                auto px = m.at<cv::Vec3b>(y, x);
                out.at(y, x, 0) = px[2];
                out.at(y, x, 1) = px[1];
                out.at(y, x, 2) = px[0];
            } else {
                out.at(y, x, 0) = m.at<uint8_t>(y, x);
            }
        }
    return out;
}

}  // namespace textpainter
