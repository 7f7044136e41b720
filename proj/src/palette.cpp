#include "textpainter/palette.hpp"

#include <cmath>

namespace textpainter {

const std::array<Rgb, 26>& palette26() {
    static const std::array<Rgb, 26> table = {{
        {255, 0, 0},   {255, 64, 0},  {255, 128, 0}, {255, 191, 0},
        {255, 255, 0}, {191, 255, 0}, {128, 255, 0}, {64, 255, 0},
        {0, 255, 0},   {0, 255, 64},  {0, 255, 128}, {0, 255, 191},
        {0, 255, 255}, {0, 191, 255}, {0, 128, 255}, {0, 64, 255},
        {0, 0, 255},   {64, 0, 255},  {128, 0, 255}, {191, 0, 255},
        {255, 0, 255}, {255, 0, 191}, {255, 0, 128}, {255, 0, 64},
        {0, 0, 0},     {255, 255, 255},
    }};
    return table;
}

double relative_luminance(const Rgb& c) {
    auto lin = [](uint8_t v) {
        double s = v / 255.0;
        return s <= 0.03928 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
    };
    return 0.2126 * lin(c[0]) + 0.7152 * lin(c[1]) + 0.0722 * lin(c[2]);
}

double contrast_ratio(const Rgb& a, const Rgb& b) {
    double la = relative_luminance(a), lb = relative_luminance(b);
    double hi = std::max(la, lb), lo = std::min(la, lb);
    return (hi + 0.05) / (lo + 0.05);
}

int best_contrast_index(const Rgb& bg) {
    int best = 0;
    double best_ratio = -1.0;
    const auto& pal = palette26();
    for (int i = 0; i < 26; ++i) {
        double r = contrast_ratio(pal[static_cast<size_t>(i)], bg);
        if (r > best_ratio) {
            best_ratio = r;
            best = i;
        }
    }
    return best;
}

}  // namespace textpainter
