#pragma once

#include <array>
#include <cstdint>

namespace textpainter {

using Rgb = std::array<uint8_t, 3>;

// Fixed 26-color classification palette: 24 fully saturated hues in 15
// degree steps plus black and white. Stands in for the unpublished WebFont
// category table.
const std::array<Rgb, 26>& palette26();

// WCAG relative luminance of an sRGB color, in [0, 1].
double relative_luminance(const Rgb& c);

// WCAG contrast ratio, in [1, 21].
double contrast_ratio(const Rgb& a, const Rgb& b);

// Index of the palette entry with the highest contrast ratio against `bg`;
// ties resolve to the lowest index.
int best_contrast_index(const Rgb& bg);

}  // namespace textpainter
