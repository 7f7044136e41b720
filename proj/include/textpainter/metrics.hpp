#pragma once

#include <string>
#include <vector>

#include "textpainter/image.hpp"
#include "textpainter/nn/modules.hpp"

namespace textpainter {

struct MetricsReport {
    double fid = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;  // may be +infinity when every pair is identical
    int n_pairs = 0;
};

// Inputs are float images in [0, 1] with matching shapes.
double psnr(const ImageF& a, const ImageF& b);  // 10 * log10(1 / MSE)

// Mean local structural similarity over valid 11x11 windows, Gaussian
// sigma 1.5, K1 0.01, K2 0.03, channels averaged. Needs h, w >= 11.
double ssim(const ImageF& a, const ImageF& b);

// Frechet distance between Gaussian fits of the two feature sets
// (covariance ddof 1, so each set needs at least two vectors).
double fid(const std::vector<std::vector<float>>& set_a,
           const std::vector<std::vector<float>>& set_b);

// Same distance from precomputed moments; cov matrices are row-major d x d.
// Eigenvalues below -1e-6 are reported as errors, small negatives clipped.
double fid_from_moments(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<double>& cov_b);

// Frozen random conv features for FID: resize to 64x64, two stride-2 convs,
// global average pool. Deterministic in the seed; values are not comparable
// to Inception-based FID numbers.
class FidFeatures {
public:
    explicit FidFeatures(uint64_t seed = 101);
    int dim() const { return 16; }
    std::vector<float> features(const Image& img) const;  // 3-channel input

private:
    nn::Conv2d c1_, c2_;
};

// Pairwise psnr (pooled MSE over all pixels), mean ssim, and FID over the
// extractor's features. Pairs must agree in shape; at least two pairs.
MetricsReport evaluate_pairs(const std::vector<Image>& pred, const std::vector<Image>& gt,
                             const FidFeatures& feats);

// {"fid", "ssim", "psnr", "n_pairs"}; infinite psnr serializes as "inf".
std::string metrics_json(const MetricsReport& report);

}  // namespace textpainter
