#include "textpainter/metrics.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <json.hpp>

#include "textpainter/nn/autodiff.hpp"
#include "textpainter/rng.hpp"

namespace textpainter {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const ImageF& a, const ImageF& b) {
    check(!a.empty() && !b.empty(), "metrics_shape", "empty image");
    check(a.h == b.h && a.w == b.w && a.c == b.c, "metrics_shape",
          "image shapes differ: " + std::to_string(a.h) + "x" + std::to_string(a.w) + "x" +
              std::to_string(a.c) + " vs " + std::to_string(b.h) + "x" + std::to_string(b.w) +
              "x" + std::to_string(b.c));
}

double mse(const ImageF& a, const ImageF& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

std::vector<double> gaussian_window() {
    std::vector<double> w(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - (kWin - 1) / 2.0;
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-mode Gaussian filter of a single channel, double precision.
std::vector<double> blur_valid(const std::vector<double>& img, int h, int w,
                               const std::vector<double>& k) {
    int ow = w - kWin + 1, oh = h - kWin + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * img[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = acc;
        }
    return out;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    check(es.info() == Eigen::Success, "fid_sqrt", "eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        check(ev[i] > -1e-6, "fid_sqrt",
              "matrix has eigenvalue " + std::to_string(ev[i]) + "; not a covariance");
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd to_matrix(const std::vector<double>& cov, int d) {
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = cov[static_cast<size_t>(i) * d + j];
    // symmetrize away row-major round-trip noise before decomposing
    return 0.5 * (m + m.transpose());
}

}  // namespace

double psnr(const ImageF& a, const ImageF& b) {
    check_pair(a, b);
    double e = mse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / e);
}

double ssim(const ImageF& a, const ImageF& b) {
    check_pair(a, b);
    check(a.h >= kWin && a.w >= kWin, "metrics_shape",
          "image smaller than the 11x11 ssim window");
    const std::vector<double> k = gaussian_window();
    const size_t plane = static_cast<size_t>(a.h) * a.w;
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    double total = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        for (int p = 0; p < static_cast<int>(plane); ++p) {
            double xv = a.data[static_cast<size_t>(p) * a.c + ch];
            double yv = b.data[static_cast<size_t>(p) * a.c + ch];
            x[p] = xv;
            y[p] = yv;
            xx[p] = xv * xv;
            yy[p] = yv * yv;
            xy[p] = xv * yv;
        }
        std::vector<double> mx = blur_valid(x, a.h, a.w, k);
        std::vector<double> my = blur_valid(y, a.h, a.w, k);
        std::vector<double> mxx = blur_valid(xx, a.h, a.w, k);
        std::vector<double> myy = blur_valid(yy, a.h, a.w, k);
        std::vector<double> mxy = blur_valid(xy, a.h, a.w, k);
        double acc = 0.0;
        for (size_t i = 0; i < mx.size(); ++i) {
            double vx = mxx[i] - mx[i] * mx[i];
            double vy = myy[i] - my[i] * my[i];
            double cxy = mxy[i] - mx[i] * my[i];
            acc += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / a.c;
}

double fid_from_moments(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<double>& cov_b) {
    const int d = static_cast<int>(mu_a.size());
    check(d >= 1, "metrics_input", "empty mean vector");
    check(mu_b.size() == mu_a.size(), "metrics_input", "mean dimensions differ");
    check(cov_a.size() == static_cast<size_t>(d) * d && cov_b.size() == cov_a.size(),
          "metrics_input", "covariance is not d x d");

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        double delta = mu_a[i] - mu_b[i];
        mean_term += delta * delta;
    }
    Eigen::MatrixXd sa = to_matrix(cov_a, d);
    Eigen::MatrixXd sb = to_matrix(cov_b, d);
    Eigen::MatrixXd ra = sqrt_psd(sa);
    Eigen::MatrixXd cross = sqrt_psd(ra * sb * ra);
    double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross.trace();
    return std::max(value, 0.0);  // rounding can land a hair below zero
}

double fid(const std::vector<std::vector<float>>& set_a,
           const std::vector<std::vector<float>>& set_b) {
    check(set_a.size() >= 2 && set_b.size() >= 2, "metrics_input",
          "fid needs at least two feature vectors per set");
    const size_t d = set_a[0].size();
    check(d >= 1, "metrics_input", "empty feature vector");
    for (const auto* set : {&set_a, &set_b})
        for (const auto& v : *set)
            check(v.size() == d, "metrics_input", "feature dimensions differ within a set");

    auto moments = [d](const std::vector<std::vector<float>>& set, std::vector<double>& mu,
                       std::vector<double>& cov) {
        const double n = static_cast<double>(set.size());
        mu.assign(d, 0.0);
        for (const auto& v : set)
            for (size_t i = 0; i < d; ++i) mu[i] += v[i];
        for (double& m : mu) m /= n;
        cov.assign(d * d, 0.0);
        for (const auto& v : set)
            for (size_t i = 0; i < d; ++i)
                for (size_t j = 0; j < d; ++j)
                    cov[i * d + j] += (v[i] - mu[i]) * (v[j] - mu[j]);
        for (double& c : cov) c /= (n - 1.0);
    };
    std::vector<double> mu_a, cov_a, mu_b, cov_b;
    moments(set_a, mu_a, cov_a);
    moments(set_b, mu_b, cov_b);
    return fid_from_moments(mu_a, cov_a, mu_b, cov_b);
}

FidFeatures::FidFeatures(uint64_t seed) {
    nn::ParamList ps;  // local: frozen features, nothing registers for training
    Rng rng(seed);
    c1_ = nn::Conv2d(ps, "fid.c1", 3, 8, 3, 2, 1, rng);
    c2_ = nn::Conv2d(ps, "fid.c2", 8, 16, 3, 2, 1, rng);
    for (auto& p : ps.items()) p.var.impl()->requires_grad = false;
}

std::vector<float> FidFeatures::features(const Image& img) const {
    check(img.c == 3, "metrics_shape", "fid features expect a 3-channel image");
    Image small = resize_area(img, 64, 64);
    nn::TensorData x({1, 3, 64, 64});
    for (int ch = 0; ch < 3; ++ch)
        for (int yy = 0; yy < 64; ++yy)
            for (int xx = 0; xx < 64; ++xx)
                x.v[(static_cast<size_t>(ch) * 64 + yy) * 64 + xx] =
                    static_cast<float>(small.at(yy, xx, ch)) / 255.f;
    nn::NoGrad ng;
    nn::Var f = nn::leaky_relu(c1_.forward(nn::Var{std::move(x)}));
    f = nn::global_avg_pool(nn::leaky_relu(c2_.forward(f)));
    return f.values();
}

MetricsReport evaluate_pairs(const std::vector<Image>& pred, const std::vector<Image>& gt,
                             const FidFeatures& feats) {
    check(pred.size() == gt.size(), "metrics_input", "pred/gt pair counts differ");
    check(pred.size() >= 2, "metrics_input", "need at least two pairs for fid");

    double sq_sum = 0.0;
    int64_t n_px = 0;
    double ssim_sum = 0.0;
    std::vector<std::vector<float>> fa, fb;
    for (size_t i = 0; i < pred.size(); ++i) {
        ImageF p = to_float(pred[i]);
        ImageF g = to_float(gt[i]);
        check_pair(p, g);
        sq_sum += mse(p, g) * static_cast<double>(p.data.size());
        n_px += static_cast<int64_t>(p.data.size());
        ssim_sum += ssim(p, g);
        fa.push_back(feats.features(pred[i]));
        fb.push_back(feats.features(gt[i]));
    }

    MetricsReport r;
    r.n_pairs = static_cast<int>(pred.size());
    double pooled = sq_sum / static_cast<double>(n_px);
    r.psnr = pooled == 0.0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(1.0 / pooled);
    r.ssim = ssim_sum / static_cast<double>(pred.size());
    r.fid = fid(fa, fb);
    return r;
}

std::string metrics_json(const MetricsReport& report) {
    nlohmann::json j;
    j["fid"] = report.fid;
    j["ssim"] = report.ssim;
    if (std::isinf(report.psnr))
        j["psnr"] = "inf";
    else
        j["psnr"] = report.psnr;
    j["n_pairs"] = report.n_pairs;
    return j.dump();
}

}  // namespace textpainter
