#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "textpainter/metrics.hpp"
#include "textpainter/rng.hpp"

using namespace textpainter;

namespace {

ImageF random_img(Rng& rng, int h, int w, int c, float lo = 0.f, float hi = 1.f) {
    ImageF img(h, w, c);
    for (float& v : img.data) v = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

// Direct windowed reference: explicit 2-D Gaussian weights, one pass per
// window, no separable shortcut. Oracle for the production implementation.
double ssim_ref(const ImageF& a, const ImageF& b) {
    const int win = 11;
    const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
    double k[11][11], ksum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            double dy = i - 5.0, dx = j - 5.0;
            k[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            ksum += k[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) k[i][j] /= ksum;

    double total = 0.0;
    for (int ch = 0; ch < a.c; ++ch) {
        double acc = 0.0;
        int n_win = 0;
        for (int y = 0; y + win <= a.h; ++y)
            for (int x = 0; x + win <= a.w; ++x) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        double xv = a.at(y + i, x + j, ch);
                        double yv = b.at(y + i, x + j, ch);
                        mx += k[i][j] * xv;
                        my += k[i][j] * yv;
                        mxx += k[i][j] * xv * xv;
                        myy += k[i][j] * yv * yv;
                        mxy += k[i][j] * xv * yv;
                    }
                double vx = mxx - mx * mx, vy = myy - my * my, cxy = mxy - mx * my;
                acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++n_win;
            }
        total += acc / n_win;
    }
    return total / a.c;
}

std::vector<std::vector<float>> random_set(Rng& rng, int n, int d, double spread) {
    std::vector<std::vector<float>> set(n, std::vector<float>(d));
    for (auto& v : set)
        for (float& x : v) x = static_cast<float>(rng.normal() * spread);
    return set;
}

// Independent Frechet computation: moments in Eigen, and the trace term uses
// the transposed product sqrt(B^1/2 A B^1/2) instead of the production order.
double fid_ref(const std::vector<std::vector<float>>& sa,
               const std::vector<std::vector<float>>& sb) {
    auto fit = [](const std::vector<std::vector<float>>& s, Eigen::VectorXd& mu,
                  Eigen::MatrixXd& cov) {
        const int n = static_cast<int>(s.size()), d = static_cast<int>(s[0].size());
        Eigen::MatrixXd m(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = s[static_cast<size_t>(i)][j];
        mu = m.colwise().mean();
        Eigen::MatrixXd cent = m.rowwise() - mu.transpose();
        cov = cent.transpose() * cent / (n - 1.0);
    };
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd ca, cb;
    fit(sa, mu_a, ca);
    fit(sb, mu_b, cb);

    auto msqrt = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                               es.eigenvectors().transpose());
    };
    Eigen::MatrixXd rb = msqrt(cb);
    Eigen::MatrixXd cross = msqrt(rb * ca * rb);
    return (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross.trace();
}

Image pattern_poster(int h, int w, int phase) {
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<uint8_t>((x * 3 + y * 5 + c * 29 + phase) & 0xFF);
    return img;
}

}  // namespace

TEST_CASE("psnr closed forms and the direct-sum oracle") {
    Rng rng(11);
    ImageF a = random_img(rng, 16, 16, 3);
    CHECK(std::isinf(psnr(a, a)));

    ImageF shifted = random_img(rng, 20, 12, 1, 0.f, 0.85f);
    ImageF b = shifted;
    for (float& v : b.data) v += 0.1f;
    CHECK(psnr(shifted, b) == doctest::Approx(20.0).epsilon(1e-6));

    ImageF c = random_img(rng, 16, 16, 3);
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(c.data[i]);
        acc += d * d;
    }
    double want = 10.0 * std::log10(a.data.size() / acc);
    CHECK(psnr(a, c) == doctest::Approx(want).epsilon(1e-9));
    CHECK(psnr(a, c) == doctest::Approx(psnr(c, a)).epsilon(1e-12));

    ImageF wrong(16, 15, 3);
    CHECK_THROWS_AS(psnr(a, wrong), Error);
    CHECK_THROWS_AS(psnr(ImageF{}, ImageF{}), Error);
}

TEST_CASE("ssim closed forms, bounds, and the windowed reference") {
    Rng rng(12);
    ImageF a = random_img(rng, 24, 32, 3);
    CHECK(std::fabs(ssim(a, a) - 1.0) < 1e-12);

    ImageF flat_a(17, 19, 1, 0.5f), flat_b(17, 19, 1, 0.5f);
    CHECK(std::fabs(ssim(flat_a, flat_b) - 1.0) < 1e-12);

    // distinct constants: variance terms vanish, means decide the score
    ImageF c4(13, 15, 1, 0.4f), c6(13, 15, 1, 0.6f);
    double c1 = 1e-4, c2 = 9e-4;
    double xv = 0.4f, yv = 0.6f;  // the stored float32 values, not the ideal reals
    double want = ((2 * xv * yv + c1) * c2) / ((xv * xv + yv * yv + c1) * (0.0 + c2));
    CHECK(ssim(c4, c6) == doctest::Approx(want).epsilon(1e-9));

    ImageF b = random_img(rng, 24, 32, 3);
    CHECK(ssim(a, b) == doctest::Approx(ssim_ref(a, b)).epsilon(1e-9));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));

    ImageF tiny(10, 64, 1);
    CHECK_THROWS_AS(ssim(tiny, tiny), Error);
    ImageF exact(11, 11, 1, 0.25f);
    CHECK(std::fabs(ssim(exact, exact) - 1.0) < 1e-12);  // single valid window

    for (int trial = 0; trial < 1000; ++trial) {
        int h = 11 + static_cast<int>(rng.randint(0, 6));
        int w = 11 + static_cast<int>(rng.randint(0, 6));
        ImageF x = random_img(rng, h, w, 1);
        ImageF y = random_img(rng, h, w, 1);
        if (trial % 3 == 0)
            for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = 1.f - x.data[i];
        double s = ssim(x, y);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("fid closed form, self distance, symmetry, and the eigensolver oracle") {
    CHECK(fid_from_moments({0.0}, {1.0}, {3.0}, {1.0}) == doctest::Approx(9.0).epsilon(1e-8));

    Rng rng(13);
    auto a = random_set(rng, 16, 4, 1.0);
    CHECK(fid(a, a) <= 1e-6);

    auto big_a = random_set(rng, 64, 4, 1.0);
    auto big_b = random_set(rng, 64, 4, 1.7);
    for (auto& v : big_b) v[0] += 0.8f;  // shift one mean so the distance is real
    double got = fid(big_a, big_b);
    CHECK(got > 0.1);
    CHECK(got == doctest::Approx(fid_ref(big_a, big_b)).epsilon(1e-5));
    CHECK(got == doctest::Approx(fid(big_b, big_a)).epsilon(1e-6));

    // damaged moments are reported, not silently clipped to zero
    try {
        fid_from_moments({0.0}, {-1.0}, {0.0}, {1.0});
        FAIL("expected a sqrt failure");
    } catch (const Error& e) {
        CHECK(e.code() == "fid_sqrt");
    }

    CHECK_THROWS_AS(fid({{1.f, 2.f}}, a), Error);  // one vector is not a distribution
    auto ragged = a;
    ragged[1].pop_back();
    CHECK_THROWS_AS(fid(ragged, a), Error);
    CHECK_THROWS_AS(fid_from_moments({0.0, 1.0}, {1.0}, {0.0}, {1.0}), Error);
}

TEST_CASE("frozen fid features are deterministic and image-sensitive") {
    FidFeatures f1(101), f2(101), f3(202);
    CHECK(f1.dim() == 16);
    Image a = pattern_poster(40, 56, 0);
    Image b = pattern_poster(40, 56, 97);
    auto va = f1.features(a);
    REQUIRE(va.size() == 16);
    CHECK(va == f2.features(a));
    CHECK(va != f1.features(b));
    CHECK(va != f3.features(a));  // different frozen seed, different projection
    for (float v : va) CHECK(std::isfinite(v));

    Image gray(20, 20, 1);
    CHECK_THROWS_AS(f1.features(gray), Error);
}

TEST_CASE("pair evaluation pools psnr, averages ssim, and reports fid") {
    FidFeatures feats(101);
    std::vector<Image> gt{pattern_poster(24, 32, 0), pattern_poster(32, 24, 50),
                          pattern_poster(24, 24, 120)};

    MetricsReport same = evaluate_pairs(gt, gt, feats);
    CHECK(same.n_pairs == 3);
    CHECK(std::isinf(same.psnr));
    CHECK(std::fabs(same.ssim - 1.0) < 1e-12);
    CHECK(same.fid <= 1e-6);

    nlohmann::json j_same = nlohmann::json::parse(metrics_json(same));
    CHECK(j_same["psnr"].is_string());
    CHECK(j_same["psnr"].get<std::string>() == "inf");
    CHECK(j_same["n_pairs"].get<int>() == 3);

    std::vector<Image> pred = gt;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) pred[1].at(y, x, 0) = 255;
    MetricsReport diff = evaluate_pairs(pred, gt, feats);
    CHECK(std::isfinite(diff.psnr));
    CHECK(diff.ssim < 1.0);
    CHECK(diff.ssim > 0.5);  // two of three pairs untouched
    CHECK(diff.fid >= 0.0);

    // pooled psnr weights pixels, not pairs: recompute from raw squared error
    double sq = 0.0;
    int64_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        ImageF p = to_float(pred[i]), g = to_float(gt[i]);
        for (size_t k = 0; k < p.data.size(); ++k) {
            double d = static_cast<double>(p.data[k]) - static_cast<double>(g.data[k]);
            sq += d * d;
        }
        n += static_cast<int64_t>(p.data.size());
    }
    CHECK(diff.psnr == doctest::Approx(10.0 * std::log10(n / sq)).epsilon(1e-9));

    nlohmann::json j_diff = nlohmann::json::parse(metrics_json(diff));
    CHECK(j_diff["psnr"].is_number());

    CHECK_THROWS_AS(evaluate_pairs({gt[0]}, {gt[0]}, feats), Error);
    CHECK_THROWS_AS(evaluate_pairs(pred, {gt[0], gt[1]}, feats), Error);
    std::vector<Image> wrong = gt;
    wrong[2] = pattern_poster(24, 30, 0);
    CHECK_THROWS_AS(evaluate_pairs(wrong, gt, feats), Error);
}
