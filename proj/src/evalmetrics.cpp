#include "tryon/evalmetrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tryon/nn.hpp"
#include "tryon/rng.hpp"
#include "tryon/tape.hpp"

namespace tryon {

namespace {

uint64_t extractor_seed(const std::string& id) {
    const std::string prefix = "rconv64/";
    if (id.rfind(prefix, 0) != 0)
        throw std::invalid_argument("extract_features: unknown extractor id " + id);
    try {
        return std::stoull(id.substr(prefix.size()));
    } catch (...) {
        throw std::invalid_argument("extract_features: bad seed in extractor id " + id);
    }
}

}  // namespace

FeatureSet extract_features(const std::vector<ImageRGB>& images, const std::string& extractor_id) {
    if (images.empty()) throw std::invalid_argument("extract_features: empty image set");
    const int h = images[0].h, w = images[0].w;
    for (const auto& img : images)
        if (img.h != h || img.w != w)
            throw std::invalid_argument("extract_features: mixed resolutions");
    if (h % 8 || w % 8)
        throw std::invalid_argument("extract_features: resolution must be divisible by 8");

    Rng rng(extractor_seed(extractor_id));
    ParamStore<float> store;
    const int widths[4] = {3, 16, 32, kFeatureDim};
    int conv_w[3], conv_b[3];
    for (int l = 0; l < 3; ++l) {
        conv_w[l] = store.add("w" + std::to_string(l),
                              init_fan_in<float>({widths[l + 1], widths[l], 3, 3},
                                                 int64_t(widths[l]) * 9, rng));
        conv_b[l] = store.add("b" + std::to_string(l), Tensor<float>::zeros({widths[l + 1]}));
    }

    const int64_t N = static_cast<int64_t>(images.size());
    FeatureSet fs;
    fs.extractor_id = extractor_id;
    fs.features = Tensor<float>({N, kFeatureDim});
    for (int64_t i = 0; i < N; ++i) {
        Tensor<float> x({1, 3, h, w});
        std::copy(images[size_t(i)].pix.begin(), images[size_t(i)].pix.end(), x.ptr());
        Tape<float> tape;
        nn::Var<float> v = tape.input(std::move(x));
        for (int l = 0; l < 3; ++l) {
            v = nn::conv2d(tape, v, tape.param(&store.at(conv_w[l]).value, nullptr, false),
                           tape.param(&store.at(conv_b[l]).value, nullptr, false));
            v = nn::avg_pool2(tape, v);
            v = nn::swish(tape, v);
        }
        const Tensor<float>& f = tape.val(v);
        const int64_t HW = f.dim(2) * f.dim(3);
        for (int64_t c = 0; c < kFeatureDim; ++c) {
            double s = 0;
            const float* p = f.ptr() + c * HW;
            for (int64_t j = 0; j < HW; ++j) s += p[j];
            fs.features.at2(i, c) = static_cast<float>(s / static_cast<double>(HW));
        }
    }
    return fs;
}

namespace {

void check_pair(const FeatureSet& a, const FeatureSet& b, const char* op, int64_t min_rows) {
    if (a.extractor_id != b.extractor_id)
        throw std::invalid_argument(std::string(op) + ": extractor mismatch");
    if (a.features.dim(0) < min_rows || b.features.dim(0) < min_rows)
        throw std::invalid_argument(std::string(op) + ": too few feature rows");
    if (a.features.dim(1) != b.features.dim(1))
        throw std::invalid_argument(std::string(op) + ": feature dim mismatch");
}

Eigen::MatrixXd to_eigen(const Tensor<float>& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (int64_t i = 0; i < t.dim(0); ++i)
        for (int64_t j = 0; j < t.dim(1); ++j) m(i, j) = t.at2(i, j);
    return m;
}

// symmetric PSD square root with eigenvalue clamping at 0
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const FeatureSet& a, const FeatureSet& b) {
    check_pair(a, b, "fid", 2);
    const Eigen::MatrixXd fa = to_eigen(a.features), fb = to_eigen(b.features);
    const Eigen::VectorXd mu_a = fa.colwise().mean(), mu_b = fb.colwise().mean();
    auto cov = [](const Eigen::MatrixXd& f, const Eigen::VectorXd& mu) {
        Eigen::MatrixXd c = f.rowwise() - mu.transpose();
        return Eigen::MatrixXd(c.transpose() * c / static_cast<double>(f.rows() - 1));
    };
    const Eigen::MatrixXd sa = cov(fa, mu_a), sb = cov(fb, mu_b);
    const Eigen::MatrixXd ra = sqrtm_psd(sa);
    // Tr((Sa Sb)^{1/2}) via the symmetric form sqrt(ra Sb ra)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ra * sb * ra);
    const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_cross;
    return std::max(0.0, d);
}

namespace {

double poly_kernel(const Eigen::MatrixXd& x, int64_t i, const Eigen::MatrixXd& y, int64_t j) {
    const double d = static_cast<double>(x.cols());
    const double v = x.row(i).dot(y.row(j)) / d + 1.0;
    return v * v * v;
}

// unbiased MMD^2 on row ranges [a0, a1) x [b0, b1)
double mmd2_block(const Eigen::MatrixXd& fa, int64_t a0, int64_t a1, const Eigen::MatrixXd& fb,
                  int64_t b0, int64_t b1) {
    const int64_t m = a1 - a0, n = b1 - b0;
    double kaa = 0, kbb = 0, kab = 0;
    for (int64_t i = a0; i < a1; ++i)
        for (int64_t j = a0; j < a1; ++j)
            if (i != j) kaa += poly_kernel(fa, i, fa, j);
    for (int64_t i = b0; i < b1; ++i)
        for (int64_t j = b0; j < b1; ++j)
            if (i != j) kbb += poly_kernel(fb, i, fb, j);
    for (int64_t i = a0; i < a1; ++i)
        for (int64_t j = b0; j < b1; ++j) kab += poly_kernel(fa, i, fb, j);
    return kaa / static_cast<double>(m * (m - 1)) + kbb / static_cast<double>(n * (n - 1)) -
           2.0 * kab / static_cast<double>(m * n);
}

}  // namespace

double kid(const FeatureSet& a, const FeatureSet& b) {
    check_pair(a, b, "kid", 2);
    const Eigen::MatrixXd fa = to_eigen(a.features), fb = to_eigen(b.features);
    const int64_t na = fa.rows(), nb = fb.rows();
    const int64_t nblocks = std::max<int64_t>(1, (std::max(na, nb) + 255) / 256);
    double acc = 0;
    for (int64_t k = 0; k < nblocks; ++k) {
        const int64_t a0 = k * na / nblocks, a1 = (k + 1) * na / nblocks;
        const int64_t b0 = k * nb / nblocks, b1 = (k + 1) * nb / nblocks;
        if (a1 - a0 < 2 || b1 - b0 < 2)
            throw std::invalid_argument("kid: block with fewer than 2 rows");
        acc += mmd2_block(fa, a0, a1, fb, b0, b1);
    }
    return 1000.0 * acc / static_cast<double>(nblocks);
}

double psnr(const ImageRGB& x, const ImageRGB& y) {
    if (x.h != y.h || x.w != y.w) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0;
    for (size_t i = 0; i < x.pix.size(); ++i) {
        const double d = static_cast<double>(x.pix[i]) - y.pix[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.pix.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(4.0 / mse);  // peak^2 = 4
}

double ssim(const ImageRGB& x, const ImageRGB& y, const std::vector<uint8_t>* mask) {
    if (x.h != y.h || x.w != y.w) throw std::invalid_argument("ssim: shape mismatch");
    constexpr int kWin = 11, kHalf = 5;
    if (x.h < kWin || x.w < kWin) throw std::invalid_argument("ssim: image smaller than window");
    if (mask && static_cast<int>(mask->size()) != x.h * x.w)
        throw std::invalid_argument("ssim: mask size mismatch");
    double win[kWin];
    double wsum = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kHalf;
        win[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        wsum += win[i];
    }
    for (double& v : win) v /= wsum;
    const double c1 = 0.01 * 2.0 * 0.01 * 2.0, c2 = 0.03 * 2.0 * 0.03 * 2.0;

    double total = 0;
    int64_t count = 0;
    for (int c = 0; c < 3; ++c) {
        for (int yy = kHalf; yy < x.h - kHalf; ++yy)
            for (int xx = kHalf; xx < x.w - kHalf; ++xx) {
                if (mask && !(*mask)[size_t(yy) * x.w + xx]) continue;
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = -kHalf; i <= kHalf; ++i)
                    for (int j = -kHalf; j <= kHalf; ++j) {
                        const double wgt = win[i + kHalf] * win[j + kHalf];
                        const double a = x.at(c, yy + i, xx + j);
                        const double b = y.at(c, yy + i, xx + j);
                        mx += wgt * a;
                        my += wgt * b;
                        sxx += wgt * a * a;
                        syy += wgt * b * b;
                        sxy += wgt * a * b;
                    }
                sxx -= mx * mx;
                syy -= my * my;
                sxy -= mx * my;
                total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sxx + syy + c2));
                ++count;
            }
    }
    if (!count) throw std::invalid_argument("ssim: empty masked region");
    return total / static_cast<double>(count);
}

double boundary_band_mae(const ImageRGB& x, const ImageRGB& y, const std::vector<uint8_t>& mask,
                         int h, int w, int band) {
    if (x.h != y.h || x.w != y.w || x.h != h || x.w != w)
        throw std::invalid_argument("boundary_band_mae: shape mismatch");
    if (static_cast<int>(mask.size()) != h * w)
        throw std::invalid_argument("boundary_band_mae: mask size mismatch");
    double total = 0;
    int64_t count = 0;
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
            const bool in = mask[size_t(yy) * w + xx] != 0;
            bool boundary = false;
            for (int dy = -band; dy <= band && !boundary; ++dy)
                for (int dx = -band; dx <= band && !boundary; ++dx) {
                    const int ny = yy + dy, nx = xx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    if ((mask[size_t(ny) * w + nx] != 0) != in) boundary = true;
                }
            if (!boundary) continue;
            for (int c = 0; c < 3; ++c)
                total += std::abs(static_cast<double>(x.at(c, yy, xx)) - y.at(c, yy, xx));
            count += 3;
        }
    if (!count) throw std::invalid_argument("boundary_band_mae: no boundary pixels");
    return total / static_cast<double>(count);
}

}  // namespace tryon
