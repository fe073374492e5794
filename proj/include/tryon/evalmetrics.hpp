#ifndef TRYON_EVALMETRICS_HPP
#define TRYON_EVALMETRICS_HPP

#include <string>
#include <vector>

#include "tryon/datamodel.hpp"
#include "tryon/tensor.hpp"

namespace tryon {

struct FeatureSet {
    Tensor<float> features;  // [N, D]
    std::string extractor_id;
};

constexpr int kFeatureDim = 64;

// Deterministic features from a frozen random-weight conv encoder with
// global average pooling. extractor_id format: "rconv64/<seed>".
FeatureSet extract_features(const std::vector<ImageRGB>& images,
                            const std::string& extractor_id = "rconv64/0");

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), eigenvalues clamped at 0.
double fid(const FeatureSet& a, const FeatureSet& b);

// Unbiased polynomial-kernel MMD^2, k(x,y) = (x.y/D + 1)^3, averaged over
// consecutive equal blocks (single block up to 256 rows), times 1000.
double kid(const FeatureSet& a, const FeatureSet& b);

// Peak 2 (range [-1, 1]); identical inputs return +inf.
double psnr(const ImageRGB& x, const ImageRGB& y);

// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), standard
// constants scaled to range 2. mask (h*w bytes, optional) restricts the
// average to windows centered on nonzero pixels.
double ssim(const ImageRGB& x, const ImageRGB& y, const std::vector<uint8_t>* mask = nullptr);

// Mean absolute error within +/- band pixels of the mask's boundary.
double boundary_band_mae(const ImageRGB& x, const ImageRGB& y, const std::vector<uint8_t>& mask,
                         int h, int w, int band);

}  // namespace tryon

#endif
