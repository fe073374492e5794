#ifndef TRYON_DATAMODEL_HPP
#define TRYON_DATAMODEL_HPP

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tryon {

// Parsing labels.
enum ParseLabel : uint8_t {
    kBackground = 0,
    kHead = 1,
    kHands = 2,
    kUpperGarment = 3,
    kLowerBody = 4,
    kOtherSkin = 5,
};
constexpr int kNumParseLabels = 6;

constexpr int kNumKeypoints = 17;  // COCO ordering

// H x W x 3 image with values in [-1, 1], stored channel-first (CHW).
struct ImageRGB {
    int h = 0, w = 0;
    std::vector<float> pix;  // size 3*h*w

    ImageRGB() = default;
    ImageRGB(int h_, int w_, float fill = 0.f) : h(h_), w(w_), pix(size_t(3) * h_ * w_, fill) {}

    float& at(int c, int y, int x) { return pix[(size_t(c) * h + y) * w + x]; }
    float at(int c, int y, int x) const { return pix[(size_t(c) * h + y) * w + x]; }
    bool empty() const { return pix.empty(); }
};

struct ParsingMap {
    int h = 0, w = 0;
    std::vector<uint8_t> labels;  // size h*w

    ParsingMap() = default;
    ParsingMap(int h_, int w_, uint8_t fill = kBackground)
        : h(h_), w(w_), labels(size_t(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return labels[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return labels[size_t(y) * w + x]; }
    bool empty() const { return labels.empty(); }
};

// K x 3 rows of (x, y, visibility), x/y normalized to [0, 1].
struct PoseKeypoints {
    std::array<std::array<float, 3>, kNumKeypoints> pts{};

    bool visible(int k) const { return pts[size_t(k)][2] > 0.5f; }
};

// Per-image noise augmentation levels attached to a bundle.
struct NoiseAugLevels {
    float agnostic = 0.f;
    float garment = 0.f;
    float low_res = 0.f;  // SR stages only
};

struct ConditioningBundle {
    ImageRGB agnostic_rgb;     // I_a
    PoseKeypoints person_pose; // J_p
    ImageRGB garment;          // I_c
    PoseKeypoints garment_pose;// J_g
    NoiseAugLevels noise_aug_levels;
    std::optional<ImageRGB> low_res;  // SR stages
};

struct TryOnExample {
    ImageRGB person_image;
    ImageRGB garment_image;
    ParsingMap person_parsing;
    ParsingMap garment_parsing;
    PoseKeypoints person_pose;
    PoseKeypoints garment_pose;
    std::optional<ImageRGB> ground_truth;  // paired / synthetic oracle only
};

// Returns a human-readable violation per broken invariant; empty if valid.
// Total: never throws.
std::vector<std::string> validate_example(const TryOnExample& e);

// --- PNG codec ------------------------------------------------------------
// 8-bit sRGB PNG <-> ImageRGB with byte b mapped to 2*(b/255) - 1.
// Encode inverts with round-half-up. Non-PNG or non-RGB input throws.
ImageRGB decode_png_rgb(const std::string& path);
void encode_png_rgb(const ImageRGB& img, const std::string& path);
uint8_t float_to_byte(float v);       // round-half-up, clamped
float byte_to_float(uint8_t b);       // 2*(b/255) - 1

// Parsing maps serialize as single-channel 8-bit PNG holding raw labels.
ParsingMap decode_png_parsing(const std::string& path);
void encode_png_parsing(const ParsingMap& p, const std::string& path);

// --- Pose JSON: {"keypoints": [[x,y,v] x 17]} ------------------------------
PoseKeypoints load_pose_json(const std::string& path);
void save_pose_json(const PoseKeypoints& p, const std::string& path);

// --- Image utilities (resolution plumbing, non-differentiable) -------------
ImageRGB downsample_box(const ImageRGB& img, int factor);
ImageRGB upsample_bilinear(const ImageRGB& img, int out_h, int out_w);
ParsingMap downsample_nearest(const ParsingMap& p, int factor);
ImageRGB crop(const ImageRGB& img, int y0, int x0, int h, int w);

}  // namespace tryon

#endif
