#ifndef TRYON_SYNTHPAIRS_HPP
#define TRYON_SYNTHPAIRS_HPP

#include <string>
#include <utility>

#include "tryon/datamodel.hpp"
#include "tryon/rng.hpp"

namespace tryon {

// Joint angles for the 17-keypoint articulated stick figure (radians).
struct PoseAngles {
    float torso_lean = 0.f;
    float head_tilt = 0.f;
    float l_arm_raise = 0.3f, r_arm_raise = 0.3f;  // from straight down, outward
    float l_elbow = 0.2f, r_elbow = 0.2f;          // inward bend
    float l_leg_spread = 0.12f, r_leg_spread = 0.12f;
    float l_knee = 0.f, r_knee = 0.f;
};

struct FigureSpec {
    float torso_width = 1.f;     // [0.6, 1.4]
    float torso_height = 1.f;    // [0.6, 1.4]
    float limb_thickness = 1.f;  // [0.6, 1.4]
    float skin[3] = {0.4f, 0.1f, -0.1f};
    PoseAngles pose;
};

enum class GarmentTexture { kSolid = 0, kStripes = 1, kChecker = 2, kTextGlyph = 3 };

struct GarmentSpec {
    float base_color[3] = {-0.2f, 0.1f, 0.6f};
    GarmentTexture texture = GarmentTexture::kSolid;
    float period_frac = 0.125f;  // texture period as fraction of image width (>= 2 px)
    float phase = 0.f;           // [0, 1)
    float sleeve_length = 0.5f;  // [0, 1], fraction of the arm covered
};

// One deterministic flat-shaded render. parsing and pose are exactly
// consistent with the drawn geometry; garment_layer holds garment pixels
// over mid-gray (the try-on oracle layer).
struct Rendered {
    ImageRGB image;
    ParsingMap parsing;
    PoseKeypoints pose;
    ImageRGB garment_layer;
};

Rendered render(const FigureSpec& figure, const GarmentSpec* garment, int res);

// Paired-pose example: person = figure at pose_a, garment image = same
// figure and garment at pose_b; ground truth is the person image itself.
std::pair<TryOnExample, ImageRGB> make_pair(const FigureSpec& figure, const GarmentSpec& garment,
                                            const PoseAngles& pose_a, const PoseAngles& pose_b,
                                            int res);

// Generation parameters of one dataset example, persisted so counterfactual
// oracle renders stay available for evaluation.
struct ExampleSpec {
    FigureSpec figure;
    GarmentSpec garment;
    PoseAngles pose_a;  // person pose
    PoseAngles pose_b;  // garment-wearer pose
};

FigureSpec sample_figure(Rng& rng);
GarmentSpec sample_garment(Rng& rng, int res);
PoseAngles sample_pose(Rng& rng);
ExampleSpec sample_example_spec(Rng& rng, int res);

void save_example_spec(const ExampleSpec& s, const std::string& path);
ExampleSpec load_example_spec(const std::string& path);

// Writes n examples under out_dir (ex00000/, ex00001/, ...) using the
// datamodel file formats plus spec.json. Bit-identical for equal
// (n, seed, res): per-example RNG streams derive from (seed, index).
void generate_dataset(int n, uint64_t seed, int res, const std::string& out_dir);

// Loads one example directory, optionally box-downsampling images (and
// nearest-downsampling parsing) by an integer factor.
TryOnExample load_example(const std::string& dir, int downsample_factor = 1);

}  // namespace tryon

#endif
