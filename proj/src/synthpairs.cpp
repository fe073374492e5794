#include "tryon/synthpairs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tryon {

namespace {

struct Vec2 {
    float x = 0.f, y = 0.f;
};
Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(float s, Vec2 a) { return {s * a.x, s * a.y}; }
float dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
Vec2 rotate(Vec2 v, float a) {
    const float c = std::cos(a), s = std::sin(a);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

float dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const float len2 = dot(ab, ab);
    float t = len2 > 0.f ? dot(p - a, ab) / len2 : 0.f;
    t = std::clamp(t, 0.f, 1.f);
    const Vec2 q = a + t * ab;
    return std::sqrt(dot(p - q, p - q));
}

bool in_convex_quad(Vec2 p, const Vec2 q[4]) {
    // counter-clockwise winding assumed
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = q[i], b = q[(i + 1) % 4];
        const float cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if (cross < 0.f) return false;
    }
    return true;
}

// Skeleton in normalized [0,1]^2 coordinates, y down.
struct Skeleton {
    Vec2 hip_center, neck, head_center;
    Vec2 shoulder_l, shoulder_r, elbow_l, elbow_r, wrist_l, wrist_r;
    Vec2 hip_l, hip_r, knee_l, knee_r, ankle_l, ankle_r;
    Vec2 up;    // torso axis (towards head)
    Vec2 side;  // perpendicular, towards screen-right
    float shoulder_hw = 0.f, hip_hw = 0.f, head_r = 0.f;
    float arm_r = 0.f, leg_r = 0.f, hand_r = 0.f;
    float torso_len = 0.f;
};

Skeleton build_skeleton(const FigureSpec& f) {
    const PoseAngles& a = f.pose;
    Skeleton s;
    s.hip_center = {0.5f, 0.60f};
    s.torso_len = 0.22f * f.torso_height;
    s.up = {std::sin(a.torso_lean), -std::cos(a.torso_lean)};
    s.side = {std::cos(a.torso_lean), std::sin(a.torso_lean)};
    s.neck = s.hip_center + s.torso_len * s.up;
    s.shoulder_hw = 0.085f * f.torso_width;
    s.hip_hw = 0.065f * f.torso_width;
    s.shoulder_l = s.neck - s.shoulder_hw * s.side;
    s.shoulder_r = s.neck + s.shoulder_hw * s.side;
    s.hip_l = s.hip_center - s.hip_hw * s.side;
    s.hip_r = s.hip_center + s.hip_hw * s.side;

    const float upper = 0.10f * f.torso_height;
    const float fore = 0.09f * f.torso_height;
    const Vec2 down{0.f, 1.f};
    // right arm rotates outward clockwise on screen, left mirrors
    const Vec2 r_dir = rotate(down, -a.r_arm_raise);
    const Vec2 l_dir = rotate(down, a.l_arm_raise);
    s.elbow_r = s.shoulder_r + upper * r_dir;
    s.elbow_l = s.shoulder_l + upper * l_dir;
    s.wrist_r = s.elbow_r + fore * rotate(r_dir, a.r_elbow);
    s.wrist_l = s.elbow_l + fore * rotate(l_dir, -a.l_elbow);

    const float thigh = 0.13f * f.torso_height;
    const float shin = 0.11f * f.torso_height;
    const Vec2 rl_dir = rotate(down, -a.r_leg_spread);
    const Vec2 ll_dir = rotate(down, a.l_leg_spread);
    s.knee_r = s.hip_r + thigh * rl_dir;
    s.knee_l = s.hip_l + thigh * ll_dir;
    s.ankle_r = s.knee_r + shin * rotate(rl_dir, a.r_knee);
    s.ankle_l = s.knee_l + shin * rotate(ll_dir, -a.l_knee);

    s.head_r = 0.055f * (0.5f * (f.torso_width + f.torso_height));
    s.head_center = s.neck + (1.15f * s.head_r) * rotate(s.up, a.head_tilt);

    s.arm_r = 0.022f * f.limb_thickness;
    s.leg_r = 0.028f * f.limb_thickness;
    s.hand_r = 0.026f * f.limb_thickness;
    return s;
}

bool in_frame(const Skeleton& s) {
    const Vec2 pts[] = {s.head_center, s.wrist_l, s.wrist_r, s.ankle_l, s.ankle_r,
                        s.elbow_l,     s.elbow_r, s.knee_l,  s.knee_r,  s.shoulder_l,
                        s.shoulder_r};
    const float margin = s.head_r + 0.005f;
    for (const Vec2& p : pts)
        if (p.x < margin || p.x > 1.f - margin || p.y < margin || p.y > 1.f - margin)
            return false;
    return true;
}

void check_in_frame(const Skeleton& s) {
    if (!in_frame(s)) throw std::runtime_error("render: figure out of frame");
}

// 5x7 'T' glyph, row-major, top to bottom.
constexpr uint8_t kGlyph[7] = {0b11111, 0b00100, 0b00100, 0b00100,
                               0b00100, 0b00100, 0b00100};

struct GarmentShade {
    const GarmentSpec* g;
    Vec2 origin, side, down;  // garment-local frame
    float res;

    void color_at(Vec2 p, float out[3]) const {
        const Vec2 rel = p - origin;
        const float u = dot(rel, side) * res;   // px along torso width
        const float v = dot(rel, down) * res;   // px along torso axis, downwards
        const float period = std::max(2.f, g->period_frac * res);
        auto alt = [&](int c) {
            const float b = g->base_color[c];
            return b > 0.f ? b - 0.9f : b + 0.9f;
        };
        bool use_alt = false;
        switch (g->texture) {
            case GarmentTexture::kSolid:
                break;
            case GarmentTexture::kStripes: {
                // `period` is the full cycle, so bands are half a period wide
                const int band =
                    static_cast<int>(std::floor((u + g->phase * period) / (period * 0.5f)));
                use_alt = (band & 1) != 0;
                break;
            }
            case GarmentTexture::kChecker: {
                const int bu =
                    static_cast<int>(std::floor((u + g->phase * period) / (period * 0.5f)));
                const int bv = static_cast<int>(std::floor(v / (period * 0.5f)));
                use_alt = ((bu + bv) & 1) != 0;
                break;
            }
            case GarmentTexture::kTextGlyph: {
                // glyphs tiled on a 7x9 cell grid of `period`-sized texels
                const float gs = period;
                const float tu = u + g->phase * gs * 7.f;
                int cu = static_cast<int>(std::floor(tu / gs)) % 7;
                int cv = static_cast<int>(std::floor(v / gs)) % 9;
                if (cu < 0) cu += 7;
                if (cv < 0) cv += 9;
                if (cu < 5 && cv < 7) use_alt = (kGlyph[cv] >> (4 - cu)) & 1;
                break;
            }
        }
        for (int c = 0; c < 3; ++c)
            out[c] = std::clamp(use_alt ? alt(c) : g->base_color[c], -1.f, 1.f);
    }
};

constexpr float kBackgroundGray = 0.62f;

}  // namespace

Rendered render(const FigureSpec& figure, const GarmentSpec* garment, int res) {
    if (res != 32 && res != 64 && res != 128 && res != 256)
        throw std::invalid_argument("render: res must be one of {32, 64, 128, 256}");
    const Skeleton s = build_skeleton(figure);
    check_in_frame(s);

    // torso quad (ccw in y-down coords: shoulder_l, shoulder_r, hip_r, hip_l)
    const Vec2 torso[4] = {s.shoulder_l, s.shoulder_r, s.hip_r, s.hip_l};
    // garment shell: widened torso, hem below the hips
    Vec2 gquad[4];
    GarmentShade shade{};
    if (garment) {
        const Vec2 hem = s.hip_center - 0.18f * s.torso_len * s.up;
        gquad[0] = s.neck - 1.25f * s.shoulder_hw * s.side;
        gquad[1] = s.neck + 1.25f * s.shoulder_hw * s.side;
        gquad[2] = hem + 1.45f * s.hip_hw * s.side;
        gquad[3] = hem - 1.45f * s.hip_hw * s.side;
        shade = {garment, s.neck, s.side, {-s.up.x, -s.up.y}, static_cast<float>(res)};
    }
    // sleeve coverage along [shoulder, elbow, wrist]
    auto sleeve_end = [&](Vec2 sh, Vec2 el, Vec2 wr, float frac, Vec2 seg[2][2], int& nseg) {
        const float lu = std::sqrt(dot(el - sh, el - sh));
        const float lf = std::sqrt(dot(wr - el, wr - el));
        const float cover = frac * (lu + lf);
        nseg = 0;
        if (cover <= 0.f) return;
        if (cover <= lu) {
            seg[nseg][0] = sh;
            seg[nseg][1] = sh + (cover / lu) * (el - sh);
            ++nseg;
        } else {
            seg[nseg][0] = sh;
            seg[nseg][1] = el;
            ++nseg;
            const float rest = std::min(cover - lu, lf);
            seg[nseg][0] = el;
            seg[nseg][1] = el + (rest / lf) * (wr - el);
            ++nseg;
        }
    };
    Vec2 sleeves[2][2][2];
    int nsleeve[2] = {0, 0};
    if (garment) {
        sleeve_end(s.shoulder_l, s.elbow_l, s.wrist_l, garment->sleeve_length, sleeves[0],
                   nsleeve[0]);
        sleeve_end(s.shoulder_r, s.elbow_r, s.wrist_r, garment->sleeve_length, sleeves[1],
                   nsleeve[1]);
    }
    const float sleeve_r = 1.6f * s.arm_r;

    Rendered out;
    out.image = ImageRGB(res, res, kBackgroundGray);
    out.parsing = ParsingMap(res, res, kBackground);
    out.garment_layer = ImageRGB(res, res, 0.f);

    const float pants[3] = {0.55f * figure.skin[0] - 0.35f, 0.55f * figure.skin[1] - 0.35f,
                            0.55f * figure.skin[2] - 0.35f};
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const Vec2 p{(x + 0.5f) / res, (y + 0.5f) / res};
            float col[3] = {kBackgroundGray, kBackgroundGray, kBackgroundGray};
            uint8_t label = kBackground;
            auto put = [&](const float c[3], uint8_t l) {
                col[0] = c[0];
                col[1] = c[1];
                col[2] = c[2];
                label = l;
            };
            // 1. legs
            if (dist_to_segment(p, s.hip_l, s.knee_l) <= s.leg_r ||
                dist_to_segment(p, s.knee_l, s.ankle_l) <= s.leg_r ||
                dist_to_segment(p, s.hip_r, s.knee_r) <= s.leg_r ||
                dist_to_segment(p, s.knee_r, s.ankle_r) <= s.leg_r)
                put(pants, kLowerBody);
            // 2. torso
            if (in_convex_quad(p, torso)) put(figure.skin, kOtherSkin);
            // 3. arms
            if (dist_to_segment(p, s.shoulder_l, s.elbow_l) <= s.arm_r ||
                dist_to_segment(p, s.elbow_l, s.wrist_l) <= s.arm_r ||
                dist_to_segment(p, s.shoulder_r, s.elbow_r) <= s.arm_r ||
                dist_to_segment(p, s.elbow_r, s.wrist_r) <= s.arm_r)
                put(figure.skin, kOtherSkin);
            // 4. garment
            if (garment) {
                bool on = in_convex_quad(p, gquad);
                for (int arm = 0; arm < 2 && !on; ++arm)
                    for (int i = 0; i < nsleeve[arm] && !on; ++i)
                        on = dist_to_segment(p, sleeves[arm][i][0], sleeves[arm][i][1]) <= sleeve_r;
                if (on) {
                    float gc[3];
                    shade.color_at(p, gc);
                    put(gc, kUpperGarment);
                }
            }
            // 5. hands
            if (dist_to_segment(p, s.wrist_l, s.wrist_l) <= s.hand_r ||
                dist_to_segment(p, s.wrist_r, s.wrist_r) <= s.hand_r)
                put(figure.skin, kHands);
            // 6. head
            if (dist_to_segment(p, s.head_center, s.head_center) <= s.head_r)
                put(figure.skin, kHead);

            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = std::clamp(col[c], -1.f, 1.f);
            out.parsing.at(y, x) = label;
            if (label == kUpperGarment)
                for (int c = 0; c < 3; ++c) out.garment_layer.at(c, y, x) = out.image.at(c, y, x);
        }
    }

    // COCO-17 keypoints, all visible
    auto set = [&](int k, Vec2 v) {
        out.pose.pts[size_t(k)] = {std::clamp(v.x, 0.f, 1.f), std::clamp(v.y, 0.f, 1.f), 1.f};
    };
    const Vec2 hc = s.head_center;
    set(0, hc);                                              // nose
    set(1, hc + Vec2{-0.35f * s.head_r, -0.2f * s.head_r});  // left eye
    set(2, hc + Vec2{0.35f * s.head_r, -0.2f * s.head_r});   // right eye
    set(3, hc + Vec2{-0.85f * s.head_r, 0.f});               // left ear
    set(4, hc + Vec2{0.85f * s.head_r, 0.f});                // right ear
    set(5, s.shoulder_l);
    set(6, s.shoulder_r);
    set(7, s.elbow_l);
    set(8, s.elbow_r);
    set(9, s.wrist_l);
    set(10, s.wrist_r);
    set(11, s.hip_l);
    set(12, s.hip_r);
    set(13, s.knee_l);
    set(14, s.knee_r);
    set(15, s.ankle_l);
    set(16, s.ankle_r);
    return out;
}

std::pair<TryOnExample, ImageRGB> make_pair(const FigureSpec& figure, const GarmentSpec& garment,
                                            const PoseAngles& pose_a, const PoseAngles& pose_b,
                                            int res) {
    FigureSpec fa = figure;
    fa.pose = pose_a;
    FigureSpec fb = figure;
    fb.pose = pose_b;
    const Rendered ra = render(fa, &garment, res);
    const Rendered rb = render(fb, &garment, res);
    TryOnExample e;
    e.person_image = ra.image;
    e.person_parsing = ra.parsing;
    e.person_pose = ra.pose;
    e.garment_image = rb.image;
    e.garment_parsing = rb.parsing;
    e.garment_pose = rb.pose;
    e.ground_truth = ra.image;
    return {e, ra.image};
}

FigureSpec sample_figure(Rng& rng) {
    FigureSpec f;
    f.torso_width = static_cast<float>(rng.uniform(0.6, 1.4));
    f.torso_height = static_cast<float>(rng.uniform(0.6, 1.4));
    f.limb_thickness = static_cast<float>(rng.uniform(0.6, 1.4));
    for (float& c : f.skin) c = static_cast<float>(rng.uniform(-0.3, 0.85));
    // redraw poses that push an extremity outside the frame; the sequential
    // rng stream keeps this deterministic
    do {
        f.pose = sample_pose(rng);
    } while (!in_frame(build_skeleton(f)));
    return f;
}

PoseAngles sample_pose(Rng& rng) {
    PoseAngles a;
    a.torso_lean = static_cast<float>(rng.uniform(-0.18, 0.18));
    a.head_tilt = static_cast<float>(rng.uniform(-0.25, 0.25));
    a.l_arm_raise = static_cast<float>(rng.uniform(-0.25, 2.4));
    a.r_arm_raise = static_cast<float>(rng.uniform(-0.25, 2.4));
    a.l_elbow = static_cast<float>(rng.uniform(0.0, 1.9));
    a.r_elbow = static_cast<float>(rng.uniform(0.0, 1.9));
    a.l_leg_spread = static_cast<float>(rng.uniform(0.02, 0.42));
    a.r_leg_spread = static_cast<float>(rng.uniform(0.02, 0.42));
    a.l_knee = static_cast<float>(rng.uniform(0.0, 0.7));
    a.r_knee = static_cast<float>(rng.uniform(0.0, 0.7));
    return a;
}

GarmentSpec sample_garment(Rng& rng, int res) {
    GarmentSpec g;
    for (float& c : g.base_color) c = static_cast<float>(rng.uniform(-0.7, 0.8));
    g.texture = static_cast<GarmentTexture>(rng.uniform_int(4));
    const double min_px = 2.0, max_px = std::max(3.0, res / 6.0);
    g.period_frac = static_cast<float>(rng.uniform(min_px, max_px) / res);
    g.phase = static_cast<float>(rng.uniform());
    g.sleeve_length = static_cast<float>(rng.uniform(0.0, 1.0));
    return g;
}

ExampleSpec sample_example_spec(Rng& rng, int res) {
    ExampleSpec s;
    s.figure = sample_figure(rng);
    s.garment = sample_garment(rng, res);
    s.pose_a = s.figure.pose;
    FigureSpec fb = s.figure;
    do {
        s.pose_b = sample_pose(rng);
        fb.pose = s.pose_b;
    } while (!in_frame(build_skeleton(fb)));
    return s;
}

namespace {

nlohmann::json pose_to_json(const PoseAngles& a) {
    return {{"torso_lean", a.torso_lean}, {"head_tilt", a.head_tilt},
            {"l_arm_raise", a.l_arm_raise}, {"r_arm_raise", a.r_arm_raise},
            {"l_elbow", a.l_elbow},         {"r_elbow", a.r_elbow},
            {"l_leg_spread", a.l_leg_spread}, {"r_leg_spread", a.r_leg_spread},
            {"l_knee", a.l_knee},           {"r_knee", a.r_knee}};
}
PoseAngles pose_from_json(const nlohmann::json& j) {
    PoseAngles a;
    a.torso_lean = j.at("torso_lean");
    a.head_tilt = j.at("head_tilt");
    a.l_arm_raise = j.at("l_arm_raise");
    a.r_arm_raise = j.at("r_arm_raise");
    a.l_elbow = j.at("l_elbow");
    a.r_elbow = j.at("r_elbow");
    a.l_leg_spread = j.at("l_leg_spread");
    a.r_leg_spread = j.at("r_leg_spread");
    a.l_knee = j.at("l_knee");
    a.r_knee = j.at("r_knee");
    return a;
}

}  // namespace

void save_example_spec(const ExampleSpec& s, const std::string& path) {
    nlohmann::json j;
    j["figure"] = {{"torso_width", s.figure.torso_width},
                   {"torso_height", s.figure.torso_height},
                   {"limb_thickness", s.figure.limb_thickness},
                   {"skin", {s.figure.skin[0], s.figure.skin[1], s.figure.skin[2]}}};
    j["garment"] = {{"base_color",
                     {s.garment.base_color[0], s.garment.base_color[1], s.garment.base_color[2]}},
                    {"texture", static_cast<int>(s.garment.texture)},
                    {"period_frac", s.garment.period_frac},
                    {"phase", s.garment.phase},
                    {"sleeve_length", s.garment.sleeve_length}};
    j["pose_a"] = pose_to_json(s.pose_a);
    j["pose_b"] = pose_to_json(s.pose_b);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << j.dump(1) << "\n";
}

ExampleSpec load_example_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    is >> j;
    ExampleSpec s;
    const auto& f = j.at("figure");
    s.figure.torso_width = f.at("torso_width");
    s.figure.torso_height = f.at("torso_height");
    s.figure.limb_thickness = f.at("limb_thickness");
    for (int c = 0; c < 3; ++c) s.figure.skin[c] = f.at("skin").at(size_t(c));
    const auto& g = j.at("garment");
    for (int c = 0; c < 3; ++c) s.garment.base_color[c] = g.at("base_color").at(size_t(c));
    s.garment.texture = static_cast<GarmentTexture>(g.at("texture").get<int>());
    s.garment.period_frac = g.at("period_frac");
    s.garment.phase = g.at("phase");
    s.garment.sleeve_length = g.at("sleeve_length");
    s.pose_a = pose_from_json(j.at("pose_a"));
    s.pose_b = pose_from_json(j.at("pose_b"));
    s.figure.pose = s.pose_a;
    return s;
}

void generate_dataset(int n, uint64_t seed, int res, const std::string& out_dir) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
        const ExampleSpec spec = sample_example_spec(rng, res);
        auto [e, gt] = make_pair(spec.figure, spec.garment, spec.pose_a, spec.pose_b, res);
        char name[32];
        std::snprintf(name, sizeof(name), "ex%05d", i);
        const fs::path dir = fs::path(out_dir) / name;
        fs::create_directories(dir);
        encode_png_rgb(e.person_image, (dir / "person.png").string());
        encode_png_parsing(e.person_parsing, (dir / "person_parsing.png").string());
        save_pose_json(e.person_pose, (dir / "person_pose.json").string());
        encode_png_rgb(e.garment_image, (dir / "garment.png").string());
        encode_png_parsing(e.garment_parsing, (dir / "garment_parsing.png").string());
        save_pose_json(e.garment_pose, (dir / "garment_pose.json").string());
        save_example_spec(spec, (dir / "spec.json").string());
    }
}

TryOnExample load_example(const std::string& dir, int downsample_factor) {
    namespace fs = std::filesystem;
    TryOnExample e;
    e.person_image = decode_png_rgb((fs::path(dir) / "person.png").string());
    e.person_parsing = decode_png_parsing((fs::path(dir) / "person_parsing.png").string());
    e.person_pose = load_pose_json((fs::path(dir) / "person_pose.json").string());
    e.garment_image = decode_png_rgb((fs::path(dir) / "garment.png").string());
    e.garment_parsing = decode_png_parsing((fs::path(dir) / "garment_parsing.png").string());
    e.garment_pose = load_pose_json((fs::path(dir) / "garment_pose.json").string());
    if (downsample_factor > 1) {
        e.person_image = downsample_box(e.person_image, downsample_factor);
        e.person_parsing = downsample_nearest(e.person_parsing, downsample_factor);
        e.garment_image = downsample_box(e.garment_image, downsample_factor);
        e.garment_parsing = downsample_nearest(e.garment_parsing, downsample_factor);
    }
    e.ground_truth = e.person_image;  // paired data: the person image is the target
    return e;
}

}  // namespace tryon
