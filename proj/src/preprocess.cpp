#include "tryon/preprocess.hpp"

#include <stdexcept>

namespace tryon {

namespace {
void check_aligned(const ImageRGB& image, const ParsingMap& parsing, const char* op) {
    if (image.h != parsing.h || image.w != parsing.w)
        throw std::invalid_argument(std::string(op) + ": parsing map size " +
                                    std::to_string(parsing.h) + "x" + std::to_string(parsing.w) +
                                    " does not match image " + std::to_string(image.h) + "x" +
                                    std::to_string(image.w));
}
}  // namespace

ImageRGB segment_garment(const ImageRGB& image, const ParsingMap& parsing) {
    check_aligned(image, parsing, "segment_garment");
    ImageRGB out(image.h, image.w, 0.f);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (parsing.at(y, x) == kUpperGarment)
                for (int c = 0; c < 3; ++c) out.at(c, y, x) = image.at(c, y, x);
    return out;
}

BoundingBox person_bbox(const ParsingMap& parsing) {
    BoundingBox b{parsing.w, parsing.h, 0, 0};
    bool any = false;
    for (int y = 0; y < parsing.h; ++y)
        for (int x = 0; x < parsing.w; ++x)
            if (parsing.at(y, x) != kBackground) {
                any = true;
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
    if (!any) throw std::runtime_error("person_bbox: no foreground");
    return b;
}

ImageRGB clothing_agnostic_rgb(const ImageRGB& image, const ParsingMap& parsing,
                               const PoseKeypoints& /*pose*/) {
    check_aligned(image, parsing, "clothing_agnostic_rgb");
    const BoundingBox box = person_bbox(parsing);
    ImageRGB out = image;
    for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x) {
            const uint8_t l = parsing.at(y, x);
            const bool keep = l == kHead || l == kHands || l == kLowerBody;
            if (!keep)
                for (int c = 0; c < 3; ++c) out.at(c, y, x) = 0.f;
        }
    return out;
}

PoseKeypoints normalize_keypoints(const float raw[][3], int count, int h, int w) {
    if (count != kNumKeypoints)
        throw std::invalid_argument("normalize_keypoints: expected " +
                                    std::to_string(kNumKeypoints) + " rows");
    PoseKeypoints p;
    for (int k = 0; k < count; ++k) {
        const float x = raw[k][0], y = raw[k][1], v = raw[k][2];
        if (v > 0.5f) {
            if (x < 0.f || x >= static_cast<float>(w) || y < 0.f || y >= static_cast<float>(h))
                throw std::invalid_argument("normalize_keypoints: visible point " +
                                            std::to_string(k) + " outside frame");
            p.pts[size_t(k)] = {x / static_cast<float>(w), y / static_cast<float>(h), 1.f};
        } else {
            p.pts[size_t(k)] = {0.f, 0.f, 0.f};
        }
    }
    return p;
}

}  // namespace tryon
