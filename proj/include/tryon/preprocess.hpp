#ifndef TRYON_PREPROCESS_HPP
#define TRYON_PREPROCESS_HPP

#include "tryon/datamodel.hpp"

namespace tryon {

// Inclusive-exclusive pixel box.
struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains(int y, int x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Garment pixels (label 3) copied through, everything else mid-gray 0.
ImageRGB segment_garment(const ImageRGB& image, const ParsingMap& parsing);

// Tight box over all non-background labels; throws if none.
BoundingBox person_bbox(const ParsingMap& parsing);

// Masks the person's bounding box to mid-gray, then copies head, hands and
// lower body back from the source. The pose argument mirrors the interface
// contract; region selection is parsing-driven.
ImageRGB clothing_agnostic_rgb(const ImageRGB& image, const ParsingMap& parsing,
                               const PoseKeypoints& pose);

// Pixel-space K x 3 rows -> normalized pose. Throws if a visible point lies
// outside [0, W) x [0, H).
PoseKeypoints normalize_keypoints(const float raw[][3], int count, int h, int w);

}  // namespace tryon

#endif
