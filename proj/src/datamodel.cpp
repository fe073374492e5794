#include "tryon/datamodel.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tryon {

std::vector<std::string> validate_example(const TryOnExample& e) {
    std::vector<std::string> v;
    auto check_image = [&](const ImageRGB& img, const std::string& field) {
        if (img.h <= 0 || img.w <= 0) {
            v.push_back(field + ": non-positive dimensions");
            return;
        }
        for (float p : img.pix) {
            if (!std::isfinite(p)) {
                v.push_back(field + ": non-finite pixel value");
                return;
            }
            if (p < -1.f || p > 1.f) {
                v.push_back(field + ": pixel value outside [-1, 1]");
                return;
            }
        }
    };
    auto check_parsing = [&](const ParsingMap& p, const ImageRGB& img, const std::string& field) {
        if (p.h != img.h || p.w != img.w)
            v.push_back(field + ": dimensions inconsistent with paired image");
        for (uint8_t l : p.labels)
            if (l >= kNumParseLabels) {
                v.push_back(field + ": label outside declared label set");
                break;
            }
    };
    auto check_pose = [&](const PoseKeypoints& p, const std::string& field) {
        for (int k = 0; k < kNumKeypoints; ++k) {
            const auto& row = p.pts[size_t(k)];
            if (row[2] != 0.f && row[2] != 1.f) {
                v.push_back(field + ": visibility not in {0,1} at keypoint " + std::to_string(k));
                continue;
            }
            if (row[2] > 0.5f) {
                if (row[0] < 0.f || row[0] > 1.f || row[1] < 0.f || row[1] > 1.f)
                    v.push_back(field + ": visible keypoint " + std::to_string(k) +
                                " outside [0,1] range");
            } else if (row[0] != 0.f || row[1] != 0.f) {
                v.push_back(field + ": invisible keypoint " + std::to_string(k) +
                            " must carry x = y = 0");
            }
        }
    };
    check_image(e.person_image, "person_image");
    check_image(e.garment_image, "garment_image");
    check_parsing(e.person_parsing, e.person_image, "person_parsing");
    check_parsing(e.garment_parsing, e.garment_image, "garment_parsing");
    check_pose(e.person_pose, "person_pose");
    check_pose(e.garment_pose, "garment_pose");
    if (e.ground_truth) check_image(*e.ground_truth, "ground_truth");
    return v;
}

// --- PNG codec --------------------------------------------------------------

uint8_t float_to_byte(float v) {
    float b = (v + 1.f) * 0.5f * 255.f;
    b = std::floor(b + 0.5f);
    if (b < 0.f) b = 0.f;
    if (b > 255.f) b = 255.f;
    return static_cast<uint8_t>(b);
}

float byte_to_float(uint8_t b) { return 2.f * (static_cast<float>(b) / 255.f) - 1.f; }

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Reads any 8-bit PNG, expanding to the requested channel count (1 or 3).
std::vector<uint8_t> read_png(const std::string& path, int want_channels, int& h, int& w) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw std::runtime_error(path + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": PNG decode error");
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (want_channels == 3 && (color_type == PNG_COLOR_TYPE_GRAY ||
                               color_type == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (want_channels == 1 && (color_type == PNG_COLOR_TYPE_RGB ||
                               color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
                               color_type == PNG_COLOR_TYPE_PALETTE)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": expected single-channel PNG");
    }
    png_read_update_info(png, info);

    h = static_cast<int>(png_get_image_height(png, info));
    w = static_cast<int>(png_get_image_width(png, info));
    const int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != want_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": expected " + std::to_string(want_channels) +
                                 "-channel PNG, got " + std::to_string(ch));
    }
    std::vector<uint8_t> out(size_t(h) * w * ch);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[size_t(y)] = out.data() + size_t(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png(const std::string& path, const uint8_t* data, int h, int w, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path + ": PNG encode error");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[size_t(y)] = const_cast<png_bytep>(data + size_t(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageRGB decode_png_rgb(const std::string& path) {
    int h = 0, w = 0;
    std::vector<uint8_t> bytes = read_png(path, 3, h, w);
    ImageRGB img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = byte_to_float(bytes[(size_t(y) * w + x) * 3 + c]);
    return img;
}

void encode_png_rgb(const ImageRGB& img, const std::string& path) {
    std::vector<uint8_t> bytes(size_t(img.h) * img.w * 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                bytes[(size_t(y) * img.w + x) * 3 + c] = float_to_byte(img.at(c, y, x));
    write_png(path, bytes.data(), img.h, img.w, 3);
}

ParsingMap decode_png_parsing(const std::string& path) {
    int h = 0, w = 0;
    std::vector<uint8_t> bytes = read_png(path, 1, h, w);
    ParsingMap p(h, w);
    for (size_t i = 0; i < bytes.size(); ++i) {
        if (bytes[i] >= kNumParseLabels)
            throw std::runtime_error(path + ": parsing label out of range");
        p.labels[i] = bytes[i];
    }
    return p;
}

void encode_png_parsing(const ParsingMap& p, const std::string& path) {
    write_png(path, p.labels.data(), p.h, p.w, 1);
}

// --- Pose JSON ---------------------------------------------------------------

PoseKeypoints load_pose_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    is >> j;
    const auto& kp = j.at("keypoints");
    if (kp.size() != kNumKeypoints)
        throw std::runtime_error(path + ": expected " + std::to_string(kNumKeypoints) +
                                 " keypoints");
    PoseKeypoints p;
    for (int k = 0; k < kNumKeypoints; ++k)
        for (int c = 0; c < 3; ++c) p.pts[size_t(k)][size_t(c)] = kp[size_t(k)].at(size_t(c)).get<float>();
    return p;
}

void save_pose_json(const PoseKeypoints& p, const std::string& path) {
    nlohmann::json kp = nlohmann::json::array();
    for (int k = 0; k < kNumKeypoints; ++k)
        kp.push_back({p.pts[size_t(k)][0], p.pts[size_t(k)][1], p.pts[size_t(k)][2]});
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << nlohmann::json{{"keypoints", kp}}.dump(1) << "\n";
}

// --- Image utilities ----------------------------------------------------------

ImageRGB downsample_box(const ImageRGB& img, int factor) {
    if (factor <= 0 || img.h % factor || img.w % factor)
        throw std::invalid_argument("downsample_box: size not divisible by factor");
    if (factor == 1) return img;
    ImageRGB out(img.h / factor, img.w / factor);
    const float inv = 1.f / (factor * factor);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                float s = 0.f;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += img.at(c, y * factor + dy, x * factor + dx);
                out.at(c, y, x) = s * inv;
            }
    return out;
}

ImageRGB upsample_bilinear(const ImageRGB& img, int out_h, int out_w) {
    ImageRGB out(out_h, out_w);
    const float sy = static_cast<float>(img.h) / out_h;
    const float sx = static_cast<float>(img.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const float fy = (y + 0.5f) * sy - 0.5f;
        int y0 = static_cast<int>(std::floor(fy));
        const float wy = fy - y0;
        int y1 = std::min(y0 + 1, img.h - 1);
        y0 = std::max(y0, 0);
        for (int x = 0; x < out_w; ++x) {
            const float fx = (x + 0.5f) * sx - 0.5f;
            int x0 = static_cast<int>(std::floor(fx));
            const float wx = fx - x0;
            int x1 = std::min(x0 + 1, img.w - 1);
            x0 = std::max(x0, 0);
            for (int c = 0; c < 3; ++c) {
                const float a = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const float b = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = a * (1 - wy) + b * wy;
            }
        }
    }
    return out;
}

ParsingMap downsample_nearest(const ParsingMap& p, int factor) {
    if (factor <= 0 || p.h % factor || p.w % factor)
        throw std::invalid_argument("downsample_nearest: size not divisible by factor");
    if (factor == 1) return p;
    ParsingMap out(p.h / factor, p.w / factor);
    // floor convention: dst(y, x) samples src(y * factor, x * factor)
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = p.at(y * factor, x * factor);
    return out;
}

ImageRGB crop(const ImageRGB& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.h || x0 + w > img.w)
        throw std::invalid_argument("crop: window outside image");
    ImageRGB out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

}  // namespace tryon
