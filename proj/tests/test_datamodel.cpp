// Domain types, PNG/JSON codecs, and image utilities.
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "testutil.hpp"
#include "tryon/datamodel.hpp"
#include "tryon/rng.hpp"

using namespace tryon;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    fs::path p = fs::temp_directory_path() / "tryon_test_datamodel";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

ImageRGB random_quantized_image(int h, int w, Rng& rng) {
    ImageRGB img(h, w);
    for (auto& v : img.pix) v = byte_to_float(static_cast<uint8_t>(rng.uniform_int(256)));
    return img;
}

TryOnExample valid_example() {
    TryOnExample e;
    e.person_image = ImageRGB(16, 16, 0.25f);
    e.garment_image = ImageRGB(16, 16, -0.5f);
    e.person_parsing = ParsingMap(16, 16, kHead);
    e.garment_parsing = ParsingMap(16, 16, kUpperGarment);
    for (int k = 0; k < kNumKeypoints; ++k) {
        e.person_pose.pts[size_t(k)] = {0.5f, 0.5f, 1.f};
        e.garment_pose.pts[size_t(k)] = {0.f, 0.f, 0.f};
    }
    e.ground_truth = e.person_image;
    return e;
}

void test_codec_endpoints() {
    REQUIRE(byte_to_float(0) == -1.f);
    REQUIRE(byte_to_float(255) == 1.f);
    REQUIRE_NEAR(byte_to_float(128), 0.003922, 1e-5);
    REQUIRE_NEAR(byte_to_float(128), 2.0 * 128.0 / 255.0 - 1.0, 1e-7);
    REQUIRE(float_to_byte(-1.f) == 0);
    REQUIRE(float_to_byte(1.f) == 255);
    REQUIRE(float_to_byte(-2.f) == 0);    // clamped
    REQUIRE(float_to_byte(2.f) == 255);   // clamped
    for (int b = 0; b < 256; ++b)
        REQUIRE(float_to_byte(byte_to_float(static_cast<uint8_t>(b))) == b);
}

void test_png_roundtrip(const fs::path& dir) {
    Rng rng(1);
    ImageRGB img(24, 17);
    for (auto& v : img.pix) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const fs::path p = dir / "a.png";
    encode_png_rgb(img, p.string());
    const ImageRGB back = decode_png_rgb(p.string());
    REQUIRE(back.h == img.h && back.w == img.w);
    float worst = 0.f;
    for (size_t i = 0; i < img.pix.size(); ++i)
        worst = std::max(worst, std::fabs(back.pix[i] - img.pix[i]));
    REQUIRE(worst <= 1.f / 255.f + 1e-6f);

    // quantized data round-trips bitwise, and re-encoding reproduces the file
    const ImageRGB q = random_quantized_image(9, 13, rng);
    const fs::path pq = dir / "q.png";
    encode_png_rgb(q, pq.string());
    const ImageRGB qb = decode_png_rgb(pq.string());
    REQUIRE(qb.pix == q.pix);
    const fs::path pq2 = dir / "q2.png";
    encode_png_rgb(qb, pq2.string());
    REQUIRE(slurp(pq) == slurp(pq2));

    const fs::path bad = dir / "bad.png";
    std::ofstream(bad) << "not a png";
    REQUIRE_THROWS(decode_png_rgb(bad.string()));
    REQUIRE_THROWS(decode_png_rgb((dir / "missing.png").string()));
}

void test_parsing_roundtrip(const fs::path& dir) {
    ParsingMap p(6, 7);
    for (size_t i = 0; i < p.labels.size(); ++i)
        p.labels[i] = static_cast<uint8_t>(i % kNumParseLabels);
    const fs::path f = dir / "p.png";
    encode_png_parsing(p, f.string());
    const ParsingMap back = decode_png_parsing(f.string());
    REQUIRE(back.h == p.h && back.w == p.w);
    REQUIRE(back.labels == p.labels);
}

void test_pose_roundtrip(const fs::path& dir) {
    PoseKeypoints p;
    for (int k = 0; k < kNumKeypoints; ++k)
        p.pts[size_t(k)] = {k / 20.f, k / 30.f, k % 2 ? 1.f : 0.f};
    for (int k = 0; k < kNumKeypoints; ++k)
        if (k % 2 == 0) p.pts[size_t(k)] = {0.f, 0.f, 0.f};
    const fs::path f = dir / "pose.json";
    save_pose_json(p, f.string());
    const PoseKeypoints back = load_pose_json(f.string());
    for (int k = 0; k < kNumKeypoints; ++k)
        for (int c = 0; c < 3; ++c)
            REQUIRE_NEAR(back.pts[size_t(k)][size_t(c)], p.pts[size_t(k)][size_t(c)], 1e-6);
    REQUIRE(back.visible(1));
    REQUIRE(!back.visible(0));
}

void test_validate() {
    REQUIRE(validate_example(valid_example()).empty());

    TryOnExample e = valid_example();
    e.person_pose.pts[3] = {1.5f, 0.5f, 1.f};
    auto v = validate_example(e);
    REQUIRE(v.size() == 1);
    REQUIRE(!v.empty() && v[0].find("person_pose") != std::string::npos);

    e = valid_example();
    e.person_parsing = ParsingMap(8, 8, kHead);
    v = validate_example(e);
    REQUIRE(v.size() == 1);
    REQUIRE(!v.empty() && v[0].find("person_parsing") != std::string::npos);

    e = valid_example();
    e.garment_image.pix[5] = 1.5f;
    REQUIRE(validate_example(e).size() == 1);

    e = valid_example();
    e.person_parsing.labels[0] = 6;
    REQUIRE(validate_example(e).size() == 1);

    e = valid_example();
    e.garment_pose.pts[2] = {0.25f, 0.f, 0.f};  // invisible point must be zeroed
    REQUIRE(validate_example(e).size() == 1);
}

void test_image_utils() {
    // box downsample averages 2x2 blocks exactly
    ImageRGB img(4, 4);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) img.at(c, y, x) = static_cast<float>(y * 4 + x) / 16.f;
    const ImageRGB d = downsample_box(img, 2);
    REQUIRE(d.h == 2 && d.w == 2);
    REQUIRE_NEAR(d.at(0, 0, 0), (0 + 1 + 4 + 5) / 4.0 / 16.0, 1e-6);
    REQUIRE_NEAR(d.at(0, 1, 1), (10 + 11 + 14 + 15) / 4.0 / 16.0, 1e-6);

    const ImageRGB up = upsample_bilinear(ImageRGB(3, 3, 0.5f), 7, 9);
    REQUIRE(up.h == 7 && up.w == 9);
    for (float v : up.pix) REQUIRE_NEAR(v, 0.5f, 1e-6);

    const ImageRGB c = crop(img, 1, 2, 2, 2);
    REQUIRE(c.h == 2 && c.w == 2);
    REQUIRE_NEAR(c.at(0, 0, 0), img.at(0, 1, 2), 1e-7);
    REQUIRE_NEAR(c.at(2, 1, 1), img.at(2, 2, 3), 1e-7);

    ParsingMap p(4, 4, kBackground);
    p.at(2, 2) = kHead;
    const ParsingMap pd = downsample_nearest(p, 2);
    REQUIRE(pd.h == 2 && pd.w == 2);
    REQUIRE(pd.at(1, 1) == kHead);
}

}  // namespace

int main() {
    const fs::path dir = tmpdir();
    test_codec_endpoints();
    test_png_roundtrip(dir);
    test_parsing_roundtrip(dir);
    test_pose_roundtrip(dir);
    test_validate();
    test_image_utils();
    fs::remove_all(dir);
    return test_finish("test_datamodel");
}
