// End-to-end checks of the command-line tool against the library.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "testutil.hpp"
#include "tryon/cascade.hpp"
#include "tryon/parallel_unet.hpp"
#include "tryon/preprocess.hpp"
#include "tryon/synthpairs.hpp"

using namespace tryon;
namespace fs = std::filesystem;

namespace {

const char* kCli = TRYON_CLI_PATH;

fs::path g_work;

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

int run(const std::string& args, std::string* out = nullptr, std::string* err = nullptr) {
    const fs::path so = g_work / "stdout.txt", se = g_work / "stderr.txt";
    const std::string cmd = std::string(kCli) + " " + args + " >" + so.string() + " 2>" +
                            se.string();
    const int rc = std::system(cmd.c_str());
    if (out) *out = slurp(so);
    if (err) *err = slurp(se);
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

StageConfig tiny_base() {
    StageConfig s;
    s.name = "base";
    s.target_resolution = 32;
    s.unet.resolutions = {32, 16};
    s.unet.channels = {8, 8};
    s.unet.block_repeats = {1, 1};
    s.unet.attention_resolutions = {16};
    s.unet.garment_stop_resolution = 16;
    s.unet.num_heads = 2;
    s.unet.pose_embed_dim = 8;
    s.unet.emb_dim = 16;
    s.sampler = {SamplerKind::kDDPM, 2, 1.0, 0.0};
    s.train = {2, 2, 1, 1e-4, 0.1, false};
    return s;
}

void test_bad_invocations() {
    std::string err;
    REQUIRE(run("", nullptr, &err) == 2);

    REQUIRE(run("synth-gen --n 1 --seed 0 --res 32 --out x --bogus", nullptr, &err) == 2);
    REQUIRE(err.find("bogus") != std::string::npos);

    REQUIRE(run("synth-gen --n 1 --seed 0 --res 32", nullptr, &err) == 2);  // missing --out

    // runtime failures exit 1
    REQUIRE(run("param-count --config " + (g_work / "missing.cfg").string()) == 1);
}

void test_synth_gen_and_preprocess() {
    const fs::path d1 = g_work / "gen1", d2 = g_work / "gen2";
    REQUIRE(run("synth-gen --n 4 --seed 9 --res 32 --out " + d1.string()) == 0);
    REQUIRE(run("synth-gen --n 4 --seed 9 --res 32 --out " + d2.string()) == 0);
    REQUIRE(fs::exists(d1 / "manifest.json"));
    for (int i = 0; i < 4; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "ex%05d", i);
        REQUIRE(slurp(d1 / name / "person.png") == slurp(d2 / name / "person.png"));
        REQUIRE(slurp(d1 / name / "spec.json") == slurp(d2 / name / "spec.json"));
    }

    const fs::path ex = d1 / "ex00000", pre = g_work / "pre";
    REQUIRE(run("preprocess --person " + (ex / "person.png").string() +
                " --person-parsing " + (ex / "person_parsing.png").string() +
                " --person-pose " + (ex / "person_pose.json").string() +
                " --garment " + (ex / "garment.png").string() +
                " --garment-parsing " + (ex / "garment_parsing.png").string() +
                " --garment-pose " + (ex / "garment_pose.json").string() +
                " --out-dir " + pre.string()) == 0);
    for (const char* f : {"agnostic.png", "garment.png", "person_pose.json",
                          "garment_pose.json", "manifest.json"})
        REQUIRE(fs::exists(pre / f));

    // outputs agree with the library run on the same decoded inputs
    const ImageRGB person = decode_png_rgb((ex / "person.png").string());
    const ParsingMap parsing = decode_png_parsing((ex / "person_parsing.png").string());
    const PoseKeypoints pose = load_pose_json((ex / "person_pose.json").string());
    const ImageRGB want = clothing_agnostic_rgb(person, parsing, pose);
    const ImageRGB got = decode_png_rgb((pre / "agnostic.png").string());
    REQUIRE(got.pix.size() == want.pix.size());
    float worst = 0.f;
    for (size_t i = 0; i < want.pix.size(); ++i)
        worst = std::max(worst, std::fabs(got.pix[i] - want.pix[i]));
    REQUIRE(worst <= 1.f / 255.f + 1e-6f);  // masked zeros re-quantize

    const ImageRGB garment = decode_png_rgb((ex / "garment.png").string());
    const ParsingMap gparse = decode_png_parsing((ex / "garment_parsing.png").string());
    const ImageRGB wg = segment_garment(garment, gparse);
    const ImageRGB gg = decode_png_rgb((pre / "garment.png").string());
    worst = 0.f;
    for (size_t i = 0; i < wg.pix.size(); ++i)
        worst = std::max(worst, std::fabs(gg.pix[i] - wg.pix[i]));
    REQUIRE(worst <= 1.f / 255.f + 1e-6f);
}

void test_train() {
    const StageConfig sc = tiny_base();
    const fs::path cfg = g_work / "base.cfg";
    save_stage_config(sc, cfg.string());

    const fs::path data = g_work / "gen1";
    const fs::path ckpt = g_work / "run" / "base.ckpt";
    REQUIRE(run("train --stage base --config " + cfg.string() + " --data " + data.string() +
                " --seed 21 --out " + ckpt.string()) == 0);
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(g_work / "run" / "base.cfg"));
    REQUIRE(fs::exists(fs::path(ckpt.string() + ".manifest.json")));

    // the CLI is a thin wrapper: checkpoint matches an in-process run
    const CheckpointManifest got = CheckpointManifest::load(
        ckpt.string(), checkpoint_hash_string(sc, TrainMode::kStandard));
    const CheckpointManifest want = train_stage(sc, data.string(), 21);
    REQUIRE(got.arrays.size() == want.arrays.size());
    for (size_t i = 0; i < want.arrays.size(); ++i)
        REQUIRE(got.arrays[i].data == want.arrays[i].data);

    // stage/config mismatch is rejected
    REQUIRE(run("train --stage sr1 --config " + cfg.string() + " --data " + data.string() +
                " --seed 21 --out " + (g_work / "x.ckpt").string()) == 1);
}

void test_evaluate() {
    const fs::path real = g_work / "eval_real", fake = g_work / "eval_fake";
    fs::create_directories(real);
    fs::create_directories(fake);
    Rng rng(2);
    for (int i = 0; i < 4; ++i) {
        ImageRGB img(32, 32);
        for (auto& v : img.pix)
            v = byte_to_float(static_cast<uint8_t>(rng.uniform_int(256)));
        char name[16];
        std::snprintf(name, sizeof name, "%02d.png", i);
        encode_png_rgb(img, (real / name).string());
        for (auto& v : img.pix) v = std::min(1.f, v + 0.1f);
        encode_png_rgb(img, (fake / name).string());
    }
    std::string out;
    const fs::path report = g_work / "report.json";
    REQUIRE(run("evaluate --real " + real.string() + " --fake " + fake.string() +
                " --metrics fid,kid,psnr --seed 3 --out " + report.string(), &out) == 0);
    REQUIRE(out.find("\"fid\"") != std::string::npos);
    REQUIRE(out.find("\"psnr\"") != std::string::npos);
    REQUIRE(out.find("rconv64/3") != std::string::npos);
    REQUIRE(slurp(report).find("\"fid\"") != std::string::npos);

    REQUIRE(run("evaluate --real " + real.string() + " --fake " + fake.string() +
                " --metrics nope") == 1);
    REQUIRE(run("evaluate --real " + (g_work / "void").string() + " --fake " + fake.string()) ==
            1);
}

void test_param_count() {
    StageConfig sc;
    sc.name = "base";
    sc.target_resolution = 128;
    sc.unet = paper_128_config();
    sc.train.iterations = 0;
    const fs::path cfg = g_work / "paper128.cfg";
    save_stage_config(sc, cfg.string());

    std::string out;
    REQUIRE(run("param-count --config " + cfg.string(), &out) == 0);
    const std::string key = "\"total\": ";
    const size_t pos = out.find(key);
    REQUIRE(pos != std::string::npos);
    long long total = 0;
    if (pos != std::string::npos) {
        std::istringstream is(out.substr(pos + key.size()));
        is >> total;
    }
    REQUIRE(total == param_count(paper_128_config()));
    REQUIRE(out.find("\"person\"") != std::string::npos);
    REQUIRE(out.find("\"garment\"") != std::string::npos);
}

}  // namespace

int main() {
    g_work = fs::temp_directory_path() / "tryon_test_cli";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    test_bad_invocations();
    test_synth_gen_and_preprocess();
    test_train();
    test_evaluate();
    test_param_count();

    fs::remove_all(g_work);
    return test_finish("test_cli");
}
