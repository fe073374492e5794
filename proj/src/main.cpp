#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tryon/cascade.hpp"
#include "tryon/config.hpp"
#include "tryon/datamodel.hpp"
#include "tryon/evalmetrics.hpp"
#include "tryon/parallel_unet.hpp"
#include "tryon/preprocess.hpp"
#include "tryon/rng.hpp"
#include "tryon/synthpairs.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tryon;

namespace {

uint64_t file_fnv(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (is.read(buf, sizeof buf) || is.gcount() > 0)
        h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
    return h;
}

std::string hex64(uint64_t v) {
    char b[17];
    std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
    return b;
}

std::string git_describe() {
    FILE* f = popen("git describe --always --dirty 2>/dev/null", "r");
    if (!f) return "unknown";
    char buf[256];
    std::string out;
    while (fgets(buf, sizeof buf, f)) out += buf;
    pclose(f);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

// Hash every regular file beneath each output path (manifests excluded).
json hash_outputs(const std::vector<fs::path>& outputs) {
    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& o : outputs) {
        if (fs::is_directory(o)) {
            for (const auto& e : fs::recursive_directory_iterator(o)) {
                if (!e.is_regular_file()) continue;
                const fs::path rel = fs::relative(e.path(), o);
                if (rel.filename() == "manifest.json") continue;
                files.emplace_back((o.filename() / rel).generic_string(), e.path());
            }
        } else if (fs::is_regular_file(o)) {
            files.emplace_back(o.filename().generic_string(), o);
        }
    }
    std::sort(files.begin(), files.end());
    json h = json::object();
    for (const auto& [name, path] : files) h[name] = hex64(file_fnv(path));
    return h;
}

// RunManifest: enough to re-run the command and compare outputs byte for byte.
struct ManifestWriter {
    json j;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    ManifestWriter(int argc, char** argv) {
        j["command"] = json::array();
        for (int i = 0; i < argc; ++i) j["command"].push_back(argv[i]);
        j["git"] = git_describe();
        j["config"] = nullptr;
        j["seed"] = nullptr;
    }

    void finish(const std::vector<fs::path>& outputs, const fs::path& where) {
        j["output_hashes"] = hash_outputs(outputs);
        j["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const fs::path tmp = where.string() + ".tmp";
        {
            std::ofstream os(tmp);
            if (!os) throw std::runtime_error("cannot write " + tmp.string());
            os << j.dump(2) << "\n";
        }
        fs::rename(tmp, where);
    }
};

ManifestWriter* g_manifest = nullptr;

fs::path manifest_beside(const fs::path& out) {
    return fs::is_directory(out) ? out / "manifest.json"
                                 : fs::path(out.string() + ".manifest.json");
}

TrainMode parse_mode(const std::string& s) {
    if (s == "standard") return TrainMode::kStandard;
    if (s == "warp") return TrainMode::kWarp;
    if (s == "blend") return TrainMode::kBlend;
    throw std::invalid_argument("unknown train mode: " + s);
}

PoseKeypoints load_pose_any(const std::string& path, int h, int w) {
    PoseKeypoints p = load_pose_json(path);
    bool pixel_space = false;
    for (int k = 0; k < kNumKeypoints; ++k)
        if (p.visible(k) && (p.pts[size_t(k)][0] > 1.f || p.pts[size_t(k)][1] > 1.f))
            pixel_space = true;
    if (!pixel_space) return p;
    float raw[kNumKeypoints][3];
    for (int k = 0; k < kNumKeypoints; ++k)
        for (int c = 0; c < 3; ++c) raw[k][c] = p.pts[size_t(k)][size_t(c)];
    return normalize_keypoints(raw, kNumKeypoints, h, w);
}

PipelineCheckpointSet load_pipeline_dir(const std::string& dir) {
    PipelineCheckpointSet p;
    p.base_cfg = load_stage_config(dir + "/base.cfg");
    p.sr1_cfg = load_stage_config(dir + "/sr1.cfg");
    p.sr2_cfg = load_stage_config(dir + "/sr2.cfg");
    p.base = CheckpointManifest::load(
        dir + "/base.ckpt", checkpoint_hash_string(p.base_cfg, TrainMode::kStandard));
    p.sr1 = CheckpointManifest::load(
        dir + "/sr1.ckpt", checkpoint_hash_string(p.sr1_cfg, TrainMode::kStandard));
    p.sr2 = CheckpointManifest::load(
        dir + "/sr2.ckpt", checkpoint_hash_string(p.sr2_cfg, TrainMode::kStandard));
    return p;
}

std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no .png files in " + dir);
    return out;
}

// Held-out example directories, falling back to the training split for
// overfit-sized datasets; capped at n.
std::vector<std::string> eval_dirs(const std::string& data, size_t n) {
    const DatasetIndex idx = index_dataset(data);
    std::vector<std::string> dirs = idx.val_dirs.empty() ? idx.train_dirs : idx.val_dirs;
    if (dirs.size() > n) dirs.resize(n);
    return dirs;
}

// ---------------------------------------------------------------------------
// subcommands

void cmd_synth_gen(int n, uint64_t seed, int res, const std::string& out) {
    generate_dataset(n, seed, res, out);
    g_manifest->j["seed"] = seed;
    g_manifest->finish({out}, manifest_beside(out));
    std::cout << "wrote " << n << " examples to " << out << "\n";
}

void cmd_preprocess(const std::string& person, const std::string& person_parsing,
                    const std::string& person_pose, const std::string& garment,
                    const std::string& garment_parsing, const std::string& garment_pose,
                    const std::string& out_dir) {
    const ImageRGB pimg = decode_png_rgb(person);
    const ParsingMap pparse = decode_png_parsing(person_parsing);
    const PoseKeypoints ppose = load_pose_any(person_pose, pimg.h, pimg.w);
    const ImageRGB gimg = decode_png_rgb(garment);
    const ParsingMap gparse = decode_png_parsing(garment_parsing);
    const PoseKeypoints gpose = load_pose_any(garment_pose, gimg.h, gimg.w);

    fs::create_directories(out_dir);
    encode_png_rgb(clothing_agnostic_rgb(pimg, pparse, ppose), out_dir + "/agnostic.png");
    encode_png_rgb(segment_garment(gimg, gparse), out_dir + "/garment.png");
    save_pose_json(ppose, out_dir + "/person_pose.json");
    save_pose_json(gpose, out_dir + "/garment_pose.json");
    g_manifest->finish({out_dir}, manifest_beside(out_dir));
}

void cmd_train(const std::string& stage, const std::string& config, const std::string& data,
               uint64_t seed, const std::string& out, const std::string& mode_s) {
    const StageConfig sc = load_stage_config(config);
    if (sc.name != stage)
        throw std::runtime_error("config is for stage '" + sc.name + "', requested '" + stage +
                                 "'");
    const TrainMode mode = parse_mode(mode_s);
    g_manifest->j["seed"] = seed;
    g_manifest->j["config"] = stage_config_to_kv(sc);

    const CheckpointManifest ckpt = train_stage(sc, data, seed, mode, nullptr, &std::cout);
    if (const fs::path dir = fs::path(out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    ckpt.save(out);
    const fs::path cfg_out = fs::path(out).replace_extension(".cfg");
    save_stage_config(sc, cfg_out.string());
    g_manifest->finish({out, cfg_out}, manifest_beside(out));
}

void cmd_sample(const std::string& ckpts, const std::string& person,
                const std::string& person_parsing, const std::string& person_pose,
                const std::string& garment, const std::string& garment_parsing,
                const std::string& garment_pose, uint64_t seed, const std::string& out) {
    const PipelineCheckpointSet p = load_pipeline_dir(ckpts);
    TryOnExample ex;
    ex.person_image = decode_png_rgb(person);
    ex.person_parsing = decode_png_parsing(person_parsing);
    ex.person_pose = load_pose_any(person_pose, ex.person_image.h, ex.person_image.w);
    ex.garment_image = decode_png_rgb(garment);
    ex.garment_parsing = decode_png_parsing(garment_parsing);
    ex.garment_pose = load_pose_any(garment_pose, ex.garment_image.h, ex.garment_image.w);
    g_manifest->j["seed"] = seed;
    g_manifest->j["config"] = stage_config_to_kv(p.base_cfg) + stage_config_to_kv(p.sr1_cfg) +
                              stage_config_to_kv(p.sr2_cfg);

    const ImageRGB result = sample_pipeline(p, ex, seed);
    if (const fs::path dir = fs::path(out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    encode_png_rgb(result, out);
    g_manifest->finish({out}, manifest_beside(out));
}

void cmd_evaluate(const std::string& real_dir, const std::string& fake_dir,
                  const std::string& metrics, uint64_t seed, const std::string& out) {
    std::vector<ImageRGB> real, fake;
    for (const auto& p : list_pngs(real_dir)) real.push_back(decode_png_rgb(p.string()));
    for (const auto& p : list_pngs(fake_dir)) fake.push_back(decode_png_rgb(p.string()));

    json report;
    report["real"] = real_dir;
    report["fake"] = fake_dir;
    report["n_real"] = real.size();
    report["n_fake"] = fake.size();

    std::vector<std::string> wanted;
    std::stringstream ss(metrics);
    for (std::string m; std::getline(ss, m, ',');) wanted.push_back(m);

    FeatureSet fr, ff;
    bool have_features = false;
    const std::string extractor = "rconv64/" + std::to_string(seed);
    for (const auto& m : wanted) {
        if (m == "fid" || m == "kid") {
            if (!have_features) {
                fr = extract_features(real, extractor);
                ff = extract_features(fake, extractor);
                have_features = true;
            }
            report[m] = m == "fid" ? fid(ff, fr) : kid(ff, fr);
        } else if (m == "psnr" || m == "ssim") {
            if (real.size() != fake.size())
                throw std::runtime_error(m + " needs equally sized, aligned directories");
            double acc = 0;
            for (size_t i = 0; i < real.size(); ++i)
                acc += m == "psnr" ? psnr(fake[i], real[i]) : ssim(fake[i], real[i]);
            report[m] = acc / double(real.size());
        } else {
            throw std::runtime_error("unknown metric: " + m);
        }
    }
    report["extractor"] = extractor;
    g_manifest->j["seed"] = seed;
    std::cout << report.dump(2) << "\n";
    if (!out.empty()) {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << report.dump(2) << "\n";
        os.close();
        g_manifest->finish({out}, manifest_beside(out));
    }
}

void save_set(const std::vector<ImageRGB>& imgs, const fs::path& dir) {
    fs::create_directories(dir);
    for (size_t i = 0; i < imgs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.png", i);
        encode_png_rgb(imgs[i], (dir / name).string());
    }
}

void cmd_ablate(const std::string& mode, const std::string& config, const std::string& data,
                uint64_t seed, const std::string& out, int eval_n) {
    StageConfig cfg = config.empty() ? desk_base_config() : load_stage_config(config);
    if (cfg.name != "base") throw std::runtime_error("ablate needs a base-stage config");
    g_manifest->j["seed"] = seed;
    g_manifest->j["config"] = stage_config_to_kv(cfg);
    fs::create_directories(out);

    // score on unpaired try-on combos: person from one held-out example, garment
    // from the next, with the exact counterfactual render as the reference set
    const std::vector<std::string> dirs = eval_dirs(data, size_t(eval_n));
    std::vector<TryOnExample> examples;
    std::vector<Rendered> oracles;
    std::vector<ImageRGB> real;
    for (size_t i = 0; i < dirs.size(); ++i) {
        const std::string& dp = dirs[i];
        const std::string& dg = dirs[(i + 1) % dirs.size()];
        TryOnExample ep = load_example(dp);
        TryOnExample eg = load_example(dg);
        const int f = ep.person_image.h / cfg.target_resolution;
        ep = downsample_example(ep, f);
        eg = downsample_example(eg, f);
        TryOnExample ex;
        ex.person_image = ep.person_image;
        ex.person_parsing = ep.person_parsing;
        ex.person_pose = ep.person_pose;
        ex.garment_image = eg.garment_image;
        ex.garment_parsing = eg.garment_parsing;
        ex.garment_pose = eg.garment_pose;
        examples.push_back(ex);
        const ExampleSpec sp = load_example_spec(dp + "/spec.json");
        const ExampleSpec sg = load_example_spec(dg + "/spec.json");
        FigureSpec fig = sp.figure;
        fig.pose = sp.pose_a;
        oracles.push_back(render(fig, &sg.garment, cfg.target_resolution));
        real.push_back(oracles.back().image);
    }
    save_set(real, fs::path(out) / "real");

    json results;
    results["mode"] = mode;
    results["examples"] = dirs;

    if (mode == "concat") {
        StageConfig cross = cfg;
        cross.unet.variant = UNetVariant::kParallel;
        StageConfig concat = cfg;
        concat.unet.variant = UNetVariant::kConcat;
        const CheckpointManifest ck_cross =
            train_stage(cross, data, seed, TrainMode::kStandard, nullptr, &std::cout);
        const CheckpointManifest ck_concat =
            train_stage(concat, data, seed, TrainMode::kStandard, nullptr, &std::cout);

        std::vector<ImageRGB> fa, fb;
        for (size_t i = 0; i < examples.size(); ++i) {
            const uint64_t s = Rng::derive(seed, 1000 + i);
            fa.push_back(sample_base_stage(cross, ck_cross, examples[i], s));
            fb.push_back(sample_base_stage(concat, ck_concat, examples[i], s));
        }
        save_set(fa, fs::path(out) / "cross");
        save_set(fb, fs::path(out) / "concat");
        const FeatureSet r = extract_features(real);
        const double fid_a = fid(extract_features(fa), r);
        const double fid_b = fid(extract_features(fb), r);
        results["fid_cross"] = fid_a;
        results["fid_concat"] = fid_b;
        results["cross_attention_lower"] = fid_a < fid_b;
    } else if (mode == "sequenced") {
        const CheckpointManifest ck_uni =
            train_stage(cfg, data, seed, TrainMode::kStandard, nullptr, &std::cout);
        const auto [ck_warp, ck_blend] = train_sequenced_ablation(cfg, data, seed, &std::cout);
        StageConfig warp_cfg = cfg;
        warp_cfg.unet.use_agnostic = false;

        std::vector<ImageRGB> fu, fsq;
        double mae_uni = 0, mae_seq = 0;
        for (size_t i = 0; i < examples.size(); ++i) {
            const uint64_t s = Rng::derive(seed, 1000 + i);
            const TryOnExample& e = examples[i];
            fu.push_back(sample_base_stage(cfg, ck_uni, e, s));
            const ImageRGB warped =
                sample_base_stage(warp_cfg, ck_warp, e, Rng::derive(s, 1), TrainMode::kWarp);
            fsq.push_back(sample_base_stage(cfg, ck_blend, e, Rng::derive(s, 2),
                                            TrainMode::kBlend, &warped));
            const Rendered& oracle = oracles[i];
            std::vector<uint8_t> mask(oracle.parsing.labels.size());
            for (size_t j = 0; j < mask.size(); ++j)
                mask[j] = oracle.parsing.labels[j] == kUpperGarment ? 1 : 0;
            const int R = cfg.target_resolution;
            mae_uni += boundary_band_mae(fu.back(), oracle.image, mask, R, R, 2);
            mae_seq += boundary_band_mae(fsq.back(), oracle.image, mask, R, R, 2);
        }
        mae_uni /= double(examples.size());
        mae_seq /= double(examples.size());
        save_set(fu, fs::path(out) / "unified");
        save_set(fsq, fs::path(out) / "sequenced");
        const FeatureSet r = extract_features(real);
        const double fid_u = fid(extract_features(fu), r);
        const double fid_s = fid(extract_features(fsq), r);
        results["fid_unified"] = fid_u;
        results["fid_sequenced"] = fid_s;
        results["boundary_mae_unified"] = mae_uni;
        results["boundary_mae_sequenced"] = mae_seq;
        results["unified_lower_fid"] = fid_u < fid_s;
        results["unified_lower_boundary_mae"] = mae_uni < mae_seq;
    } else {
        throw std::runtime_error("unknown ablation mode: " + mode);
    }

    {
        std::ofstream os(fs::path(out) / "results.json");
        os << results.dump(2) << "\n";
    }
    std::cout << results.dump(2) << "\n";
    g_manifest->finish({out}, manifest_beside(out));
}

void cmd_grid_search_tna(const std::string& ckpts, const std::string& data,
                         const std::vector<double>& levels, uint64_t seed,
                         const std::string& out, int eval_n) {
    const PipelineCheckpointSet p = load_pipeline_dir(ckpts);
    std::vector<TryOnExample> examples;
    for (const auto& d : eval_dirs(data, size_t(eval_n))) examples.push_back(load_example(d));
    g_manifest->j["seed"] = seed;

    const NoiseAugLevels best = grid_search_tna(p, examples, levels, seed);
    json j = {{"agnostic", best.agnostic}, {"garment", best.garment}, {"low_res", best.low_res}};
    std::cout << j.dump(2) << "\n";
    {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out);
        os << "tna.agnostic=" << best.agnostic << "\n"
           << "tna.garment=" << best.garment << "\n"
           << "tna.low_res=" << best.low_res << "\n";
    }
    g_manifest->finish({out}, manifest_beside(out));
}

void cmd_param_count(const std::string& config) {
    const StageConfig sc = load_stage_config(config);
    json j;
    int64_t total = 0;
    for (const auto& [name, n] : TryOnUNet<float>::count_params_by_module(sc.unet)) {
        j["modules"][name] = n;
        total += n;
    }
    j["total"] = total;
    std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cascaded try-on diffusion toolkit"};
    app.require_subcommand(1);
    ManifestWriter manifest(argc, argv);
    g_manifest = &manifest;

    // synth-gen
    auto* sg = app.add_subcommand("synth-gen", "generate a synthetic paired dataset");
    int sg_n = 0, sg_res = 256;
    uint64_t sg_seed = 0;
    std::string sg_out;
    sg->add_option("--n", sg_n, "number of examples")->required();
    sg->add_option("--seed", sg_seed, "rng seed")->required();
    sg->add_option("--res", sg_res, "image resolution")->required();
    sg->add_option("--out", sg_out, "output directory")->required();
    sg->callback([&] { cmd_synth_gen(sg_n, sg_seed, sg_res, sg_out); });

    // preprocess
    auto* pp = app.add_subcommand("preprocess", "derive agnostic/garment inputs from raw files");
    std::string pp_p, pp_pp, pp_pj, pp_g, pp_gp, pp_gj, pp_out;
    pp->add_option("--person", pp_p, "person RGB png")->required();
    pp->add_option("--person-parsing", pp_pp, "person parsing png")->required();
    pp->add_option("--person-pose", pp_pj, "person pose json")->required();
    pp->add_option("--garment", pp_g, "garment-wearer RGB png")->required();
    pp->add_option("--garment-parsing", pp_gp, "garment-wearer parsing png")->required();
    pp->add_option("--garment-pose", pp_gj, "garment-wearer pose json")->required();
    pp->add_option("--out-dir", pp_out, "output directory")->required();
    pp->callback([&] { cmd_preprocess(pp_p, pp_pp, pp_pj, pp_g, pp_gp, pp_gj, pp_out); });

    // train
    auto* tr = app.add_subcommand("train", "train one cascade stage");
    std::string tr_stage, tr_cfg, tr_data, tr_out, tr_mode = "standard";
    uint64_t tr_seed = 0;
    tr->add_option("--stage", tr_stage, "base | sr1 | sr2")
        ->required()
        ->check(CLI::IsMember({"base", "sr1", "sr2"}));
    tr->add_option("--config", tr_cfg, "stage config file")->required();
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--seed", tr_seed, "rng seed")->required();
    tr->add_option("--out", tr_out, "output checkpoint path")->required();
    tr->add_option("--mode", tr_mode, "standard | warp | blend")
        ->check(CLI::IsMember({"standard", "warp", "blend"}));
    tr->callback([&] { cmd_train(tr_stage, tr_cfg, tr_data, tr_seed, tr_out, tr_mode); });

    // sample
    auto* sa = app.add_subcommand("sample", "run the full cascade on one person/garment pair");
    std::string sa_ck, sa_p, sa_pp, sa_pj, sa_g, sa_gp, sa_gj, sa_out;
    uint64_t sa_seed = 0;
    sa->add_option("--ckpts", sa_ck, "pipeline checkpoint directory")->required();
    sa->add_option("--person", sa_p, "person RGB png")->required();
    sa->add_option("--person-parsing", sa_pp, "person parsing png")->required();
    sa->add_option("--person-pose", sa_pj, "person pose json")->required();
    sa->add_option("--garment", sa_g, "garment-wearer RGB png")->required();
    sa->add_option("--garment-parsing", sa_gp, "garment-wearer parsing png")->required();
    sa->add_option("--garment-pose", sa_gj, "garment-wearer pose json")->required();
    sa->add_option("--seed", sa_seed, "rng seed")->required();
    sa->add_option("--out", sa_out, "output png")->required();
    sa->callback([&] {
        cmd_sample(sa_ck, sa_p, sa_pp, sa_pj, sa_g, sa_gp, sa_gj, sa_seed, sa_out);
    });

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compare two image directories");
    std::string ev_real, ev_fake, ev_metrics = "fid,kid,psnr,ssim", ev_out;
    uint64_t ev_seed = 0;
    ev->add_option("--real", ev_real, "reference image directory")->required();
    ev->add_option("--fake", ev_fake, "generated image directory")->required();
    ev->add_option("--metrics", ev_metrics, "comma list from fid,kid,psnr,ssim");
    ev->add_option("--seed", ev_seed, "feature extractor seed");
    ev->add_option("--out", ev_out, "optional report file");
    ev->callback([&] { cmd_evaluate(ev_real, ev_fake, ev_metrics, ev_seed, ev_out); });

    // ablate
    auto* ab = app.add_subcommand("ablate", "train and score an ablation at the base stage");
    std::string ab_mode, ab_cfg, ab_data, ab_out;
    uint64_t ab_seed = 0;
    int ab_n = 16;
    ab->add_option("--mode", ab_mode, "concat | sequenced")
        ->required()
        ->check(CLI::IsMember({"concat", "sequenced"}));
    ab->add_option("--config", ab_cfg, "base stage config (default: desk base)");
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--seed", ab_seed, "rng seed")->required();
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--eval-n", ab_n, "held-out examples to score");
    ab->callback([&] { cmd_ablate(ab_mode, ab_cfg, ab_data, ab_seed, ab_out, ab_n); });

    // grid-search-tna
    auto* gs = app.add_subcommand("grid-search-tna",
                                  "pick inference noise-aug levels on held-out data");
    std::string gs_ck, gs_data, gs_out;
    std::vector<double> gs_levels;
    uint64_t gs_seed = 0;
    int gs_n = 8;
    gs->add_option("--ckpts", gs_ck, "pipeline checkpoint directory")->required();
    gs->add_option("--data", gs_data, "dataset directory")->required();
    gs->add_option("--levels", gs_levels, "candidate levels")->required()->delimiter(',');
    gs->add_option("--seed", gs_seed, "rng seed")->required();
    gs->add_option("--out", gs_out, "output key-value file")->required();
    gs->add_option("--eval-n", gs_n, "held-out examples to score");
    gs->callback([&] { cmd_grid_search_tna(gs_ck, gs_data, gs_levels, gs_seed, gs_out, gs_n); });

    // param-count
    auto* pc = app.add_subcommand("param-count", "print trainable parameter totals");
    std::string pc_cfg;
    pc->add_option("--config", pc_cfg, "stage config file")->required();
    pc->callback([&] { cmd_param_count(pc_cfg); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
