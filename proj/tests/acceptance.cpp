// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Fast numerical criteria run first; the training-heavy studies
// follow and stream progress so long runs stay observable.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"
#include "tryon/cascade.hpp"
#include "tryon/diffcore.hpp"
#include "tryon/evalmetrics.hpp"
#include "tryon/nn.hpp"
#include "tryon/parallel_unet.hpp"
#include "tryon/preprocess.hpp"
#include "tryon/synthpairs.hpp"

using namespace tryon;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_work;
int g_failed = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void run_criterion(int id, const std::string& label,
                   const std::function<bool(std::string*)>& fn) {
    const auto t0 = Clock::now();
    bool ok = false;
    std::string note;
    try {
        ok = fn(&note);
    } catch (const std::exception& e) {
        ok = false;
        note = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    std::ostringstream line;
    line << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << label << " ("
         << std::fixed << secs << "s)";
    if (!note.empty()) line << "  -- " << note;
    std::cout << line.str() << std::endl;
    if (!ok) ++g_failed;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient checks

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

using BlockFn =
    std::function<nn::Var<double>(Tape<double>&, const std::vector<nn::Var<double>>&)>;

// Central finite differences against tape gradients over every input element.
double block_gradcheck(std::vector<Tensor<double>> vals, const BlockFn& f) {
    std::vector<Tensor<double>> grads(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) grads[i] = Tensor<double>::zeros(vals[i].shape);
    {
        Tape<double> tp;
        std::vector<nn::Var<double>> vs;
        for (size_t i = 0; i < vals.size(); ++i) vs.push_back(tp.param(&vals[i], &grads[i]));
        tp.backward(f(tp, vs));
    }
    auto eval = [&]() {
        Tape<double> tp;
        std::vector<nn::Var<double>> vs;
        std::vector<Tensor<double>> sink(vals.size());
        for (size_t i = 0; i < vals.size(); ++i)
            vs.push_back(tp.param(&vals[i], &sink[i], false));
        return tp.val(f(tp, vs)).data[0];
    };
    const double h = 1e-5;
    double worst = 0;
    for (size_t i = 0; i < vals.size(); ++i)
        for (int64_t j = 0; j < vals[i].numel(); ++j) {
            const double save = vals[i].data[size_t(j)];
            vals[i].data[size_t(j)] = save + h;
            const double up = eval();
            vals[i].data[size_t(j)] = save - h;
            const double dn = eval();
            vals[i].data[size_t(j)] = save;
            const double fd = (up - dn) / (2 * h);
            const double an = grads[i].numel() ? grads[i].data[size_t(j)] : 0.0;
            worst = std::max(worst,
                             std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)}));
        }
    return worst;
}

double all_block_gradchecks() {
    Rng rng(51);
    double worst = 0;

    {  // conv2d
        const Tensor<double> tgt = random_tensor({1, 3, 4, 4}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({1, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng, 0.4),
             random_tensor({3}, rng, 0.2)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::conv2d(tp, v[0], v[1], v[2]), tgt);
            }));
    }
    {  // linear
        const Tensor<double> tgt = random_tensor({2, 3, 5}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({2, 3, 4}, rng), random_tensor({5, 4}, rng, 0.5),
             random_tensor({5}, rng, 0.2)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::linear(tp, v[0], v[1], v[2]), tgt);
            }));
    }
    {  // group_norm
        const Tensor<double> tgt = random_tensor({2, 8, 2, 2}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({2, 8, 2, 2}, rng), random_tensor({8}, rng, 0.3),
             random_tensor({8}, rng, 0.3)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::group_norm(tp, v[0], v[1], v[2], 2), tgt);
            }));
    }
    {  // film
        const Tensor<double> tgt = random_tensor({1, 4, 3, 3}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({1, 4, 3, 3}, rng), random_tensor({1, 8}, rng, 0.5)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::film(tp, v[0], v[1]), tgt);
            }));
    }
    {  // swish
        const Tensor<double> tgt = random_tensor({2, 7}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({2, 7}, rng)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::swish(tp, v[0]), tgt);
            }));
    }
    {  // masked multi-head attention
        const Tensor<double> tgt = random_tensor({2, 3, 4}, rng);
        auto mask = std::make_shared<Tensor<uint8_t>>(std::vector<int64_t>{2, 5});
        const uint8_t m0[5] = {1, 1, 0, 1, 0}, m1[5] = {0, 1, 1, 1, 1};
        for (int64_t j = 0; j < 5; ++j) {
            mask->at2(0, j) = m0[j];
            mask->at2(1, j) = m1[j];
        }
        worst = std::max(worst, block_gradcheck(
            {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng),
             random_tensor({2, 5, 4}, rng)},
            [tgt, mask](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(tp, nn::attention(tp, v[0], v[1], v[2], 2, mask), tgt);
            }));
    }
    {  // pooling / upsampling
        const Tensor<double> tgt = random_tensor({1, 3, 4, 4}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({1, 3, 4, 4}, rng)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                return nn::mse_loss(
                    tp, nn::upsample_nearest2(tp, nn::avg_pool2(tp, v[0])), tgt);
            }));
    }
    {  // concat / flatten / row ops
        const Tensor<double> tgt = random_tensor({1, 1, 5}, rng);
        worst = std::max(worst, block_gradcheck(
            {random_tensor({1, 2, 2, 2}, rng), random_tensor({1, 3, 2, 2}, rng),
             random_tensor({1, 3, 5}, rng)},
            [tgt](Tape<double>& tp, const std::vector<nn::Var<double>>& v) {
                nn::Var<double> x = nn::concat_channels(tp, {v[0], v[1]});
                x = nn::flatten_hw(tp, x);
                x = nn::concat_rows(tp, x, v[2]);
                return nn::mse_loss(tp, nn::mean_rows(tp, x), tgt);
            }));
    }
    return worst;
}

UNetConfig toy_unet() {
    UNetConfig c;
    c.resolutions = {8, 4};
    c.channels = {8, 8};
    c.block_repeats = {1, 1};
    c.attention_resolutions = {4};
    c.garment_stop_resolution = 4;
    c.num_heads = 2;
    c.pose_embed_dim = 4;
    c.emb_dim = 8;
    return c;
}

template <typename T>
void randomize_zero_params(ParamStore<T>& store, uint64_t seed) {
    Rng rng(seed);
    for (size_t i = 0; i < store.count(); ++i) {
        auto& p = store.at(static_cast<int>(i));
        bool all_zero = true;
        for (const T v : p.value.data) all_zero = all_zero && v == T(0);
        if (!all_zero) continue;
        const int64_t fan = std::max<int64_t>(1, p.value.numel() / p.value.shape[0]);
        const double sd = 0.3 / std::sqrt(static_cast<double>(fan));
        for (T& v : p.value.data) v = static_cast<T>(sd * rng.normal());
    }
}

double model_gradcheck() {
    TryOnUNet<double> model(toy_unet(), 17);
    randomize_zero_params(model.store(), 23);

    Rng rng(29);
    UNetInputs<double> in;
    in.z = random_tensor({1, 3, 8, 8}, rng, 0.5);
    in.agnostic = random_tensor({1, 3, 8, 8}, rng, 0.5);
    in.garment = random_tensor({1, 3, 8, 8}, rng, 0.5);
    in.person_pose = random_tensor({1, kNumKeypoints, 3}, rng, 0.3);
    in.garment_pose = random_tensor({1, kNumKeypoints, 3}, rng, 0.3);
    for (auto& v : in.person_pose.data) v += 1.5;  // keep keypoints visible
    for (auto& v : in.garment_pose.data) v += 1.5;
    in.t = {0.4};
    in.t_na_agnostic = {0.1};
    in.t_na_garment = {0.2};
    const Tensor<double> target = random_tensor({1, 3, 8, 8}, rng, 0.3);

    ParamStore<double>& store = model.store();
    store.zero_grad();
    {
        Tape<double> tp;
        const auto out = model.forward(tp, in, true);
        tp.backward(nn::mse_loss(tp, out, target));
    }
    std::vector<Tensor<double>> analytic;
    for (size_t i = 0; i < store.count(); ++i)
        analytic.push_back(store.at(static_cast<int>(i)).grad);

    auto eval = [&]() {
        Tape<double> tp;
        const Tensor<double>& ov = tp.val(model.forward(tp, in, false));
        double acc = 0;
        for (int64_t i = 0; i < ov.numel(); ++i) {
            const double d = ov.data[size_t(i)] - target.data[size_t(i)];
            acc += d * d;
        }
        return acc / static_cast<double>(ov.numel());
    };

    Rng pick(7);
    const double h = 1e-5;
    double worst = 0;
    for (size_t i = 0; i < store.count(); ++i) {
        Tensor<double>& val = store.at(static_cast<int>(i)).value;
        for (int rep = 0; rep < 2; ++rep) {
            const int64_t j = pick.uniform_int(val.numel());
            const double save = val.data[size_t(j)];
            val.data[size_t(j)] = save + h;
            const double up = eval();
            val.data[size_t(j)] = save - h;
            const double dn = eval();
            val.data[size_t(j)] = save;
            const double fd = (up - dn) / (2 * h);
            const double an =
                analytic[i].numel() ? analytic[i].data[size_t(j)] : 0.0;
            worst = std::max(worst,
                             std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)}));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// criterion 3: attention oracle

Tensor<double> naive_attention(const Tensor<double>& q, const Tensor<double>& k,
                               const Tensor<double>& v, int64_t heads,
                               const Tensor<uint8_t>* mask) {
    const int64_t B = q.dim(0), M = q.dim(1), C = q.dim(2), N = k.dim(1), dh = C / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor<double> out({B, M, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t hh = 0; hh < heads; ++hh)
            for (int64_t m = 0; m < M; ++m) {
                std::vector<double> logits(size_t(N), 0.0);
                double mx = -1e300;
                for (int64_t n = 0; n < N; ++n) {
                    if (mask && !mask->at2(b, n)) continue;
                    double dot = 0;
                    for (int64_t d = 0; d < dh; ++d)
                        dot += q.at3(b, m, hh * dh + d) * k.at3(b, n, hh * dh + d);
                    logits[size_t(n)] = dot * scale;
                    mx = std::max(mx, logits[size_t(n)]);
                }
                double z = 0;
                std::vector<double> p(size_t(N), 0.0);
                for (int64_t n = 0; n < N; ++n) {
                    if (mask && !mask->at2(b, n)) continue;
                    p[size_t(n)] = std::exp(logits[size_t(n)] - mx);
                    z += p[size_t(n)];
                }
                for (int64_t d = 0; d < dh; ++d) {
                    double acc = 0;
                    for (int64_t n = 0; n < N; ++n)
                        acc += p[size_t(n)] / z * v.at3(b, n, hh * dh + d);
                    out.at3(b, m, hh * dh + d) = acc;
                }
            }
    return out;
}

Tensor<double> tape_attention(const Tensor<double>& q, const Tensor<double>& k,
                              const Tensor<double>& v, int64_t heads,
                              const Tensor<uint8_t>* mask) {
    Tape<double> tp;
    std::shared_ptr<Tensor<uint8_t>> mp;
    if (mask) mp = std::make_shared<Tensor<uint8_t>>(*mask);
    return tp.val(nn::attention(tp, tp.input(q), tp.input(k), tp.input(v), heads, mp));
}

// ---------------------------------------------------------------------------
// criterion 9 helpers

FeatureSet make_features(const std::vector<std::vector<double>>& rows) {
    FeatureSet f;
    f.extractor_id = "test";
    f.features = Tensor<float>({static_cast<int64_t>(rows.size()),
                                static_cast<int64_t>(rows[0].size())});
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[0].size(); ++j)
            f.features.at2(int64_t(i), int64_t(j)) = static_cast<float>(rows[i][j]);
    return f;
}

double kid_bruteforce(const std::vector<std::vector<double>>& x,
                      const std::vector<std::vector<double>>& y) {
    const double D = static_cast<double>(x[0].size());
    // features are stored as float32; mirror that quantization exactly
    auto kern = [&](const std::vector<double>& u, const std::vector<double>& w) {
        double dot = 0;
        for (size_t i = 0; i < u.size(); ++i)
            dot += double(float(u[i])) * double(float(w[i]));
        const double b = dot / D + 1.0;
        return b * b * b;
    };
    const double m = static_cast<double>(x.size()), n = static_cast<double>(y.size());
    double kxx = 0, kyy = 0, kxy = 0;
    for (size_t i = 0; i < x.size(); ++i)
        for (size_t j = 0; j < x.size(); ++j)
            if (i != j) kxx += kern(x[i], x[j]);
    for (size_t i = 0; i < y.size(); ++i)
        for (size_t j = 0; j < y.size(); ++j)
            if (i != j) kyy += kern(y[i], y[j]);
    for (const auto& u : x)
        for (const auto& w : y) kxy += kern(u, w);
    return 1000.0 * (kxx / (m * (m - 1)) + kyy / (n * (n - 1)) - 2.0 * kxy / (m * n));
}

std::vector<ImageRGB> render_set(int n, int res, uint64_t seed) {
    std::vector<ImageRGB> out;
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(i)));
        const ExampleSpec s = sample_example_spec(rng, res);
        FigureSpec fig = s.figure;
        fig.pose = s.pose_a;
        out.push_back(render(fig, &s.garment, res).image);
    }
    return out;
}

// ---------------------------------------------------------------------------
// criterion 10: CLI smoke chain determinism

int sh(const std::string& args) {
    const std::string cmd = std::string(TRYON_CLI_PATH) + " " + args + " >" +
                            (g_work / "cli_stdout.txt").string() + " 2>" +
                            (g_work / "cli_stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

StageConfig smoke_base() {
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

StageConfig smoke_sr1() {
    StageConfig s = smoke_base();
    s.name = "sr1";
    s.target_resolution = 64;
    s.input_resolution = 32;
    s.unet.resolutions = {64, 32};
    s.unet.attention_resolutions = {32};
    s.unet.garment_stop_resolution = 32;
    s.unet.use_low_res = true;
    return s;
}

StageConfig smoke_sr2() {
    StageConfig s = smoke_base();
    s.name = "sr2";
    s.target_resolution = 128;
    s.input_resolution = 64;
    s.unet.resolutions = {32, 16};
    s.unet.attention_resolutions = {};
    s.unet.garment_stop_resolution = 16;
    s.unet.variant = UNetVariant::kEfficientSR;
    s.unet.use_low_res = true;
    s.sampler = {SamplerKind::kDDIM, 2, 1.0, 0.0};
    return s;
}

// Runs synth-gen -> train x3 -> sample -> evaluate under dir; returns the
// union of all manifest output hashes keyed by manifest-relative file path.
std::map<std::string, std::string> run_smoke_chain(const fs::path& dir, bool* ok,
                                                   std::string* note) {
    fs::create_directories(dir);
    const std::string d = dir.string();
    auto step = [&](const std::string& what, const std::string& args) {
        if (!*ok) return;
        if (sh(args) != 0) {
            *ok = false;
            *note = "smoke step failed: " + what;
        }
    };

    step("synth-gen", "synth-gen --n 16 --seed 77 --res 128 --out " + d + "/data");
    save_stage_config(smoke_base(), d + "/base_in.cfg");
    save_stage_config(smoke_sr1(), d + "/sr1_in.cfg");
    save_stage_config(smoke_sr2(), d + "/sr2_in.cfg");
    for (const char* st : {"base", "sr1", "sr2"})
        step(std::string("train ") + st, std::string("train --stage ") + st + " --config " + d +
                                             "/" + st + "_in.cfg --data " + d +
                                             "/data --seed 5 --out " + d + "/ckpts/" + st +
                                             ".ckpt");
    for (int i = 0; i < 2 && *ok; ++i) {
        const std::string ex = d + "/data/ex0000" + std::to_string(i);
        step("sample", "sample --ckpts " + d + "/ckpts --person " + ex +
                           "/person.png --person-parsing " + ex +
                           "/person_parsing.png --person-pose " + ex +
                           "/person_pose.json --garment " + ex +
                           "/garment.png --garment-parsing " + ex +
                           "/garment_parsing.png --garment-pose " + ex +
                           "/garment_pose.json --seed " + std::to_string(5 + i) + " --out " + d +
                           "/samples/s" + std::to_string(i) + ".png");
        if (*ok) {
            fs::create_directories(dir / "real");
            fs::copy_file(ex + "/person.png", d + "/real/r" + std::to_string(i) + ".png");
        }
    }
    step("evaluate", "evaluate --real " + d + "/real --fake " + d +
                         "/samples --metrics fid,kid --seed 3 --out " + d + "/report.json");

    std::map<std::string, std::string> hashes;
    if (!*ok) return hashes;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name != "manifest.json" && name.find(".manifest.json") == std::string::npos)
            continue;
        std::ifstream f(e.path());
        json j = json::parse(f);
        const std::string mrel = fs::relative(e.path(), dir).string();
        for (const auto& [k, v] : j["output_hashes"].items()) {
            std::string key = k;
            const size_t pos = key.find(d);
            if (pos != std::string::npos) key = key.substr(0, pos) + key.substr(pos + d.size());
            hashes[mrel + "::" + key] = v.get<std::string>();
        }
    }
    if (hashes.empty()) {
        *ok = false;
        *note = "no manifest hashes found";
    }
    return hashes;
}

// ---------------------------------------------------------------------------
// criteria 6/7: ablation studies

StageConfig ablation_cfg() {
    StageConfig s;
    s.name = "base";
    s.target_resolution = 64;
    s.unet.resolutions = {64, 32, 16, 8};
    s.unet.channels = {32, 64, 128, 256};
    s.unet.block_repeats = {1, 1, 1, 1};
    s.unet.attention_resolutions = {16, 8};
    s.unet.garment_stop_resolution = 16;
    s.unet.num_heads = 4;
    s.unet.pose_embed_dim = 32;
    s.unet.emb_dim = 128;
    s.sampler = {SamplerKind::kDDPM, 32, 2.0, 0.0};
    s.train = {8, 600, 100, 2e-4, 0.1, false};
    return s;
}

// Unpaired try-on combos from the held-out split: person from one example,
// garment from the next, with the exact counterfactual render as reference.
struct AblationEvalSet {
    std::vector<TryOnExample> examples;
    std::vector<Rendered> oracles;
};

AblationEvalSet ablation_eval_set(const std::string& data, size_t n, int res) {
    const DatasetIndex idx = index_dataset(data);
    const std::vector<std::string>& val =
        idx.val_dirs.empty() ? idx.train_dirs : idx.val_dirs;
    AblationEvalSet out;
    for (size_t i = 0; i < n; ++i) {
        const std::string& dp = val[i % val.size()];
        const std::string& dg = val[(i + 1) % val.size()];
        const TryOnExample ep = load_example(dp);
        const TryOnExample eg = load_example(dg);
        TryOnExample ex;
        ex.person_image = ep.person_image;
        ex.person_parsing = ep.person_parsing;
        ex.person_pose = ep.person_pose;
        ex.garment_image = eg.garment_image;
        ex.garment_parsing = eg.garment_parsing;
        ex.garment_pose = eg.garment_pose;
        out.examples.push_back(ex);
        const ExampleSpec sp = load_example_spec(dp + "/spec.json");
        const ExampleSpec sg = load_example_spec(dg + "/spec.json");
        FigureSpec fig = sp.figure;
        fig.pose = sp.pose_a;
        out.oracles.push_back(render(fig, &sg.garment, res));
    }
    return out;
}

std::vector<uint8_t> oracle_garment_mask(const Rendered& r) {
    std::vector<uint8_t> m(r.parsing.labels.size());
    for (size_t i = 0; i < m.size(); ++i)
        m[i] = r.parsing.labels[i] == kUpperGarment ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

}  // namespace

int main() {
    std::cout.setf(std::ios::unitbuf);
    g_work = fs::temp_directory_path() / "tryon_acceptance";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    run_criterion(1, "gradient checks (blocks + end-to-end toy model)", [](std::string* note) {
        const auto t0 = Clock::now();
        const double wb = all_block_gradchecks();
        const double wm = model_gradcheck();
        *note = "block max rel err " + fmt(wb) + ", model max rel err " + fmt(wm);
        return wb < 1e-4 && wm < 1e-4 && seconds_since(t0) < 120.0;
    });

    run_criterion(2, "diffusion invariants", [](std::string* note) {
        const auto t0 = Clock::now();
        const NoiseSchedule sched = cosine_schedule();
        bool ok = true;
        for (int i = 0; i <= 1000; ++i) {
            const double t = static_cast<double>(i) / 1000.0;
            const double a = sched.alpha(t), s = sched.sigma(t);
            ok = ok && std::fabs(a * a + s * s - 1.0) <= 1e-12;
        }

        Rng rng(3);
        Tensor<float> x({1, 3, 4, 4}), eps({1, 3, 4, 4});
        for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        for (auto& v : eps.data) v = static_cast<float>(rng.normal());
        for (const double t : {0.1, 0.5, 0.9}) {
            const Tensor<float> z = forward_corrupt(x, eps, t, sched);
            const Tensor<float> xr = eps_to_x(z, eps, t, sched);
            for (int64_t i = 0; i < x.numel(); ++i)
                ok = ok && std::fabs(xr.data[size_t(i)] - x.data[size_t(i)]) <= 1e-6;
        }

        Tensor<float> ec = eps, eu = x;
        ok = ok && cfg_combine(ec, eu, 1.0).data == ec.data;  // exact identity

        const DenoiseFn lin = [](const Tensor<float>& z, double, bool) {
            Tensor<float> e = z;
            for (auto& v : e.data) v *= 0.8f;
            return e;
        };
        SamplerSpec ddim{SamplerKind::kDDIM, 16, 1.0, 0.0};
        Rng r1(9), r2(9);
        ok = ok && sample(lin, sched, ddim, {1, 3, 8, 8}, r1).data ==
                       sample(lin, sched, ddim, {1, 3, 8, 8}, r2).data;
        SamplerSpec ddpm{SamplerKind::kDDPM, 16, 1.0, 0.0};
        Rng r3(9), r4(9);
        ok = ok && sample(lin, sched, ddpm, {1, 3, 8, 8}, r3).data ==
                       sample(lin, sched, ddpm, {1, 3, 8, 8}, r4).data;

        *note = "schedule/round-trip/CFG/DDIM/DDPM";
        return ok && seconds_since(t0) < 60.0;
    });

    run_criterion(3, "attention oracle", [](std::string* note) {
        const auto t0 = Clock::now();
        Rng rng(31);
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const int64_t B = 1 + rng.uniform_int(2), heads = 1 + rng.uniform_int(3);
            const int64_t dh = 1 + rng.uniform_int(3), C = heads * dh;
            const int64_t M = 1 + rng.uniform_int(5), N = 1 + rng.uniform_int(6);
            const Tensor<double> q = random_tensor({B, M, C}, rng);
            const Tensor<double> k = random_tensor({B, N, C}, rng);
            const Tensor<double> v = random_tensor({B, N, C}, rng);
            Tensor<uint8_t> mask({B, N});
            const bool use_mask = trial % 3 == 0;
            if (use_mask)
                for (int64_t b = 0; b < B; ++b) {
                    for (int64_t n = 0; n < N; ++n)
                        mask.at2(b, n) = rng.uniform() < 0.7 ? 1 : 0;
                    mask.at2(b, rng.uniform_int(N)) = 1;  // keep one key valid
                }
            const Tensor<double> got =
                tape_attention(q, k, v, heads, use_mask ? &mask : nullptr);
            const Tensor<double> want =
                naive_attention(q, k, v, heads, use_mask ? &mask : nullptr);
            for (int64_t i = 0; i < got.numel(); ++i)
                worst = std::max(worst, std::fabs(got.data[size_t(i)] - want.data[size_t(i)]));

            // rows sum to one: all-ones values must pass through unchanged
            const Tensor<double> ones = Tensor<double>::full({B, N, C}, 1.0);
            const Tensor<double> sums =
                tape_attention(q, k, ones, heads, use_mask ? &mask : nullptr);
            for (int64_t i = 0; i < sums.numel(); ++i)
                worst = std::max(worst, std::fabs(sums.data[size_t(i)] - 1.0));
        }

        // pose keys/values extend the spatial rows: h*w + 2K
        Tape<double> tp;
        Rng r2(5);
        const auto f = nn::flatten_hw(tp, tp.input(random_tensor({1, 8, 4, 4}, r2)));
        const auto rows =
            nn::concat_rows(tp, f, tp.input(random_tensor({1, 2 * kNumKeypoints, 8}, r2)));
        const bool rows_ok = tp.val(f).dim(1) == 16 &&
                             tp.val(rows).dim(1) == 4 * 4 + 2 * kNumKeypoints;

        *note = "max abs err " + fmt(worst);
        return worst <= 1e-6 && rows_ok && seconds_since(t0) < 60.0;
    });

    run_criterion(8, "paper-scale parameter counts", [](std::string* note) {
        const auto t0 = Clock::now();
        const int64_t n128 = param_count(paper_128_config());
        const int64_t n256 = param_count(paper_256_config());
        const bool ok128 = std::fabs(double(n128) - 1.13e9) <= 0.15 * 1.13e9;
        const bool ok256 = std::fabs(double(n256) - 1.06e9) <= 0.15 * 1.06e9;
        *note = "128-model " + std::to_string(n128) + ", 256-model " + std::to_string(n256);
        return ok128 && ok256 && n256 < n128 && seconds_since(t0) < 1.0;
    });

    run_criterion(9, "metric checks (FID/KID/monotonicity)", [](std::string* note) {
        Rng rng(3);
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 500; ++i) {
            std::vector<double> r(64);
            for (auto& v : r) v = rng.normal();
            rows.push_back(r);
        }
        const FeatureSet a = make_features(rows);
        bool ok = std::fabs(fid(a, a)) <= 1e-6;

        std::vector<std::vector<double>> shifted = rows;
        for (auto& r : shifted)
            for (auto& v : r) v += 0.25;  // norm-2 mean shift on 64 coords
        ok = ok && std::fabs(fid(a, make_features(shifted)) - 4.0) <= 1e-6;

        const std::vector<std::vector<double>> x{
            {0.1, -0.4}, {1.2, 0.3}, {-0.7, 0.9}, {0.5, 0.5}};
        const std::vector<std::vector<double>> y{
            {0.0, 0.2}, {-1.1, 0.6}, {0.8, -0.3}, {0.4, 1.0}};
        ok = ok &&
             std::fabs(kid(make_features(x), make_features(y)) - kid_bruteforce(x, y)) <= 1e-9;

        const std::vector<ImageRGB> real = render_set(16, 32, 9);
        auto noised = [&](double sd) {
            std::vector<ImageRGB> out = real;
            Rng nr(13);
            for (auto& img : out)
                for (auto& v : img.pix)
                    v = std::min(1.f,
                                 std::max(-1.f, v + static_cast<float>(sd * nr.normal())));
            return out;
        };
        const FeatureSet fr = extract_features(real);
        const double f1 = fid(fr, extract_features(noised(0.1)));
        const double f3 = fid(fr, extract_features(noised(0.3)));
        const double f5 = fid(fr, extract_features(noised(0.5)));
        ok = ok && f1 < f3 && f3 < f5;
        *note = "noise FID " + fmt(f1) + " < " + fmt(f3) + " < " + fmt(f5);
        return ok;
    });

    run_criterion(10, "smoke-chain determinism", [](std::string* note) {
        // identical command line both times: wipe and rerun in place
        bool ok = true;
        const fs::path dir = g_work / "smoke";
        const auto h1 = run_smoke_chain(dir, &ok, note);
        fs::remove_all(dir);
        const auto h2 = run_smoke_chain(dir, &ok, note);
        fs::remove_all(dir);
        if (!ok) return false;
        if (h1 != h2) {
            *note = "output hashes differ between identical-seed reruns";
            return false;
        }
        *note = std::to_string(h1.size()) + " output hashes bit-identical across reruns";
        return true;
    });

    const std::string abl_data = (g_work / "ablation_data").string();
    std::cout << "generating ablation dataset (1000 examples, 64x64)" << std::endl;
    generate_dataset(1000, 401, 64, abl_data);

    run_criterion(6, "ablation 1: cross attention beats concat (FID, 3/3 seeds)",
                  [&](std::string* note) {
        const AblationEvalSet ev = ablation_eval_set(abl_data, 48, 32);
        const std::vector<TryOnExample>& examples = ev.examples;
        std::vector<ImageRGB> real;
        for (const auto& o : ev.oracles) real.push_back(o.image);
        const FeatureSet fr = extract_features(real);

        StageConfig cross = ablation_cfg();
        StageConfig concat = ablation_cfg();
        concat.unet.variant = UNetVariant::kConcat;

        bool ok = true;
        std::string detail;
        for (const uint64_t seed : {uint64_t(201), uint64_t(202), uint64_t(203)}) {
            std::cout << "ablation 1, seed " << seed << std::endl;
            const CheckpointManifest ck_cross =
                train_stage(cross, abl_data, seed, TrainMode::kStandard, nullptr, &std::cout);
            const CheckpointManifest ck_concat =
                train_stage(concat, abl_data, seed, TrainMode::kStandard, nullptr, &std::cout);
            std::vector<ImageRGB> fa, fb;
            for (size_t i = 0; i < examples.size(); ++i) {
                const uint64_t s = Rng::derive(seed, 1000 + i);
                fa.push_back(sample_base_stage(cross, ck_cross, examples[i], s));
                fb.push_back(sample_base_stage(concat, ck_concat, examples[i], s));
            }
            const double fid_a = fid(extract_features(fa), fr);
            const double fid_b = fid(extract_features(fb), fr);
            detail += " [seed " + std::to_string(seed) + ": cross " + fmt(fid_a) + " vs concat " +
                      fmt(fid_b) + "]";
            ok = ok && fid_a < fid_b;
        }
        *note = detail;
        return ok;
    });

    run_criterion(7, "ablation 2: unified beats sequenced (FID + boundary MAE, 3 seeds)",
                  [&](std::string* note) {
        const AblationEvalSet ev = ablation_eval_set(abl_data, 48, 32);
        const std::vector<TryOnExample>& examples = ev.examples;
        std::vector<ImageRGB> real;
        for (const auto& o : ev.oracles) real.push_back(o.image);
        const FeatureSet fr = extract_features(real);

        const StageConfig cfg = ablation_cfg();
        StageConfig warp_cfg = cfg;
        warp_cfg.unet.use_agnostic = false;

        double fid_u_sum = 0, fid_s_sum = 0, mae_u_sum = 0, mae_s_sum = 0;
        std::string detail;
        for (const uint64_t seed : {uint64_t(201), uint64_t(202), uint64_t(203)}) {
            std::cout << "ablation 2, seed " << seed << std::endl;
            const CheckpointManifest ck_uni =
                train_stage(cfg, abl_data, seed, TrainMode::kStandard, nullptr, &std::cout);
            const auto [ck_warp, ck_blend] =
                train_sequenced_ablation(cfg, abl_data, seed, &std::cout);

            std::vector<ImageRGB> fu, fsq;
            double mae_u = 0, mae_s = 0;
            for (size_t i = 0; i < examples.size(); ++i) {
                const uint64_t s = Rng::derive(seed, 1000 + i);
                const TryOnExample& e = examples[i];
                fu.push_back(sample_base_stage(cfg, ck_uni, e, s));
                const ImageRGB warped = sample_base_stage(warp_cfg, ck_warp, e,
                                                          Rng::derive(s, 1), TrainMode::kWarp);
                fsq.push_back(sample_base_stage(cfg, ck_blend, e, Rng::derive(s, 2),
                                                TrainMode::kBlend, &warped));
                const Rendered& oracle = ev.oracles[i];
                const std::vector<uint8_t> mask = oracle_garment_mask(oracle);
                const int R = cfg.target_resolution;
                mae_u += boundary_band_mae(fu.back(), oracle.image, mask, R, R, 2);
                mae_s += boundary_band_mae(fsq.back(), oracle.image, mask, R, R, 2);
            }
            mae_u /= static_cast<double>(examples.size());
            mae_s /= static_cast<double>(examples.size());
            const double fid_u = fid(extract_features(fu), fr);
            const double fid_s = fid(extract_features(fsq), fr);
            detail += " [seed " + std::to_string(seed) + ": fid " + fmt(fid_u) + "/" +
                      fmt(fid_s) + ", mae " + fmt(mae_u) + "/" + fmt(mae_s) + "]";
            fid_u_sum += fid_u;
            fid_s_sum += fid_s;
            mae_u_sum += mae_u;
            mae_s_sum += mae_s;
        }
        *note = "means fid " + fmt(fid_u_sum / 3) + "/" + fmt(fid_s_sum / 3) + ", mae " +
                fmt(mae_u_sum / 3) + "/" + fmt(mae_s_sum / 3) + ";" + detail;
        return fid_u_sum < fid_s_sum && mae_u_sum < mae_s_sum;
    });

    fs::remove_all(abl_data);

    run_criterion(4, "overfit reconstruction (16 pairs, full cascade, PSNR > 22)",
                  [](std::string* note) {
        const auto t0 = Clock::now();
        const std::string data = (g_work / "overfit_data").string();
        std::cout << "generating overfit dataset (16 examples, 256x256)" << std::endl;
        generate_dataset(16, 404, 256, data);

        PipelineCheckpointSet p;
        p.base_cfg = desk_base_config();
        p.sr1_cfg = desk_sr1_config();
        p.sr2_cfg = desk_sr2_config();
        std::cout << "training base stage" << std::endl;
        p.base = train_stage(p.base_cfg, data, 11, TrainMode::kStandard, nullptr, &std::cout);
        std::cout << "training sr1 stage" << std::endl;
        p.sr1 = train_stage(p.sr1_cfg, data, 12, TrainMode::kStandard, nullptr, &std::cout);
        std::cout << "training sr2 stage" << std::endl;
        p.sr2 = train_stage(p.sr2_cfg, data, 13, TrainMode::kStandard, nullptr, &std::cout);

        const DatasetIndex idx = index_dataset(data);
        std::vector<std::string> dirs = idx.train_dirs;
        dirs.insert(dirs.end(), idx.val_dirs.begin(), idx.val_dirs.end());
        std::sort(dirs.begin(), dirs.end());

        double psnr_sum = 0;
        for (size_t i = 0; i < dirs.size(); ++i) {
            const TryOnExample ex = load_example(dirs[i]);
            const ImageRGB out = sample_pipeline(p, ex, Rng::derive(99, i));
            const double v = psnr(out, *ex.ground_truth);
            psnr_sum += v;
            std::cout << "overfit sample " << i << " psnr " << v << std::endl;
        }
        const double mean_psnr = psnr_sum / static_cast<double>(dirs.size());
        const double secs = seconds_since(t0);
        fs::remove_all(data);
        *note = "mean paired PSNR " + fmt(mean_psnr) + " dB at 256";
        return mean_psnr > 22.0 && secs < 4 * 3600.0;
    });

    run_criterion(5, "try-on generalization vs counterfactual oracle",
                  [](std::string* note) {
        const auto t0 = Clock::now();
        const std::string data = (g_work / "gen_data").string();
        std::cout << "generating training dataset (2000 examples, 256x256)" << std::endl;
        generate_dataset(2000, 405, 256, data);

        PipelineCheckpointSet p;
        p.base_cfg = desk_base_config();
        p.sr1_cfg = desk_sr1_config();
        p.sr2_cfg = desk_sr2_config();
        std::cout << "training base stage" << std::endl;
        p.base = train_stage(p.base_cfg, data, 21, TrainMode::kStandard, nullptr, &std::cout);
        std::cout << "training sr1 stage" << std::endl;
        p.sr1 = train_stage(p.sr1_cfg, data, 22, TrainMode::kStandard, nullptr, &std::cout);
        std::cout << "training sr2 stage" << std::endl;
        p.sr2 = train_stage(p.sr2_cfg, data, 23, TrainMode::kStandard, nullptr, &std::cout);

        const DatasetIndex idx = index_dataset(data);
        const std::vector<std::string>& val = idx.val_dirs;
        if (val.size() < 2) throw std::runtime_error("validation split too small");

        double psnr_sum = 0, ssim_sum = 0;
        const int combos = 64;
        for (int i = 0; i < combos; ++i) {
            const std::string& dp = val[size_t(i) % val.size()];
            const std::string& dg = val[size_t(i + 1) % val.size()];
            const TryOnExample ep = load_example(dp);
            const TryOnExample eg = load_example(dg);
            TryOnExample ex;
            ex.person_image = ep.person_image;
            ex.person_parsing = ep.person_parsing;
            ex.person_pose = ep.person_pose;
            ex.garment_image = eg.garment_image;
            ex.garment_parsing = eg.garment_parsing;
            ex.garment_pose = eg.garment_pose;

            const ExampleSpec sp = load_example_spec(dp + "/spec.json");
            const ExampleSpec sg = load_example_spec(dg + "/spec.json");
            FigureSpec fig = sp.figure;
            fig.pose = sp.pose_a;
            const Rendered oracle = render(fig, &sg.garment, 256);

            const ImageRGB out = sample_pipeline(p, ex, Rng::derive(7000, i));
            const double pv = psnr(out, oracle.image);
            std::vector<uint8_t> mask(oracle.parsing.labels.size());
            for (size_t j = 0; j < mask.size(); ++j)
                mask[j] = oracle.parsing.labels[j] == kUpperGarment ? 1 : 0;
            const double sv = ssim(out, oracle.image, &mask);
            psnr_sum += pv;
            ssim_sum += sv;
            std::cout << "combo " << i << " psnr " << pv << " garment ssim " << sv << std::endl;
        }
        const double mean_psnr = psnr_sum / combos, mean_ssim = ssim_sum / combos;
        const double secs = seconds_since(t0);
        fs::remove_all(data);
        *note = "mean PSNR " + fmt(mean_psnr) + " dB, garment-region SSIM " + fmt(mean_ssim);
        return mean_psnr > 18.0 && mean_ssim > 0.6 && secs < 3 * 3600.0;
    });

    fs::remove_all(g_work);
    if (g_failed) {
        std::cout << g_failed << " criterion(s) failed" << std::endl;
        return 1;
    }
    std::cout << "all criteria passed" << std::endl;
    return 0;
}
