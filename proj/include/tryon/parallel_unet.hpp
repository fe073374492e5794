#ifndef TRYON_PARALLEL_UNET_HPP
#define TRYON_PARALLEL_UNET_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tryon/config.hpp"
#include "tryon/nn.hpp"
#include "tryon/tape.hpp"

namespace tryon {

// GroupNorm group count: min(32, floor(C/4)), at least 1.
inline int group_count(int64_t c) {
    const int64_t g = std::min<int64_t>(32, c / 4);
    return static_cast<int>(std::max<int64_t>(1, g));
}

// One batch of model inputs. Unused tensors stay empty; t and the t_na
// levels hold either one value (broadcast) or one per batch element.
template <typename T>
struct UNetInputs {
    Tensor<T> z;             // [B,3,H,W]
    Tensor<T> agnostic;      // [B,3,H,W]
    Tensor<T> garment;       // [B,3,H,W] (garment stream, or channels for concat variant)
    Tensor<T> low_res_up;    // [B,3,H,W], already upsampled to target
    Tensor<T> person_pose;   // [B,K,3]
    Tensor<T> garment_pose;  // [B,K,3]
    std::vector<double> t{0.0};
    std::vector<double> t_na_agnostic{0.0};
    std::vector<double> t_na_garment{0.0};
    std::vector<double> t_na_low{0.0};
};

// Person/garment denoiser pair (or its single-stream variants), built from
// a UNetConfig. Templated so gradient checks can run at float64.
template <typename T>
class TryOnUNet {
public:
    using Var = nn::Var<T>;

    TryOnUNet(const UNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.emb_dim % 2) throw std::invalid_argument("unet: emb_dim must be even");
        counting_ = false;
        Rng rng(init_seed);
        build(&rng);
    }

    static int64_t count_params(const UNetConfig& cfg) {
        cfg.validate();
        TryOnUNet m(cfg);
        return m.count_;
    }

    // totals keyed by top-level name prefix (emb, pose, person, garment)
    static std::map<std::string, int64_t> count_params_by_module(const UNetConfig& cfg) {
        cfg.validate();
        TryOnUNet m(cfg);
        return m.count_by_;
    }

    const UNetConfig& config() const { return cfg_; }
    ParamStore<T>& store() { return store_; }
    const ParamStore<T>& store() const { return store_; }

    // eps_hat with z's shape. needs_grad=false skips all backward bookkeeping.
    Var forward(Tape<T>& tape, const UNetInputs<T>& in, bool needs_grad = true) {
        check_inputs(in);
        pv_.assign(store_.count(), -1);
        tape_grads_ = needs_grad;

        const int64_t B = in.z.dim(0);
        Var emb = -1;
        Var pose_rows = -1;
        std::shared_ptr<Tensor<uint8_t>> pose_mask;
        build_embedding(tape, in, B, &emb, &pose_rows, &pose_mask);

        std::map<int, Var> gfeat;
        if (cfg_.has_garment_stream())
            gfeat = garment_forward(tape, tape.input(in.garment), emb);

        std::vector<Var> ins;
        ins.push_back(tape.input(in.z));
        if (cfg_.variant != UNetVariant::kEfficientSR && cfg_.use_agnostic)
            ins.push_back(tape.input(in.agnostic));
        if (cfg_.use_low_res) ins.push_back(tape.input(in.low_res_up));
        if (cfg_.variant == UNetVariant::kConcat) ins.push_back(tape.input(in.garment));
        Var x = ins.size() == 1 ? ins[0] : nn::concat_channels(tape, ins);
        return person_forward(tape, x, emb, pose_rows, pose_mask, gfeat);
    }

private:
    struct LinearP { int w = -1, b = -1; };
    struct ConvP { int w = -1, b = -1; };
    struct GNP { int g = -1, b = -1; int ch = 0; };
    struct ResBlockP {
        GNP gn1, gn2;
        LinearP film1, film2;
        ConvP conv1, conv2, skip;
        int cin = 0, cout = 0;
        bool has_skip = false;
    };
    struct SelfAttnP {
        GNP gn;
        LinearP q, k, v, o, pk, pv;
        int ch = 0;
    };
    struct CrossAttnP {
        GNP gn_q, gn_kv;
        LinearP q, k, v, o;
        int ch = 0;
    };
    struct LevelP {
        std::vector<ResBlockP> blocks;
        std::vector<SelfAttnP> self_attn;   // parallel to blocks when present
        std::vector<CrossAttnP> cross_attn;
    };
    struct StreamP {
        ConvP conv_in;
        std::vector<LevelP> enc, dec;
        GNP out_gn;
        ConvP out_conv;
    };
    struct MlpP {
        LinearP l1, l2;
    };

    enum class Init { kFanIn, kZero, kOne };

    // counting-only constructor: walks build() without allocating
    explicit TryOnUNet(const UNetConfig& cfg) : cfg_(cfg), counting_(true) { build(nullptr); }

    int add(const std::string& name, std::vector<int64_t> shape, Init init, Rng* rng) {
        int64_t numel = 1;
        for (int64_t d : shape) numel *= d;
        if (counting_) {
            count_ += numel;
            count_by_[name.substr(0, name.find('.'))] += numel;
            return -1;
        }
        Tensor<T> t;
        switch (init) {
            case Init::kZero:
                t = Tensor<T>::zeros(std::move(shape));
                break;
            case Init::kOne:
                t = Tensor<T>::full(std::move(shape), T(1));
                break;
            case Init::kFanIn: {
                int64_t fan_in = numel / shape[0];
                t = init_fan_in<T>(std::move(shape), fan_in, *rng);
                break;
            }
        }
        return store_.add(name, std::move(t));
    }

    LinearP add_linear(const std::string& n, int64_t out, int64_t in, Rng* rng,
                       bool zero_w = false) {
        LinearP p;
        p.w = add(n + ".w", {out, in}, zero_w ? Init::kZero : Init::kFanIn, rng);
        p.b = add(n + ".b", {out}, Init::kZero, rng);
        return p;
    }
    ConvP add_conv(const std::string& n, int64_t cout, int64_t cin, int64_t k, Rng* rng,
                   bool zero_w = false) {
        ConvP p;
        p.w = add(n + ".w", {cout, cin, k, k}, zero_w ? Init::kZero : Init::kFanIn, rng);
        p.b = add(n + ".b", {cout}, Init::kZero, rng);
        return p;
    }
    GNP add_gn(const std::string& n, int ch, Rng* rng) {
        GNP p;
        p.ch = ch;
        p.g = add(n + ".g", {ch}, Init::kOne, rng);
        p.b = add(n + ".b", {ch}, Init::kZero, rng);
        return p;
    }
    ResBlockP add_res(const std::string& n, int cin, int cout, Rng* rng) {
        ResBlockP p;
        p.cin = cin;
        p.cout = cout;
        p.gn1 = add_gn(n + ".gn1", cin, rng);
        p.film1 = add_linear(n + ".film1", 2 * cin, cfg_.emb_dim, rng, true);
        p.conv1 = add_conv(n + ".conv1", cout, cin, 3, rng);
        p.gn2 = add_gn(n + ".gn2", cout, rng);
        p.film2 = add_linear(n + ".film2", 2 * cout, cfg_.emb_dim, rng, true);
        p.conv2 = add_conv(n + ".conv2", cout, cout, 3, rng, true);  // zero-init output
        p.has_skip = cin != cout;
        if (p.has_skip) p.skip = add_conv(n + ".skip", cout, cin, 1, rng);
        return p;
    }
    SelfAttnP add_self(const std::string& n, int ch, Rng* rng) {
        SelfAttnP p;
        p.ch = ch;
        p.gn = add_gn(n + ".gn", ch, rng);
        p.q = add_linear(n + ".q", ch, ch, rng);
        p.k = add_linear(n + ".k", ch, ch, rng);
        p.v = add_linear(n + ".v", ch, ch, rng);
        p.o = add_linear(n + ".o", ch, ch, rng, true);  // zero-init output
        p.pk = add_linear(n + ".pose_k", ch, cfg_.pose_embed_dim, rng);
        p.pv = add_linear(n + ".pose_v", ch, cfg_.pose_embed_dim, rng);
        return p;
    }
    CrossAttnP add_cross(const std::string& n, int ch, Rng* rng) {
        CrossAttnP p;
        p.ch = ch;
        p.gn_q = add_gn(n + ".gn_q", ch, rng);
        p.gn_kv = add_gn(n + ".gn_kv", ch, rng);
        p.q = add_linear(n + ".q", ch, ch, rng);
        p.k = add_linear(n + ".k", ch, ch, rng);
        p.v = add_linear(n + ".v", ch, ch, rng);
        p.o = add_linear(n + ".o", ch, ch, rng, true);
        return p;
    }
    LevelP add_level(const std::string& n, int cin, int level, bool person, Rng* rng) {
        LevelP lv;
        const int cout = cfg_.channels[size_t(level)];
        const bool attn = person && cfg_.variant != UNetVariant::kEfficientSR &&
                          cfg_.attention_at(cfg_.resolutions[size_t(level)]);
        int c = cin;
        for (int j = 0; j < cfg_.block_repeats[size_t(level)]; ++j) {
            const std::string bn = n + ".b" + std::to_string(j);
            lv.blocks.push_back(add_res(bn, c, cout, rng));
            c = cout;
            if (attn) {
                lv.self_attn.push_back(add_self(bn + ".self", cout, rng));
                if (cfg_.variant == UNetVariant::kParallel)
                    lv.cross_attn.push_back(add_cross(bn + ".cross", cout, rng));
            }
        }
        return lv;
    }

    int garment_decoder_levels() const {
        // decoder levels (from the bottom up) the garment stream still runs
        int n = 0;
        for (int i = cfg_.levels() - 2; i >= 0; --i) {
            if (cfg_.resolutions[size_t(i)] > cfg_.garment_stop_resolution) break;
            ++n;
        }
        return n;
    }

    void build_stream(StreamP& s, const std::string& n, int in_ch, bool person, Rng* rng) {
        const int L = cfg_.levels();
        s.conv_in = add_conv(n + ".in", cfg_.channels[0], in_ch, 3, rng);
        int c = cfg_.channels[0];
        for (int i = 0; i < L; ++i) {
            s.enc.push_back(add_level(n + ".enc" + std::to_string(i), c, i, person, rng));
            c = cfg_.channels[size_t(i)];
        }
        const int dec_levels = person ? L - 1 : garment_decoder_levels();
        for (int k = 0; k < dec_levels; ++k) {
            const int i = L - 2 - k;  // level index, bottom-up
            const int cin = cfg_.channels[size_t(i + 1)] + cfg_.channels[size_t(i)];
            s.dec.push_back(add_level(n + ".dec" + std::to_string(i), cin, i, person, rng));
        }
        if (person) {
            s.out_gn = add_gn(n + ".out_gn", cfg_.channels[0], rng);
            s.out_conv = add_conv(n + ".out", 3, cfg_.channels[0], 3, rng, true);  // zero-init
        }
    }

    void build(Rng* rng) {
        const int E = cfg_.emb_dim, P = cfg_.pose_embed_dim;
        mlp_t_.l1 = add_linear("emb.t.l1", E, E, rng);
        mlp_t_.l2 = add_linear("emb.t.l2", E, E, rng);
        if (cfg_.variant != UNetVariant::kEfficientSR && cfg_.use_agnostic) {
            mlp_na_agn_.l1 = add_linear("emb.na_agnostic.l1", E, E, rng);
            mlp_na_agn_.l2 = add_linear("emb.na_agnostic.l2", E, E, rng);
        }
        if (cfg_.variant != UNetVariant::kEfficientSR) {
            mlp_na_gar_.l1 = add_linear("emb.na_garment.l1", E, E, rng);
            mlp_na_gar_.l2 = add_linear("emb.na_garment.l2", E, E, rng);
        }
        if (cfg_.use_low_res) {
            mlp_na_low_.l1 = add_linear("emb.na_low.l1", E, E, rng);
            mlp_na_low_.l2 = add_linear("emb.na_low.l2", E, E, rng);
        }
        if (cfg_.has_pose()) {
            pose_enc_p_.l1 = add_linear("pose.person.l1", P, 3, rng);
            pose_enc_p_.l2 = add_linear("pose.person.l2", P, P, rng);
            pose_enc_g_.l1 = add_linear("pose.garment.l1", P, 3, rng);
            pose_enc_g_.l2 = add_linear("pose.garment.l2", P, P, rng);
            pose_proj_p_ = add_linear("pose.person.pool_proj", E, P, rng);
            pose_proj_g_ = add_linear("pose.garment.pool_proj", E, P, rng);
        }
        build_stream(person_, "person", cfg_.person_in_channels(), true, rng);
        if (cfg_.has_garment_stream()) build_stream(garment_, "garment", 3, false, rng);
    }

    // ---- forward helpers ---------------------------------------------------

    Var p(Tape<T>& t, int id) {
        Var& v = pv_[size_t(id)];
        if (v < 0) v = t.param(&store_.at(id).value, &store_.at(id).grad, tape_grads_);
        return v;
    }

    static std::vector<double> broadcast(const std::vector<double>& v, int64_t B,
                                         const char* what) {
        if (v.size() == 1) return std::vector<double>(size_t(B), v[0]);
        if (static_cast<int64_t>(v.size()) != B)
            throw std::invalid_argument(std::string("unet: ") + what +
                                        " must have 1 or batch-size entries");
        return v;
    }

    Tensor<T> sinusoidal(const std::vector<double>& vals) const {
        const int64_t B = static_cast<int64_t>(vals.size());
        const int64_t E = cfg_.emb_dim, half = E / 2;
        Tensor<T> out({B, E});
        for (int64_t b = 0; b < B; ++b) {
            const double v = vals[size_t(b)] * 1000.0;
            for (int64_t i = 0; i < half; ++i) {
                const double freq =
                    std::exp(-std::log(10000.0) * static_cast<double>(i) /
                             static_cast<double>(half > 1 ? half - 1 : 1));
                out.at2(b, i) = static_cast<T>(std::sin(v * freq));
                out.at2(b, half + i) = static_cast<T>(std::cos(v * freq));
            }
        }
        return out;
    }

    Var mlp2(Tape<T>& t, Var x, const MlpP& m) {
        Var h = nn::linear(t, x, p(t, m.l1.w), p(t, m.l1.b));
        h = nn::swish(t, h);
        return nn::linear(t, h, p(t, m.l2.w), p(t, m.l2.b));
    }

    Var pose_encode(Tape<T>& t, Var rows, const MlpP& enc) {
        Var h = nn::linear(t, rows, p(t, enc.l1.w), p(t, enc.l1.b));
        h = nn::swish(t, h);
        return nn::linear(t, h, p(t, enc.l2.w), p(t, enc.l2.b));
    }

    // CLIP-style pooling: mean query, one attention step, then projection.
    Var attention_pool(Tape<T>& t, Var rows, const LinearP& proj, int64_t B) {
        Var q = nn::mean_rows(t, rows);
        Var pooled = nn::attention(t, q, rows, rows, 1);
        Var e = nn::linear(t, pooled, p(t, proj.w), p(t, proj.b));
        return nn::reshape(t, e, {B, cfg_.emb_dim});
    }

    void build_embedding(Tape<T>& t, const UNetInputs<T>& in, int64_t B, Var* emb_out,
                         Var* pose_rows_out, std::shared_ptr<Tensor<uint8_t>>* mask_out) {
        Var emb = mlp2(t, t.input(sinusoidal(broadcast(in.t, B, "t"))), mlp_t_);
        if (cfg_.variant != UNetVariant::kEfficientSR && cfg_.use_agnostic)
            emb = nn::add(t, emb,
                          mlp2(t, t.input(sinusoidal(broadcast(in.t_na_agnostic, B, "t_na"))),
                               mlp_na_agn_));
        if (cfg_.variant != UNetVariant::kEfficientSR)
            emb = nn::add(t, emb,
                          mlp2(t, t.input(sinusoidal(broadcast(in.t_na_garment, B, "t_na"))),
                               mlp_na_gar_));
        if (cfg_.use_low_res)
            emb = nn::add(t, emb,
                          mlp2(t, t.input(sinusoidal(broadcast(in.t_na_low, B, "t_na"))),
                               mlp_na_low_));

        *pose_rows_out = -1;
        mask_out->reset();
        if (cfg_.has_pose()) {
            Var jp = t.input(in.person_pose);
            Var jg = t.input(in.garment_pose);
            Var pe_p = pose_encode(t, jp, pose_enc_p_);
            Var pe_g = pose_encode(t, jg, pose_enc_g_);
            emb = nn::add(t, emb, attention_pool(t, pe_p, pose_proj_p_, B));
            emb = nn::add(t, emb, attention_pool(t, pe_g, pose_proj_g_, B));
            *pose_rows_out = nn::concat_rows(t, pe_p, pe_g);
            // all-zero raw rows (invisible or dropped keypoints) are masked
            const int64_t K = in.person_pose.dim(1);
            auto mask = std::make_shared<Tensor<uint8_t>>(std::vector<int64_t>{B, 2 * K});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t k = 0; k < 2 * K; ++k) {
                    const Tensor<T>& src = k < K ? in.person_pose : in.garment_pose;
                    const int64_t kk = k < K ? k : k - K;
                    bool nz = false;
                    for (int64_t c = 0; c < 3; ++c) nz = nz || src.at3(b, kk, c) != T(0);
                    mask->at2(b, k) = nz ? 1 : 0;
                }
            *mask_out = mask;
        }
        *emb_out = nn::swish(t, emb);
    }

    Var res_forward(Tape<T>& t, Var x, const ResBlockP& rb, Var emb) {
        Var h = nn::group_norm(t, x, p(t, rb.gn1.g), p(t, rb.gn1.b), group_count(rb.cin));
        h = nn::film(t, h, nn::linear(t, emb, p(t, rb.film1.w), p(t, rb.film1.b)));
        h = nn::swish(t, h);
        h = nn::conv2d(t, h, p(t, rb.conv1.w), p(t, rb.conv1.b));
        h = nn::group_norm(t, h, p(t, rb.gn2.g), p(t, rb.gn2.b), group_count(rb.cout));
        h = nn::film(t, h, nn::linear(t, emb, p(t, rb.film2.w), p(t, rb.film2.b)));
        h = nn::swish(t, h);
        h = nn::conv2d(t, h, p(t, rb.conv2.w), p(t, rb.conv2.b));
        Var skip = rb.has_skip ? nn::conv2d(t, x, p(t, rb.skip.w), p(t, rb.skip.b)) : x;
        return nn::add(t, h, skip);
    }

    Var self_attn_forward(Tape<T>& t, Var x, const SelfAttnP& a, Var pose_rows,
                          const std::shared_ptr<Tensor<uint8_t>>& pose_mask) {
        const auto& xv = t.val(x);
        const int64_t B = xv.dim(0), H = xv.dim(2), W = xv.dim(3), HW = H * W;
        Var h = nn::group_norm(t, x, p(t, a.gn.g), p(t, a.gn.b), group_count(a.ch));
        Var f = nn::flatten_hw(t, h);
        Var q = nn::linear(t, f, p(t, a.q.w), p(t, a.q.b));
        Var k = nn::linear(t, f, p(t, a.k.w), p(t, a.k.b));
        Var v = nn::linear(t, f, p(t, a.v.w), p(t, a.v.b));
        std::shared_ptr<Tensor<uint8_t>> mask;
        if (pose_rows >= 0) {
            Var pk = nn::linear(t, pose_rows, p(t, a.pk.w), p(t, a.pk.b));
            Var pv = nn::linear(t, pose_rows, p(t, a.pv.w), p(t, a.pv.b));
            k = nn::concat_rows(t, k, pk);
            v = nn::concat_rows(t, v, pv);
            if (pose_mask) {
                const int64_t NP = pose_mask->dim(1);
                mask = std::make_shared<Tensor<uint8_t>>(std::vector<int64_t>{B, HW + NP});
                for (int64_t b = 0; b < B; ++b) {
                    for (int64_t i = 0; i < HW; ++i) mask->at2(b, i) = 1;
                    for (int64_t i = 0; i < NP; ++i) mask->at2(b, HW + i) = pose_mask->at2(b, i);
                }
            }
        }
        Var o = nn::attention(t, q, k, v, cfg_.num_heads, mask);
        o = nn::linear(t, o, p(t, a.o.w), p(t, a.o.b));
        return nn::add(t, x, nn::unflatten_hw(t, o, H, W));
    }

    Var cross_attn_forward(Tape<T>& t, Var x, Var g, const CrossAttnP& a) {
        const auto& xv = t.val(x);
        const int64_t H = xv.dim(2), W = xv.dim(3);
        Var hq = nn::group_norm(t, x, p(t, a.gn_q.g), p(t, a.gn_q.b), group_count(a.ch));
        Var q = nn::linear(t, nn::flatten_hw(t, hq), p(t, a.q.w), p(t, a.q.b));
        Var hk = nn::group_norm(t, g, p(t, a.gn_kv.g), p(t, a.gn_kv.b), group_count(a.ch));
        Var fk = nn::flatten_hw(t, hk);
        Var k = nn::linear(t, fk, p(t, a.k.w), p(t, a.k.b));
        Var v = nn::linear(t, fk, p(t, a.v.w), p(t, a.v.b));
        Var o = nn::attention(t, q, k, v, cfg_.num_heads);
        o = nn::linear(t, o, p(t, a.o.w), p(t, a.o.b));
        return nn::add(t, x, nn::unflatten_hw(t, o, H, W));
    }

    Var run_level(Tape<T>& t, Var x, const LevelP& lv, Var emb, Var pose_rows,
                  const std::shared_ptr<Tensor<uint8_t>>& pose_mask,
                  const std::map<int, Var>& gfeat, int res) {
        const bool attn = !lv.self_attn.empty() || !lv.cross_attn.empty();
        for (size_t j = 0; j < lv.blocks.size(); ++j) {
            x = res_forward(t, x, lv.blocks[j], emb);
            if (attn && j < lv.self_attn.size())
                x = self_attn_forward(t, x, lv.self_attn[j], pose_rows, pose_mask);
            if (attn && j < lv.cross_attn.size()) {
                auto it = gfeat.find(res);
                if (it == gfeat.end())
                    throw std::runtime_error("unet: no garment features at resolution " +
                                             std::to_string(res));
                x = cross_attn_forward(t, x, it->second, lv.cross_attn[j]);
            }
        }
        return x;
    }

    Var person_forward(Tape<T>& t, Var x, Var emb, Var pose_rows,
                       const std::shared_ptr<Tensor<uint8_t>>& pose_mask,
                       const std::map<int, Var>& gfeat) {
        const int L = cfg_.levels();
        x = nn::conv2d(t, x, p(t, person_.conv_in.w), p(t, person_.conv_in.b));
        std::vector<Var> skips;
        for (int i = 0; i < L; ++i) {
            x = run_level(t, x, person_.enc[size_t(i)], emb, pose_rows, pose_mask, gfeat,
                          cfg_.resolutions[size_t(i)]);
            if (i < L - 1) {
                skips.push_back(x);
                x = nn::avg_pool2(t, x);
            }
        }
        for (size_t k = 0; k < person_.dec.size(); ++k) {
            const int i = L - 2 - static_cast<int>(k);
            x = nn::upsample_nearest2(t, x);
            x = nn::concat_channels(t, {x, skips[size_t(i)]});
            x = run_level(t, x, person_.dec[k], emb, pose_rows, pose_mask, gfeat,
                          cfg_.resolutions[size_t(i)]);
        }
        x = nn::group_norm(t, x, p(t, person_.out_gn.g), p(t, person_.out_gn.b),
                           group_count(cfg_.channels[0]));
        x = nn::swish(t, x);
        return nn::conv2d(t, x, p(t, person_.out_conv.w), p(t, person_.out_conv.b));
    }

    std::map<int, Var> garment_forward(Tape<T>& t, Var x, Var emb) {
        const int L = cfg_.levels();
        std::map<int, Var> out;
        x = nn::conv2d(t, x, p(t, garment_.conv_in.w), p(t, garment_.conv_in.b));
        std::vector<Var> skips;
        for (int i = 0; i < L; ++i) {
            x = run_level(t, x, garment_.enc[size_t(i)], emb, -1, nullptr, {},
                          cfg_.resolutions[size_t(i)]);
            if (i < L - 1) {
                skips.push_back(x);
                x = nn::avg_pool2(t, x);
            }
        }
        if (cfg_.attention_at(cfg_.resolutions[size_t(L - 1)]))
            out[cfg_.resolutions[size_t(L - 1)]] = x;
        for (size_t k = 0; k < garment_.dec.size(); ++k) {
            const int i = L - 2 - static_cast<int>(k);
            x = nn::upsample_nearest2(t, x);
            x = nn::concat_channels(t, {x, skips[size_t(i)]});
            x = run_level(t, x, garment_.dec[k], emb, -1, nullptr, {},
                          cfg_.resolutions[size_t(i)]);
            if (cfg_.attention_at(cfg_.resolutions[size_t(i)]))
                out[cfg_.resolutions[size_t(i)]] = x;
        }
        return out;
    }

    void check_inputs(const UNetInputs<T>& in) const {
        if (in.z.ndim() != 4 || in.z.dim(1) != 3)
            throw std::invalid_argument("unet: z must be [B,3,H,W]");
        const int64_t B = in.z.dim(0), H = in.z.dim(2), W = in.z.dim(3);
        const int down = 1 << (cfg_.levels() - 1);
        if (H % down || W % down)
            throw std::invalid_argument("unet: spatial size not divisible through the pyramid");
        auto expect_img = [&](const Tensor<T>& x, const char* nm) {
            if (x.ndim() != 4 || x.dim(0) != B || x.dim(1) != 3 || x.dim(2) != H || x.dim(3) != W)
                throw std::invalid_argument(std::string("unet: bad shape for ") + nm);
        };
        if (cfg_.variant != UNetVariant::kEfficientSR && cfg_.use_agnostic)
            expect_img(in.agnostic, "agnostic");
        if (cfg_.use_low_res) expect_img(in.low_res_up, "low_res_up");
        if (cfg_.has_garment_stream() || cfg_.variant == UNetVariant::kConcat)
            expect_img(in.garment, "garment");
        if (cfg_.has_pose()) {
            auto expect_pose = [&](const Tensor<T>& x, const char* nm) {
                if (x.ndim() != 3 || x.dim(0) != B || x.dim(2) != 3)
                    throw std::invalid_argument(std::string("unet: bad shape for ") + nm);
            };
            expect_pose(in.person_pose, "person_pose");
            expect_pose(in.garment_pose, "garment_pose");
            if (in.person_pose.dim(1) != in.garment_pose.dim(1))
                throw std::invalid_argument("unet: pose keypoint counts differ");
        }
    }

    UNetConfig cfg_;
    bool counting_ = false;
    int64_t count_ = 0;
    std::map<std::string, int64_t> count_by_;
    ParamStore<T> store_;
    std::vector<Var> pv_;
    bool tape_grads_ = true;

    MlpP mlp_t_, mlp_na_agn_, mlp_na_gar_, mlp_na_low_;
    MlpP pose_enc_p_, pose_enc_g_;
    LinearP pose_proj_p_, pose_proj_g_;
    StreamP person_, garment_;
};

// Trainable-parameter total from shapes alone.
inline int64_t param_count(const UNetConfig& cfg) {
    return TryOnUNet<float>::count_params(cfg);
}

}  // namespace tryon

#endif
