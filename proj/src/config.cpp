#include "tryon/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tryon {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            size_t pos = 0;
            out.push_back(std::stoi(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::invalid_argument("config: bad integer '" + tok + "' in " + key);
        }
    }
    if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
    return out;
}

int parse_int(const std::string& s, const std::string& key) {
    try {
        size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: bad integer '" + s + "' for " + key);
    }
}

double parse_double(const std::string& s, const std::string& key) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: bad number '" + s + "' for " + key);
    }
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "1" || s == "true" || s == "on") return true;
    if (s == "0" || s == "false" || s == "off") return false;
    throw std::invalid_argument("config: bad boolean '" + s + "' for " + key);
}

std::string list_str(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

int UNetConfig::person_in_channels() const {
    int c = 3;  // z_t
    if (variant != UNetVariant::kEfficientSR && use_agnostic) c += 3;
    if (use_low_res) c += 3;
    if (variant == UNetVariant::kConcat) c += 3;  // garment as channels
    return c;
}

void UNetConfig::validate() const {
    const size_t L = resolutions.size();
    if (L < 2) throw std::invalid_argument("unet: need at least 2 resolutions");
    if (channels.size() != L || block_repeats.size() != L)
        throw std::invalid_argument("unet: channels/block_repeats must match resolutions");
    for (size_t i = 0; i + 1 < L; ++i) {
        if (resolutions[i] != 2 * resolutions[i + 1])
            throw std::invalid_argument("unet: resolutions must halve at each level");
    }
    for (size_t i = 0; i < L; ++i) {
        if (resolutions[i] < 1 || channels[i] < 1 || block_repeats[i] < 1)
            throw std::invalid_argument("unet: non-positive resolution/channel/repeat");
        if (channels[i] % num_heads)
            throw std::invalid_argument("unet: channels must be divisible by num_heads");
    }
    if (num_heads < 1 || pose_embed_dim < 1 || emb_dim < 1)
        throw std::invalid_argument("unet: non-positive head/embed dims");
    if (variant == UNetVariant::kEfficientSR) {
        if (!attention_resolutions.empty())
            throw std::invalid_argument("unet: efficient_sr is attention-free");
        return;
    }
    for (int r : attention_resolutions)
        if (std::find(resolutions.begin(), resolutions.end(), r) == resolutions.end())
            throw std::invalid_argument("unet: attention resolution " + std::to_string(r) +
                                        " not in pyramid");
    if (variant == UNetVariant::kParallel) {
        if (std::find(resolutions.begin(), resolutions.end(), garment_stop_resolution) ==
            resolutions.end())
            throw std::invalid_argument("unet: garment_stop_resolution not in pyramid");
        for (int r : attention_resolutions)
            if (r > garment_stop_resolution)
                throw std::invalid_argument(
                    "unet: attention resolution above the garment stream's stop level");
    }
}

std::string UNetConfig::canonical() const {
    std::ostringstream os;
    os << "resolutions=" << list_str(resolutions) << ";channels=" << list_str(channels)
       << ";block_repeats=" << list_str(block_repeats)
       << ";attention=" << list_str(attention_resolutions)
       // the garment stream only exists for the parallel variant, so the
       // stop level must not perturb other variants' hashes
       << ";garment_stop="
       << (variant == UNetVariant::kParallel ? garment_stop_resolution : 0)
       << ";heads=" << num_heads
       << ";pose_dim=" << pose_embed_dim << ";emb_dim=" << emb_dim
       << ";variant=" << static_cast<int>(variant) << ";agnostic=" << (use_agnostic ? 1 : 0)
       << ";low_res=" << (use_low_res ? 1 : 0);
    return os.str();
}

void StageConfig::validate() const {
    if (name != "base" && name != "sr1" && name != "sr2")
        throw std::invalid_argument("stage: name must be base, sr1 or sr2");
    if (target_resolution < 4) throw std::invalid_argument("stage: target_resolution too small");
    const bool sr = name != "base";
    if (sr) {
        if (input_resolution < 1 || target_resolution % input_resolution)
            throw std::invalid_argument("stage: input_resolution must divide target_resolution");
        if (!unet.use_low_res) throw std::invalid_argument("stage: sr stages require low-res input");
    } else if (unet.use_low_res) {
        throw std::invalid_argument("stage: base stage takes no low-res input");
    }
    if (train.dropout_p < 0.0 || train.dropout_p > 1.0)
        throw std::invalid_argument("stage: dropout_p outside [0, 1]");
    if (train.batch_size < 1 || train.iterations < 0 || train.warmup_iters < 0 ||
        train.peak_lr <= 0.0)
        throw std::invalid_argument("stage: bad training parameters");
    unet.validate();
}

// Inference-time knobs (sampler, t_na constants) stay out of the hash so a
// checkpoint remains valid when only those change.
std::string StageConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "name=" << name << ";target=" << target_resolution << ";input=" << input_resolution
       << ";{" << unet.canonical() << "}"
       << ";train=" << train.batch_size << "," << train.iterations << "," << train.warmup_iters
       << "," << train.peak_lr << "," << train.dropout_p << "," << (train.ema ? 1 : 0);
    return os.str();
}

uint64_t StageConfig::config_hash() const { return fnv1a(canonical()); }

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config: empty key at line " +
                                                     std::to_string(lineno));
        if (kv.count(key)) throw std::invalid_argument("config: duplicate key " + key);
        kv[key] = val;
    }
    return kv;
}

StageConfig stage_config_from_kv(const std::map<std::string, std::string>& kv) {
    static const std::set<std::string> known = {
        "stage", "target_resolution", "input_resolution",
        "unet.resolutions", "unet.channels", "unet.block_repeats",
        "unet.attention_resolutions", "unet.garment_stop_resolution", "unet.num_heads",
        "unet.pose_embed_dim", "unet.emb_dim", "unet.variant", "unet.use_agnostic",
        "sampler.kind", "sampler.steps", "sampler.guidance", "sampler.eta",
        "train.batch_size", "train.iterations", "train.warmup_iters", "train.peak_lr",
        "train.dropout_p", "train.ema",
        "tna.agnostic", "tna.garment", "tna.low_res"};
    for (const auto& [k, v] : kv)
        if (!known.count(k)) throw std::invalid_argument("config: unknown key " + k);

    auto get = [&](const std::string& k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto require = [&](const std::string& k) -> const std::string& {
        const std::string* v = get(k);
        if (!v) throw std::invalid_argument("config: missing key " + k);
        return *v;
    };

    StageConfig sc;
    sc.name = require("stage");
    sc.target_resolution = parse_int(require("target_resolution"), "target_resolution");
    if (const auto* v = get("input_resolution"))
        sc.input_resolution = parse_int(*v, "input_resolution");

    UNetConfig& u = sc.unet;
    u.resolutions = parse_int_list(require("unet.resolutions"), "unet.resolutions");
    u.channels = parse_int_list(require("unet.channels"), "unet.channels");
    u.block_repeats = parse_int_list(require("unet.block_repeats"), "unet.block_repeats");
    if (const auto* v = get("unet.variant")) {
        if (*v == "parallel") u.variant = UNetVariant::kParallel;
        else if (*v == "efficient_sr") u.variant = UNetVariant::kEfficientSR;
        else if (*v == "concat") u.variant = UNetVariant::kConcat;
        else throw std::invalid_argument("config: unknown unet.variant " + *v);
    }
    if (const auto* v = get("unet.attention_resolutions"))
        u.attention_resolutions = parse_int_list(*v, "unet.attention_resolutions");
    else if (u.variant != UNetVariant::kEfficientSR)
        throw std::invalid_argument("config: missing key unet.attention_resolutions");
    if (const auto* v = get("unet.garment_stop_resolution"))
        u.garment_stop_resolution = parse_int(*v, "unet.garment_stop_resolution");
    if (const auto* v = get("unet.num_heads")) u.num_heads = parse_int(*v, "unet.num_heads");
    if (const auto* v = get("unet.pose_embed_dim"))
        u.pose_embed_dim = parse_int(*v, "unet.pose_embed_dim");
    if (const auto* v = get("unet.emb_dim")) u.emb_dim = parse_int(*v, "unet.emb_dim");
    if (const auto* v = get("unet.use_agnostic")) u.use_agnostic = parse_bool(*v, "unet.use_agnostic");
    u.use_low_res = sc.name != "base";

    if (const auto* v = get("sampler.kind")) {
        if (*v == "ddpm") sc.sampler.kind = SamplerKind::kDDPM;
        else if (*v == "ddim") sc.sampler.kind = SamplerKind::kDDIM;
        else throw std::invalid_argument("config: unknown sampler.kind " + *v);
    }
    if (const auto* v = get("sampler.steps")) sc.sampler.steps = parse_int(*v, "sampler.steps");
    if (const auto* v = get("sampler.guidance"))
        sc.sampler.guidance_weight = parse_double(*v, "sampler.guidance");
    if (const auto* v = get("sampler.eta")) sc.sampler.eta = parse_double(*v, "sampler.eta");

    if (const auto* v = get("train.batch_size")) sc.train.batch_size = parse_int(*v, "train.batch_size");
    if (const auto* v = get("train.iterations")) sc.train.iterations = parse_int(*v, "train.iterations");
    if (const auto* v = get("train.warmup_iters"))
        sc.train.warmup_iters = parse_int(*v, "train.warmup_iters");
    if (const auto* v = get("train.peak_lr")) sc.train.peak_lr = parse_double(*v, "train.peak_lr");
    if (const auto* v = get("train.dropout_p")) sc.train.dropout_p = parse_double(*v, "train.dropout_p");
    if (const auto* v = get("train.ema")) sc.train.ema = parse_bool(*v, "train.ema");

    if (const auto* v = get("tna.agnostic"))
        sc.inference_t_na.agnostic = static_cast<float>(parse_double(*v, "tna.agnostic"));
    if (const auto* v = get("tna.garment"))
        sc.inference_t_na.garment = static_cast<float>(parse_double(*v, "tna.garment"));
    if (const auto* v = get("tna.low_res"))
        sc.inference_t_na.low_res = static_cast<float>(parse_double(*v, "tna.low_res"));

    sc.validate();
    return sc;
}

StageConfig load_stage_config(const std::string& path) {
    return stage_config_from_kv(parse_kv_file(path));
}

std::string stage_config_to_kv(const StageConfig& sc) {
    std::ostringstream os;
    os.precision(17);
    os << "stage = " << sc.name << "\n";
    os << "target_resolution = " << sc.target_resolution << "\n";
    if (sc.name != "base") os << "input_resolution = " << sc.input_resolution << "\n";
    const UNetConfig& u = sc.unet;
    os << "unet.resolutions = " << list_str(u.resolutions) << "\n";
    os << "unet.channels = " << list_str(u.channels) << "\n";
    os << "unet.block_repeats = " << list_str(u.block_repeats) << "\n";
    if (!u.attention_resolutions.empty())
        os << "unet.attention_resolutions = " << list_str(u.attention_resolutions) << "\n";
    if (u.variant == UNetVariant::kParallel)
        os << "unet.garment_stop_resolution = " << u.garment_stop_resolution << "\n";
    os << "unet.num_heads = " << u.num_heads << "\n";
    os << "unet.pose_embed_dim = " << u.pose_embed_dim << "\n";
    os << "unet.emb_dim = " << u.emb_dim << "\n";
    os << "unet.variant = "
       << (u.variant == UNetVariant::kParallel
               ? "parallel"
               : u.variant == UNetVariant::kEfficientSR ? "efficient_sr" : "concat")
       << "\n";
    os << "unet.use_agnostic = " << (u.use_agnostic ? "1" : "0") << "\n";
    os << "sampler.kind = " << (sc.sampler.kind == SamplerKind::kDDPM ? "ddpm" : "ddim") << "\n";
    os << "sampler.steps = " << sc.sampler.steps << "\n";
    os << "sampler.guidance = " << sc.sampler.guidance_weight << "\n";
    os << "sampler.eta = " << sc.sampler.eta << "\n";
    os << "train.batch_size = " << sc.train.batch_size << "\n";
    os << "train.iterations = " << sc.train.iterations << "\n";
    os << "train.warmup_iters = " << sc.train.warmup_iters << "\n";
    os << "train.peak_lr = " << sc.train.peak_lr << "\n";
    os << "train.dropout_p = " << sc.train.dropout_p << "\n";
    os << "train.ema = " << (sc.train.ema ? "1" : "0") << "\n";
    os << "tna.agnostic = " << sc.inference_t_na.agnostic << "\n";
    os << "tna.garment = " << sc.inference_t_na.garment << "\n";
    os << "tna.low_res = " << sc.inference_t_na.low_res << "\n";
    return os.str();
}

void save_stage_config(const StageConfig& sc, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << stage_config_to_kv(sc);
}

}  // namespace tryon
