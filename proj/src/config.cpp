#include "sandesc/config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include "sandesc/serial.hpp"

namespace sandesc {

namespace {

double parse_double(const KvLine& kv) {
    try {
        size_t used = 0;
        const double v = std::stod(kv.value, &used);
        SD_CHECK(used == kv.value.size(), "trailing characters");
        return v;
    } catch (const std::exception&) {
        fail("config: bad numeric value for key '", kv.key, "' on line ", kv.line_no);
    }
}

long parse_long(const KvLine& kv) {
    try {
        size_t used = 0;
        const long v = std::stol(kv.value, &used);
        SD_CHECK(used == kv.value.size(), "trailing characters");
        return v;
    } catch (const std::exception&) {
        fail("config: bad integer value for key '", kv.key, "' on line ", kv.line_no);
    }
}

bool parse_bool(const KvLine& kv) {
    if (kv.value == "1" || kv.value == "true") return true;
    if (kv.value == "0" || kv.value == "false") return false;
    fail("config: bad boolean value for key '", kv.key, "' on line ", kv.line_no);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    using Setter = std::function<void(TrainConfig&, const KvLine&)>;
    static const std::map<std::string, Setter> setters = {
        {"eta_max", [](TrainConfig& c, const KvLine& v) { c.eta_max = parse_double(v); }},
        {"eta_min", [](TrainConfig& c, const KvLine& v) { c.eta_min = parse_double(v); }},
        {"warmup_steps", [](TrainConfig& c, const KvLine& v) { c.warmup_steps = parse_long(v); }},
        {"lr_decay", [](TrainConfig& c, const KvLine& v) { c.lr_decay = parse_double(v); }},
        {"beta1", [](TrainConfig& c, const KvLine& v) { c.beta1 = parse_double(v); }},
        {"beta2", [](TrainConfig& c, const KvLine& v) { c.beta2 = parse_double(v); }},
        {"weight_decay", [](TrainConfig& c, const KvLine& v) { c.weight_decay = parse_double(v); }},
        {"adam_epsilon", [](TrainConfig& c, const KvLine& v) { c.adam_epsilon = parse_double(v); }},
        {"margin", [](TrainConfig& c, const KvLine& v) { c.margin = parse_double(v); }},
        {"gamma_init", [](TrainConfig& c, const KvLine& v) { c.gamma_init = parse_double(v); }},
        {"gamma_decay", [](TrainConfig& c, const KvLine& v) { c.gamma_decay = parse_double(v); }},
        {"batch_size", [](TrainConfig& c, const KvLine& v) { c.batch_size = int(parse_long(v)); }},
        {"steps", [](TrainConfig& c, const KvLine& v) { c.steps = parse_long(v); }},
        {"crop_size", [](TrainConfig& c, const KvLine& v) { c.crop_size = int(parse_long(v)); }},
        {"rotation_range", [](TrainConfig& c, const KvLine& v) { c.rotation_range = parse_double(v); }},
        {"scale_min", [](TrainConfig& c, const KvLine& v) { c.scale_min = parse_double(v); }},
        {"scale_max", [](TrainConfig& c, const KvLine& v) { c.scale_max = parse_double(v); }},
        {"translate_frac", [](TrainConfig& c, const KvLine& v) { c.translate_frac = parse_double(v); }},
        {"perspective_frac", [](TrainConfig& c, const KvLine& v) { c.perspective_frac = parse_double(v); }},
        {"photometric_frac", [](TrainConfig& c, const KvLine& v) { c.photometric_frac = parse_double(v); }},
        {"texture_sources", [](TrainConfig& c, const KvLine& v) { c.texture_sources = int(parse_long(v)); }},
        {"seed", [](TrainConfig& c, const KvLine& v) { c.seed = uint64_t(parse_long(v)); }},
        {"grid_stride", [](TrainConfig& c, const KvLine& v) { c.grid_stride = int(parse_long(v)); }},
        {"reproj_tau", [](TrainConfig& c, const KvLine& v) { c.reproj_tau = parse_double(v); }},
        {"train_keypoints", [](TrainConfig& c, const KvLine& v) { c.train_keypoints = int(parse_long(v)); }},
        {"log_every", [](TrainConfig& c, const KvLine& v) { c.log_every = parse_long(v); }},
        {"val_every", [](TrainConfig& c, const KvLine& v) { c.val_every = parse_long(v); }},
        {"val_pairs", [](TrainConfig& c, const KvLine& v) { c.val_pairs = int(parse_long(v)); }},
        {"net_k", [](TrainConfig& c, const KvLine& v) { c.net_k = int(parse_long(v)); }},
        {"net_widths",
         [](TrainConfig& c, const KvLine& v) { c.net_widths = parse_int_list(v.value, "config: net_widths"); }},
        {"use_attention", [](TrainConfig& c, const KvLine& v) { c.use_attention = parse_bool(v); }},
        {"use_residual", [](TrainConfig& c, const KvLine& v) { c.use_residual = parse_bool(v); }},
    };

    for (const auto& kv : parse_kv_text(text)) {
        auto it = setters.find(kv.key);
        SD_CHECK(it != setters.end(), "config: unknown key '", kv.key, "' on line ", kv.line_no);
        it->second(cfg, kv);
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    SD_CHECK(in, "config: cannot open '", path, "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

std::string config_text(const TrainConfig& c) {
    std::ostringstream os;
    os << "eta_max = " << format_double(c.eta_max) << "\n";
    os << "eta_min = " << format_double(c.eta_min) << "\n";
    os << "warmup_steps = " << c.warmup_steps << "\n";
    os << "lr_decay = " << format_double(c.lr_decay) << "\n";
    os << "beta1 = " << format_double(c.beta1) << "\n";
    os << "beta2 = " << format_double(c.beta2) << "\n";
    os << "weight_decay = " << format_double(c.weight_decay) << "\n";
    os << "adam_epsilon = " << format_double(c.adam_epsilon) << "\n";
    os << "margin = " << format_double(c.margin) << "\n";
    os << "gamma_init = " << format_double(c.gamma_init) << "\n";
    os << "gamma_decay = " << format_double(c.gamma_decay) << "\n";
    os << "batch_size = " << c.batch_size << "\n";
    os << "steps = " << c.steps << "\n";
    os << "crop_size = " << c.crop_size << "\n";
    os << "rotation_range = " << format_double(c.rotation_range) << "\n";
    os << "scale_min = " << format_double(c.scale_min) << "\n";
    os << "scale_max = " << format_double(c.scale_max) << "\n";
    os << "translate_frac = " << format_double(c.translate_frac) << "\n";
    os << "perspective_frac = " << format_double(c.perspective_frac) << "\n";
    os << "photometric_frac = " << format_double(c.photometric_frac) << "\n";
    os << "texture_sources = " << c.texture_sources << "\n";
    os << "seed = " << c.seed << "\n";
    os << "grid_stride = " << c.grid_stride << "\n";
    os << "reproj_tau = " << format_double(c.reproj_tau) << "\n";
    os << "train_keypoints = " << c.train_keypoints << "\n";
    os << "log_every = " << c.log_every << "\n";
    os << "val_every = " << c.val_every << "\n";
    os << "val_pairs = " << c.val_pairs << "\n";
    os << "net_k = " << c.net_k << "\n";
    os << "net_widths = " << join_int_list(c.net_widths) << "\n";
    os << "use_attention = " << (c.use_attention ? 1 : 0) << "\n";
    os << "use_residual = " << (c.use_residual ? 1 : 0) << "\n";
    return os.str();
}

}  // namespace sandesc
