#include "cardiomix/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "cardiomix/errors.hpp"

namespace cardiomix {

double RunConfig::effective_alpha() const {
    return mix_alpha ? *mix_alpha : default_mix_alpha(mix_method);
}

double RunConfig::effective_learning_rate() const {
    return learning_rate ? *learning_rate : default_learning_rate(arch);
}

int RunConfig::effective_threads() const {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

ModelSpec RunConfig::model_spec() const {
    return {arch, preprocess.target_height, preprocess.target_width, 1, num_classes};
}

MixParams RunConfig::mix_params(std::uint64_t stage_seed) const {
    return {mix_method, effective_alpha(), stage_seed};
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = effective_learning_rate();
    tc.momentum = momentum;
    tc.seed = derive_seed(seed, kStageTrain);
    tc.init_scale = init_scale;
    if (mix_enabled) tc.augment = MixSettings{mix_params(0), mix_fraction};
    return tc;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError(where + ": expected an integer, got '" + v + "'");
}

std::uint64_t parse_uint64(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError(where + ": expected an unsigned integer, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError(where + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError(where + ": expected true/false, got '" + v + "'");
}

void check(bool ok, const std::string& where, const std::string& msg) {
    if (!ok) throw UsageError(where + ": " + msg);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where) {
    if (key == "seed") {
        cfg.seed = parse_uint64(value, where);
    } else if (key == "threads") {
        const long long t = parse_int(value, where);
        check(t >= 0, where, "threads must be >= 0");
        cfg.threads = static_cast<int>(t);
    } else if (key == "preprocess.sigma") {
        const double s = parse_double(value, where);
        check(s > 0.0, where, "sigma must be > 0");
        cfg.preprocess.sigma = s;
    } else if (key == "preprocess.radius") {
        const long long r = parse_int(value, where);
        check(r >= 0, where, "radius must be >= 0");
        cfg.preprocess.radius = static_cast<int>(r);
    } else if (key == "preprocess.target_height" || key == "preprocess.target_width") {
        const long long d = parse_int(value, where);
        check(d >= 1, where, "target dimensions must be >= 1");
        (key == "preprocess.target_height" ? cfg.preprocess.target_height
                                           : cfg.preprocess.target_width) =
            static_cast<int>(d);
    } else if (key == "augment.method") {
        const std::optional<MixMethod> m = mix_method_from_name(value);
        check(m.has_value(), where, "unknown method '" + value + "' (cutmix|mixup)");
        cfg.mix_method = *m;
    } else if (key == "augment.alpha") {
        const double a = parse_double(value, where);
        check(a > 0.0, where, "alpha must be > 0");
        cfg.mix_alpha = a;
    } else if (key == "augment.fraction") {
        const double f = parse_double(value, where);
        check(f >= 0.0 && f <= 1.0, where, "fraction must be in [0,1]");
        cfg.mix_fraction = f;
    } else if (key == "augment.enabled") {
        cfg.mix_enabled = parse_bool(value, where);
    } else if (key == "model.arch") {
        const std::optional<Arch> a = arch_from_name(value);
        check(a.has_value(), where, "unknown arch '" + value + "' (logistic|smallcnn|tinyvit)");
        cfg.arch = *a;
    } else if (key == "model.classes") {
        const long long k = parse_int(value, where);
        check(k >= 2, where, "classes must be >= 2");
        cfg.num_classes = static_cast<int>(k);
    } else if (key == "train.epochs") {
        const long long e = parse_int(value, where);
        check(e >= 0, where, "epochs must be >= 0");
        cfg.epochs = static_cast<int>(e);
    } else if (key == "train.batch") {
        const long long b = parse_int(value, where);
        check(b >= 1, where, "batch must be >= 1");
        cfg.batch_size = static_cast<int>(b);
    } else if (key == "train.lr") {
        const double lr = parse_double(value, where);
        check(lr >= 0.0, where, "lr must be >= 0");
        cfg.learning_rate = lr;
    } else if (key == "train.momentum") {
        const double m = parse_double(value, where);
        check(m >= 0.0 && m < 1.0, where, "momentum must be in [0,1)");
        cfg.momentum = m;
    } else if (key == "train.init_scale") {
        const double s = parse_double(value, where);
        check(s > 0.0, where, "init_scale must be > 0");
        cfg.init_scale = s;
    } else if (key == "eval.folds") {
        const long long k = parse_int(value, where);
        check(k >= 2, where, "folds must be >= 2");
        cfg.folds = static_cast<int>(k);
    } else if (key == "occlusion.window") {
        const long long w = parse_int(value, where);
        check(w >= 1, where, "window must be >= 1");
        cfg.occlusion.window = static_cast<int>(w);
    } else if (key == "occlusion.stride") {
        const long long s = parse_int(value, where);
        check(s >= 1, where, "stride must be >= 1");
        cfg.occlusion.stride = static_cast<int>(s);
    } else if (key == "occlusion.baseline") {
        const double b = parse_double(value, where);
        check(b >= 0.0 && b <= 1.0, where, "baseline must be in [0,1]");
        cfg.occlusion.baseline = b;
    } else if (key == "occlusion.target") {
        const std::optional<AttributionTarget> t = attribution_target_from_name(value);
        check(t.has_value(), where, "unknown target '" + value + "' (logit|probability)");
        cfg.occlusion.target = *t;
    } else if (key == "occlusion.class") {
        const long long c = parse_int(value, where);
        check(c >= 0, where, "class must be >= 0");
        cfg.occlusion.target_class = static_cast<int>(c);
    } else if (key == "gen.per_class") {
        const long long n = parse_int(value, where);
        check(n >= 1, where, "per_class must be >= 1");
        cfg.gen.per_class = static_cast<int>(n);
    } else if (key == "gen.height" || key == "gen.width") {
        const long long d = parse_int(value, where);
        check(d >= 4, where, "gen dimensions must be >= 4");
        (key == "gen.height" ? cfg.gen.height : cfg.gen.width) = static_cast<int>(d);
    } else if (key == "gen.radius_min") {
        cfg.gen.radius_min = parse_double(value, where);
    } else if (key == "gen.radius_max") {
        cfg.gen.radius_max = parse_double(value, where);
    } else if (key == "gen.contrast") {
        const double c = parse_double(value, where);
        check(c >= 0.0 && c <= 1.0, where, "contrast must be in [0,1]");
        cfg.gen.contrast = c;
    } else if (key == "gen.noise") {
        const double n = parse_double(value, where);
        check(n >= 0.0 && n <= 1.0, where, "noise must be in [0,1]");
        cfg.gen.noise = n;
    } else {
        throw UsageError(where + ": unknown key '" + key + "'");
    }
}

void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& name) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::string where = name + " line " + std::to_string(line_no);
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw UsageError(where + ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw UsageError(where + ": empty key");
        apply_config_entry(cfg, key, value, where);
    }
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config '" + path + "'");
    RunConfig cfg;
    apply_config_text(cfg, in, path);
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return std::string(buf);
    };
    out << "# resolved configuration (defaults < config file < flags)\n";
    out << "# rng: splitmix64\n";
    out << "seed = " << cfg.seed << "\n";
    out << "threads = " << cfg.threads << "\n";
    out << "preprocess.sigma = " << num(cfg.preprocess.sigma) << "\n";
    out << "preprocess.radius = " << cfg.preprocess.radius << "\n";
    out << "preprocess.target_height = " << cfg.preprocess.target_height << "\n";
    out << "preprocess.target_width = " << cfg.preprocess.target_width << "\n";
    out << "augment.method = " << mix_method_name(cfg.mix_method) << "\n";
    out << "augment.alpha = " << num(cfg.effective_alpha()) << "\n";
    out << "augment.fraction = " << num(cfg.mix_fraction) << "\n";
    out << "augment.enabled = " << (cfg.mix_enabled ? "true" : "false") << "\n";
    out << "model.arch = " << arch_name(cfg.arch) << "\n";
    out << "model.classes = " << cfg.num_classes << "\n";
    out << "train.epochs = " << cfg.epochs << "\n";
    out << "train.batch = " << cfg.batch_size << "\n";
    out << "train.lr = " << num(cfg.effective_learning_rate()) << "\n";
    out << "train.momentum = " << num(cfg.momentum) << "\n";
    out << "train.init_scale = " << num(cfg.init_scale) << "\n";
    out << "eval.folds = " << cfg.folds << "\n";
    out << "occlusion.window = " << cfg.occlusion.window << "\n";
    out << "occlusion.stride = " << cfg.occlusion.stride << "\n";
    out << "occlusion.baseline = " << num(cfg.occlusion.baseline) << "\n";
    out << "occlusion.target = " << attribution_target_name(cfg.occlusion.target) << "\n";
    out << "occlusion.class = " << cfg.occlusion.target_class << "\n";
    out << "gen.per_class = " << cfg.gen.per_class << "\n";
    out << "gen.height = " << cfg.gen.height << "\n";
    out << "gen.width = " << cfg.gen.width << "\n";
    out << "gen.radius_min = " << num(cfg.gen.radius_min) << "\n";
    out << "gen.radius_max = " << num(cfg.gen.radius_max) << "\n";
    out << "gen.contrast = " << num(cfg.gen.contrast) << "\n";
    out << "gen.noise = " << num(cfg.gen.noise) << "\n";
    return out.str();
}

}  // namespace cardiomix
