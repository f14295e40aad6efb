#include "ssvif/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ssvif/errors.hpp"

namespace ssvif {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

int64_t parse_int(const std::string& v, int line) {
    int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        fail(line, "expected an integer, got '" + v + "'");
    }
    return out;
}

double parse_real(const std::string& v, int line) {
    try {
        size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) fail(line, "expected a number, got '" + v + "'");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "expected true|false, got '" + v + "'");
}

} // namespace

Config parse_config_text(const std::string& text) {
    Config cfg;
    using Setter = std::function<void(const std::string&, int)>;
    const std::map<std::string, Setter> setters = {
        {"dataset_root", [&](const std::string& v, int) { cfg.dataset_root = v; }},
        {"out_dir", [&](const std::string& v, int) { cfg.out_dir = v; }},
        {"seed", [&](const std::string& v, int l) { cfg.seed = uint64_t(parse_int(v, l)); }},
        {"n_classes", [&](const std::string& v, int l) { cfg.n_classes = int(parse_int(v, l)); }},
        {"lambda1", [&](const std::string& v, int l) { cfg.lambda1 = parse_real(v, l); }},
        {"lambda2", [&](const std::string& v, int l) { cfg.lambda2 = parse_real(v, l); }},
        {"lambda3", [&](const std::string& v, int l) { cfg.lambda3 = parse_real(v, l); }},
        {"lambda4", [&](const std::string& v, int l) { cfg.lambda4 = parse_real(v, l); }},
        {"lr", [&](const std::string& v, int l) { cfg.lr = parse_real(v, l); }},
        {"batch_size", [&](const std::string& v, int l) { cfg.batch_size = int(parse_int(v, l)); }},
        {"crop", [&](const std::string& v, int l) { cfg.crop = int(parse_int(v, l)); }},
        {"max_epochs", [&](const std::string& v, int l) { cfg.max_epochs = int(parse_int(v, l)); }},
        {"patience", [&](const std::string& v, int l) { cfg.patience = int(parse_int(v, l)); }},
        {"stage1_cap", [&](const std::string& v, int l) { cfg.stage1_cap = int(parse_int(v, l)); }},
        {"scheduler",
         [&](const std::string& v, int l) {
             try {
                 cfg.scheduler = scheduler_from_string(v);
             } catch (const ConfigError& e) {
                 fail(l, e.what());
             }
         }},
        {"gdwa_temperature",
         [&](const std::string& v, int l) { cfg.gdwa_temperature = parse_real(v, l); }},
        {"fixed_wcsc", [&](const std::string& v, int l) { cfg.fixed_wcsc = parse_real(v, l); }},
        {"gdwa_norm_sample_every",
         [&](const std::string& v, int l) { cfg.gdwa_norm_sample_every = int(parse_int(v, l)); }},
        {"deterministic",
         [&](const std::string& v, int l) { cfg.deterministic = parse_bool(v, l); }},
        {"dice_eps", [&](const std::string& v, int l) { cfg.dice_eps = parse_real(v, l); }},
        {"ce_normalization",
         [&](const std::string& v, int l) {
             if (v == "mean") {
                 cfg.ce_normalization = CeNormalization::mean;
             } else if (v == "sum") {
                 cfg.ce_normalization = CeNormalization::sum;
             } else {
                 fail(l, "ce_normalization must be mean|sum, got '" + v + "'");
             }
         }},
        {"csc_enabled", [&](const std::string& v, int l) { cfg.csc_enabled = parse_bool(v, l); }},
        {"two_stage", [&](const std::string& v, int l) { cfg.two_stage = parse_bool(v, l); }},
    };

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end()) fail(line_no, "unknown key '" + key + "'");
        if (value.empty()) fail(line_no, "missing value for '" + key + "'");
        it->second(value, line_no);
    }
    cfg.validate();
    return cfg;
}

Config parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void Config::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("config: ") + name + " must be positive");
        }
    };
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0) {
        throw ConfigError("config: lambda weights must be nonnegative");
    }
    positive(lr, "lr");
    positive(double(batch_size), "batch_size");
    positive(double(crop), "crop");
    positive(double(max_epochs), "max_epochs");
    positive(double(patience), "patience");
    positive(double(stage1_cap), "stage1_cap");
    positive(gdwa_temperature, "gdwa_temperature");
    positive(fixed_wcsc, "fixed_wcsc");
    positive(double(gdwa_norm_sample_every), "gdwa_norm_sample_every");
    positive(dice_eps, "dice_eps");
    if (n_classes < 2) throw ConfigError("config: n_classes must be >= 2");
    if (crop % 4 != 0) throw ConfigError("config: crop must be divisible by 4");
    if (crop < 11) throw ConfigError("config: crop must be at least 11 (SSIM window)");
}

std::string Config::echo() const {
    std::ostringstream os;
    os << "dataset_root = " << dataset_root << "\n";
    os << "out_dir = " << out_dir << "\n";
    os << "seed = " << seed << "\n";
    os << "n_classes = " << n_classes << "\n";
    os << "lambda1 = " << lambda1 << "\n";
    os << "lambda2 = " << lambda2 << "\n";
    os << "lambda3 = " << lambda3 << "\n";
    os << "lambda4 = " << lambda4 << "\n";
    os << "lr = " << lr << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "crop = " << crop << "\n";
    os << "max_epochs = " << max_epochs << "\n";
    os << "patience = " << patience << "\n";
    os << "stage1_cap = " << stage1_cap << "\n";
    os << "scheduler = " << to_string(scheduler) << "\n";
    os << "gdwa_temperature = " << gdwa_temperature << "\n";
    os << "fixed_wcsc = " << fixed_wcsc << "\n";
    os << "gdwa_norm_sample_every = " << gdwa_norm_sample_every << "\n";
    os << "deterministic = " << (deterministic ? "true" : "false") << "\n";
    os << "dice_eps = " << dice_eps << "\n";
    os << "ce_normalization = " << (ce_normalization == CeNormalization::mean ? "mean" : "sum")
       << "\n";
    os << "csc_enabled = " << (csc_enabled ? "true" : "false") << "\n";
    os << "two_stage = " << (two_stage ? "true" : "false") << "\n";
    return os.str();
}

} // namespace ssvif
