#include "murrenet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace murre {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Known keys per section; typos in a config should fail loudly.
const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"model", {"d", "n_heads", "n_landmarks", "pinv_iters", "gate_hidden", "n_bins"}},
    {"train", {"lr", "weight_decay", "epochs", "n_splits", "train_fraction", "accum_steps", "seed", "risk_score"}},
    {"losses", {"alpha", "beta", "gamma", "sim_variant", "diff_sign"}},
    {"ablation", {"model", "use_mrd", "use_dhof", "use_sim", "use_diff", "use_recon"}},
    {"fusion", {"dhof_include_common"}},
    {"synthetic",
     {"n_patients", "n_p_min", "n_p_max", "d_in_p", "d_in_g", "n_genomic_groups", "shared_signal_strength",
      "specific_signal_strength_p", "specific_signal_strength_g", "noise_sigma", "censor_rate", "seed"}},
};

void check_known(const IniFile& ini, const std::string& origin) {
    for (const auto& [section, kv] : ini.sections()) {
        auto it = kKnownKeys.find(section);
        if (it == kKnownKeys.end()) throw ConfigError(origin + ": unknown section [" + section + "]");
        for (const auto& [key, _] : kv)
            if (!it->second.count(key))
                throw ConfigError(origin + ": unknown key '" + key + "' in section [" + section + "]");
    }
}

}  // namespace

IniFile IniFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path.string());
}

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
    IniFile ini;
    ini.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        ini.sections_[section][key] = value;
    }
    return ini;
}

std::string IniFile::field_name(const std::string& section, const std::string& key) const {
    return origin_ + ": [" + section + "] " + key;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string IniFile::get_str(const std::string& section, const std::string& key, const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double IniFile::get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = get_str(section, key, "");
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError(field_name(section, key) + ": malformed number '" + raw + "'");
    }
    if (pos != raw.size() || !std::isfinite(v))
        throw ConfigError(field_name(section, key) + ": malformed number '" + raw + "'");
    return v;
}

int IniFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = get_str(section, key, "");
    size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError(field_name(section, key) + ": malformed integer '" + raw + "'");
    }
    if (pos != raw.size()) throw ConfigError(field_name(section, key) + ": malformed integer '" + raw + "'");
    return static_cast<int>(v);
}

uint64_t IniFile::get_u64(const std::string& section, const std::string& key, uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string raw = get_str(section, key, "");
    size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(raw, &pos);
    } catch (const std::exception&) {
        throw ConfigError(field_name(section, key) + ": malformed unsigned integer '" + raw + "'");
    }
    if (pos != raw.size()) throw ConfigError(field_name(section, key) + ": malformed unsigned integer '" + raw + "'");
    return v;
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string raw = get_str(section, key, "");
    std::transform(raw.begin(), raw.end(), raw.begin(), [](unsigned char c) { return std::tolower(c); });
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw ConfigError(field_name(section, key) + ": malformed boolean '" + raw + "'");
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    return from_ini(IniFile::parse_file(path));
}

TrainConfig TrainConfig::from_ini(const IniFile& ini) {
    check_known(ini, "config");
    TrainConfig c;
    c.dims.d = ini.get_int("model", "d", c.dims.d);
    c.dims.n_heads = ini.get_int("model", "n_heads", c.dims.n_heads);
    c.dims.n_landmarks = ini.get_int("model", "n_landmarks", c.dims.n_landmarks);
    c.dims.pinv_iters = ini.get_int("model", "pinv_iters", c.dims.pinv_iters);
    c.dims.gate_hidden = ini.get_int("model", "gate_hidden", c.dims.gate_hidden);
    c.dims.n_bins = ini.get_int("model", "n_bins", c.dims.n_bins);

    c.lr = ini.get_double("train", "lr", c.lr);
    c.weight_decay = ini.get_double("train", "weight_decay", c.weight_decay);
    c.epochs = ini.get_int("train", "epochs", c.epochs);
    c.n_splits = ini.get_int("train", "n_splits", c.n_splits);
    c.train_fraction = ini.get_double("train", "train_fraction", c.train_fraction);
    c.accum_steps = ini.get_int("train", "accum_steps", c.accum_steps);
    c.seed_from_file = ini.has("train", "seed");
    c.seed = ini.get_u64("train", "seed", c.seed);

    const std::string rs = ini.get_str("train", "risk_score", "neg_sum_survival");
    if (rs == "neg_sum_survival")
        c.risk_score = RiskScore::NegSumSurvival;
    else if (rs == "sum_hazards")
        c.risk_score = RiskScore::SumHazards;
    else
        throw ConfigError("config: [train] risk_score must be neg_sum_survival or sum_hazards, got '" + rs + "'");

    c.weights.alpha = ini.get_double("losses", "alpha", c.weights.alpha);
    c.weights.beta = ini.get_double("losses", "beta", c.weights.beta);
    c.weights.gamma = ini.get_double("losses", "gamma", c.weights.gamma);

    const std::string sv = ini.get_str("losses", "sim_variant", "prose");
    if (sv == "prose")
        c.sim_variant = SimVariant::Prose;
    else if (sv == "literal")
        c.sim_variant = SimVariant::Literal;
    else
        throw ConfigError("config: [losses] sim_variant must be prose or literal, got '" + sv + "'");

    const std::string ds = ini.get_str("losses", "diff_sign", "plus");
    if (ds == "plus")
        c.diff_sign = DiffSign::Plus;
    else if (ds == "minus")
        c.diff_sign = DiffSign::Minus;
    else
        throw ConfigError("config: [losses] diff_sign must be plus or minus, got '" + ds + "'");

    if (ini.has("ablation", "model")) {
        const std::string m = ini.get_str("ablation", "model", "F");
        if (m.size() != 1) throw ConfigError("config: [ablation] model must be a single letter A..F");
        try {
            c.flags = AblationFlags::ladder(m[0]);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: [ablation] model: ") + e.what());
        }
    }
    c.flags.use_mrd = ini.get_bool("ablation", "use_mrd", c.flags.use_mrd);
    c.flags.use_dhof = ini.get_bool("ablation", "use_dhof", c.flags.use_dhof);
    c.flags.use_sim = ini.get_bool("ablation", "use_sim", c.flags.use_sim);
    c.flags.use_diff = ini.get_bool("ablation", "use_diff", c.flags.use_diff);
    c.flags.use_recon = ini.get_bool("ablation", "use_recon", c.flags.use_recon);

    c.pool_includes_common = ini.get_bool("fusion", "dhof_include_common", c.pool_includes_common);
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("config: [train] lr must be > 0");
    if (weight_decay < 0.0) throw ConfigError("config: [train] weight_decay must be >= 0");
    if (epochs < 0) throw ConfigError("config: [train] epochs must be >= 0");
    if (n_splits < 1) throw ConfigError("config: [train] n_splits must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("config: [train] train_fraction must lie in (0, 1)");
    if (accum_steps < 1) throw ConfigError("config: [train] accum_steps must be >= 1");
    if (dims.d < 1) throw ConfigError("config: [model] d must be >= 1");
    if (dims.n_heads < 1 || dims.d % dims.n_heads != 0)
        throw ConfigError("config: [model] d must be divisible by n_heads");
    if (dims.n_landmarks < 1) throw ConfigError("config: [model] n_landmarks must be >= 1");
    if (dims.pinv_iters < 1) throw ConfigError("config: [model] pinv_iters must be >= 1");
    if (dims.gate_hidden < 1) throw ConfigError("config: [model] gate_hidden must be >= 1");
    if (dims.n_bins < 2) throw ConfigError("config: [model] n_bins must be >= 2");
    if (!(weights.alpha >= 0.0) || !(weights.beta >= 0.0) || !(weights.gamma >= 0.0))
        throw ConfigError("config: [losses] weights must be >= 0");
    try {
        flags.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: [ablation] ") + e.what());
    }
}

SyntheticSpec synthetic_spec_from_file(const std::filesystem::path& path) {
    return synthetic_spec_from_ini(IniFile::parse_file(path));
}

SyntheticSpec synthetic_spec_from_ini(const IniFile& ini) {
    check_known(ini, "synthetic spec");
    SyntheticSpec s;
    s.n_patients = ini.get_int("synthetic", "n_patients", s.n_patients);
    s.n_p_min = ini.get_int("synthetic", "n_p_min", s.n_p_min);
    s.n_p_max = ini.get_int("synthetic", "n_p_max", s.n_p_max);
    s.d_in_p = ini.get_int("synthetic", "d_in_p", s.d_in_p);
    s.d_in_g = ini.get_int("synthetic", "d_in_g", s.d_in_g);
    s.n_genomic_groups = ini.get_int("synthetic", "n_genomic_groups", s.n_genomic_groups);
    s.shared_signal_strength = ini.get_double("synthetic", "shared_signal_strength", s.shared_signal_strength);
    s.specific_signal_strength_p = ini.get_double("synthetic", "specific_signal_strength_p", s.specific_signal_strength_p);
    s.specific_signal_strength_g = ini.get_double("synthetic", "specific_signal_strength_g", s.specific_signal_strength_g);
    s.noise_sigma = ini.get_double("synthetic", "noise_sigma", s.noise_sigma);
    s.censor_rate = ini.get_double("synthetic", "censor_rate", s.censor_rate);
    s.seed = ini.get_u64("synthetic", "seed", s.seed);
    try {
        validate_spec(s);
    } catch (const DataError& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    return s;
}

}  // namespace murre
