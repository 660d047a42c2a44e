#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "murrenet/model.hpp"

namespace murre {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minimal `[section]` / `key = value` reader; `#` and `;` start comments.
// Typed getters throw ConfigError naming the field on malformed values.
class IniFile {
public:
    static IniFile parse_file(const std::filesystem::path& path);
    static IniFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::string origin_;

    std::string field_name(const std::string& section, const std::string& key) const;
};

struct TrainConfig {
    ModelDims dims;  // d_in_p / d_in_g are filled in from the cohort
    double lr = 2e-4;
    double weight_decay = 1e-5;
    int epochs = 20;
    int n_splits = 5;
    double train_fraction = 0.8;
    int accum_steps = 1;
    uint64_t seed = 1;
    bool seed_from_file = false;
    LossWeights weights;
    SimVariant sim_variant = SimVariant::Prose;
    DiffSign diff_sign = DiffSign::Plus;
    AblationFlags flags;
    RiskScore risk_score = RiskScore::NegSumSurvival;
    bool pool_includes_common = true;

    static TrainConfig from_file(const std::filesystem::path& path);
    static TrainConfig from_ini(const IniFile& ini);
    void validate() const;
};

SyntheticSpec synthetic_spec_from_file(const std::filesystem::path& path);
SyntheticSpec synthetic_spec_from_ini(const IniFile& ini);

}  // namespace murre
