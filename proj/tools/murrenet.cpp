// Command-line surface: synthetic cohort generation, training with
// Monte-Carlo cross-validation, evaluation, median risk stratification with
// Kaplan-Meier export and the log-rank test, and finite-difference gradient
// verification.
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 training failure,
// 4 degenerate stratification, 5 gradient check failure.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "murrenet/cohort_io.hpp"
#include "murrenet/training.hpp"

namespace fs = std::filesystem;
using murre::Cohort;
using murre::TrainConfig;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitTrain = 3;
constexpr int kExitStratify = 4;
constexpr int kExitGradcheck = 5;

struct SeedOpt {
    bool given = false;
    uint64_t value = 0;
};

// Seed precedence: --seed flag, then the config file, then MURRENET_SEED.
uint64_t resolve_seed(const SeedOpt& flag, bool file_has_seed, uint64_t file_seed, uint64_t fallback) {
    if (flag.given) return flag.value;
    if (file_has_seed) return file_seed;
    if (const char* env = std::getenv("MURRENET_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw murre::ConfigError(std::string("MURRENET_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return fallback;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_run_manifest(const fs::path& out_dir, const std::string& command, const std::string& config_path,
                        const ordered_json& resolved_config, uint64_t seed, const std::string& cohort_fingerprint,
                        const std::vector<std::string>& outputs, double wall_clock_s,
                        const ordered_json& metric_summary) {
    ordered_json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["config"] = resolved_config;
    j["seed"] = seed;
    j["cohort_fingerprint"] = cohort_fingerprint;
    j["outputs"] = outputs;
    j["wall_clock_seconds"] = wall_clock_s;
    j["metric_summary"] = metric_summary;
    std::ofstream out(out_dir / "run_manifest.json", std::ios::binary);
    if (!out) throw murre::DataError("cannot write run manifest in " + out_dir.string());
    out << j.dump(1) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw murre::DataError("cannot write " + path.string());
    out << text;
}

std::string format_c_index_line(double mean, double stddev, size_t folds) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "C-index: %.6f +/- %.6f over %zu fold(s)", mean, stddev, folds);
    return buf;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, const SeedOpt& seed_opt) {
    Stopwatch watch;
    murre::IniFile ini = murre::IniFile::parse_file(spec_path);
    murre::SyntheticSpec spec = murre::synthetic_spec_from_ini(ini);
    spec.seed = resolve_seed(seed_opt, ini.has("synthetic", "seed"), spec.seed, spec.seed);
    Cohort cohort = murre::make_synthetic_cohort(spec);
    murre::write_cohort(out_dir, cohort);

    long events = 0;
    for (const auto& p : cohort.patients) events += p.event_observed ? 1 : 0;
    ordered_json summary = {{"n_patients", cohort.patients.size()}, {"n_events", events}};
    std::vector<std::string> outputs = {"manifest.tsv"};
    for (const auto& p : cohort.patients) {
        outputs.push_back(p.patient_id + "_path.bin");
        outputs.push_back(p.patient_id + "_gen.bin");
    }
    write_run_manifest(out_dir, "synth", spec_path, ordered_json::parse(R"({})"), spec.seed,
                       murre::fingerprint_cohort(out_dir), outputs, watch.seconds(), summary);
    std::cout << "wrote " << cohort.patients.size() << " patients (" << events << " events) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& cohort_dir, const std::string& out_dir,
              const SeedOpt& seed_opt, int jobs) {
    Stopwatch watch;
    murre::IniFile ini = murre::IniFile::parse_file(config_path);
    TrainConfig config = TrainConfig::from_ini(ini);
    config.seed = resolve_seed(seed_opt, config.seed_from_file, config.seed, config.seed);

    Cohort cohort = murre::read_cohort(cohort_dir);
    const std::string fingerprint = murre::fingerprint_cohort(cohort_dir);

    murre::FitResult fit = murre::run_cv(cohort, config, jobs);

    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    ordered_json folds = ordered_json::array();
    for (size_t k = 0; k < fit.folds.size(); ++k) {
        const murre::FoldResult& fold = fit.folds[k];
        murre::Checkpoint ck;
        ck.config = config;
        ck.d_in_p = cohort.patients.front().pathology_tokens.cols;
        ck.d_in_g = cohort.patients.front().genomic_groups.cols;
        ck.bin_edges = fold.bin_edges;
        ck.params = fold.params;
        ck.val_c_index = fold.val_c_index;
        ck.fold_index = static_cast<int>(k);
        const std::string name = "checkpoint_fold" + std::to_string(k) + ".json";
        murre::save_checkpoint(fs::path(out_dir) / name, ck);
        outputs.push_back(name);

        ordered_json epochs = ordered_json::array();
        for (const auto& e : fold.epoch_means)
            epochs.push_back({{"l_sim", e.l_sim},
                              {"l_diff", e.l_diff},
                              {"l_recon", e.l_recon},
                              {"l_surv", e.l_surv},
                              {"l_total", e.l_total}});
        folds.push_back({{"fold", k},
                         {"val_c_index", fold.val_c_index},
                         {"bin_edges", fold.bin_edges},
                         {"epoch_mean_losses", std::move(epochs)}});
    }

    ordered_json metrics;
    metrics["c_index"] = {{"per_fold", [&] {
                               std::vector<double> v;
                               for (const auto& f : fit.folds) v.push_back(f.val_c_index);
                               return v;
                           }()},
                          {"mean", fit.mean_c_index},
                          {"std", fit.std_c_index}};
    metrics["folds"] = std::move(folds);
    metrics["config"] = ordered_json::parse(murre::config_to_json_string(config));
    metrics["cohort_fingerprint"] = fingerprint;
    write_text(fs::path(out_dir) / "metrics.json", metrics.dump(1) + "\n");
    outputs.push_back("metrics.json");

    const std::string line = format_c_index_line(fit.mean_c_index, fit.std_c_index, fit.folds.size());
    write_run_manifest(out_dir, "train", config_path, ordered_json::parse(murre::config_to_json_string(config)),
                       config.seed, fingerprint, outputs, watch.seconds(),
                       {{"mean_c_index", fit.mean_c_index}, {"std_c_index", fit.std_c_index}});
    std::cout << line << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& cohort_dir, const std::string& out_dir) {
    Stopwatch watch;
    murre::Checkpoint ck = murre::load_checkpoint(checkpoint_path);
    Cohort cohort = murre::read_cohort(cohort_dir);
    murre::Model model = murre::model_from_checkpoint(ck);

    std::vector<double> risks, times;
    std::vector<bool> events;
    for (const auto& p : cohort.patients) {
        risks.push_back(model.predict(p, ck.config.risk_score).risk);
        times.push_back(p.survival_time);
        events.push_back(p.event_observed);
    }
    const double c = murre::concordance_index(risks, times, events);
    char buf[64];
    std::snprintf(buf, sizeof buf, "C-index: %.6f", c);
    std::cout << buf << "\n";

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::string tsv = "patient_id\trisk\tsurvival_time\tevent_observed\n";
        for (size_t i = 0; i < cohort.patients.size(); ++i) {
            char row[160];
            std::snprintf(row, sizeof row, "%s\t%.17g\t%.17g\t%d\n", cohort.patients[i].patient_id.c_str(), risks[i],
                          times[i], events[i] ? 1 : 0);
            tsv += row;
        }
        write_text(fs::path(out_dir) / "risks.tsv", tsv);
        write_run_manifest(out_dir, "eval", checkpoint_path,
                           ordered_json::parse(murre::config_to_json_string(ck.config)), ck.config.seed,
                           murre::fingerprint_cohort(cohort_dir), {"risks.tsv"}, watch.seconds(), {{"c_index", c}});
    }
    return 0;
}

int cmd_stratify(const std::string& checkpoint_path, const std::string& cohort_dir, const std::string& out_dir) {
    Stopwatch watch;
    murre::Checkpoint ck = murre::load_checkpoint(checkpoint_path);
    Cohort cohort = murre::read_cohort(cohort_dir);
    murre::Model model = murre::model_from_checkpoint(ck);

    std::vector<double> risks;
    for (const auto& p : cohort.patients) risks.push_back(model.predict(p, ck.config.risk_score).risk);

    auto [low_idx, high_idx] = murre::stratify_by_median(risks);
    auto group_of = [&](const std::vector<size_t>& idx) {
        std::pair<std::vector<double>, std::vector<bool>> g;
        for (size_t i : idx) {
            g.first.push_back(cohort.patients[i].survival_time);
            g.second.push_back(cohort.patients[i].event_observed);
        }
        return g;
    };
    auto low = group_of(low_idx);
    auto high = group_of(high_idx);
    murre::LogRankResult lr = murre::log_rank_test(low.first, low.second, high.first, high.second);

    fs::create_directories(out_dir);
    std::string tsv = "time\tsurvival\tat_risk\tgroup\n";
    auto append_curve = [&tsv](const murre::KMCurve& c, const char* name) {
        for (size_t i = 0; i < c.event_times.size(); ++i) {
            char row[128];
            std::snprintf(row, sizeof row, "%.17g\t%.17g\t%d\t%s\n", c.event_times[i], c.survival_probs[i],
                          c.at_risk_counts[i], name);
            tsv += row;
        }
    };
    append_curve(murre::kaplan_meier(low.first, low.second), "low");
    append_curve(murre::kaplan_meier(high.first, high.second), "high");
    write_text(fs::path(out_dir) / "km_curves.tsv", tsv);

    ordered_json result = {{"chi2", lr.chi2},
                           {"p_value", lr.p_value},
                           {"n_low", low_idx.size()},
                           {"n_high", high_idx.size()}};
    write_text(fs::path(out_dir) / "stratify.json", result.dump(1) + "\n");

    char buf[96];
    std::snprintf(buf, sizeof buf, "log-rank chi2 = %.6f, p = %.6g (low n=%zu, high n=%zu)", lr.chi2, lr.p_value,
                  low_idx.size(), high_idx.size());
    write_run_manifest(out_dir, "stratify", checkpoint_path,
                       ordered_json::parse(murre::config_to_json_string(ck.config)), ck.config.seed,
                       murre::fingerprint_cohort(cohort_dir), {"km_curves.tsv", "stratify.json"}, watch.seconds(),
                       result);
    std::cout << buf << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& config_path, const SeedOpt& seed_opt, const std::string& corrupt) {
    murre::IniFile ini = murre::IniFile::parse_file(config_path);
    TrainConfig config = TrainConfig::from_ini(ini);
    const uint64_t seed = resolve_seed(seed_opt, config.seed_from_file, config.seed, config.seed);

    murre::GradCheckReport report = murre::gradient_check(config, seed, 1e-5, corrupt);
    for (const auto& e : report.entries) {
        char row[160];
        std::snprintf(row, sizeof row, "  %-28s max_rel_err=%.3e max_abs_err=%.3e\n", e.name.c_str(), e.max_rel_err,
                      e.max_abs_err);
        std::cout << row;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "gradcheck %s: max rel err %.3e (%s) over %zu parameter arrays\n",
                  report.pass() ? "PASS" : "FAIL", report.max_rel_err, report.worst_param.c_str(),
                  report.entries.size());
    std::cout << buf;
    return report.pass() ? 0 : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal survival model: decoupled representations, orthogonal fusion, discrete-time hazards"};
    app.require_subcommand(1);

    std::string spec_path, config_path, cohort_dir, out_dir, checkpoint_path, corrupt;
    SeedOpt seed_opt;
    int jobs = 1;
    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_opt.value, "Override the run seed")->each([&](const std::string&) {
            seed_opt.given = true;
        });
    };

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic cohort directory");
    synth->add_option("--spec", spec_path, "Synthetic spec file")->required();
    synth->add_option("--out", out_dir, "Output cohort directory")->required();
    add_seed(synth);

    CLI::App* train = app.add_subcommand("train", "Train with Monte-Carlo cross-validation");
    train->add_option("--config", config_path, "Training config file")->required();
    train->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--jobs", jobs, "Concurrent folds");
    add_seed(train);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a cohort");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    eval->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    eval->add_option("--out", out_dir, "Optional output directory");

    CLI::App* stratify = app.add_subcommand("stratify", "Median risk stratification + KM/log-rank");
    stratify->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    stratify->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    stratify->add_option("--out", out_dir, "Output directory")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gradcheck->add_option("--config", config_path, "Training config file")->required();
    gradcheck->add_option("--corrupt", corrupt, "Test hook: perturb this parameter's analytic gradient");
    add_seed(gradcheck);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_dir, seed_opt);
        if (train->parsed()) return cmd_train(config_path, cohort_dir, out_dir, seed_opt, jobs);
        if (eval->parsed()) return cmd_eval(checkpoint_path, cohort_dir, out_dir);
        if (stratify->parsed()) return cmd_stratify(checkpoint_path, cohort_dir, out_dir);
        if (gradcheck->parsed()) return cmd_gradcheck(config_path, seed_opt, corrupt);
    } catch (const murre::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const murre::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const murre::TrainError& e) {
        std::cerr << "training failure: " << e.what() << "\n";
        return kExitTrain;
    } catch (const std::domain_error& e) {
        const std::string what = e.what();
        if (what.find("degenerate stratification") != std::string::npos) {
            std::cerr << "stratification error: " << what << "\n";
            return kExitStratify;
        }
        std::cerr << "error: " << what << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
