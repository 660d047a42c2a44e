#pragma once

#include "murrenet/config.hpp"

namespace murre {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Adam with L2-style weight decay added to the gradient.
class Adam {
public:
    Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Applies and zeroes the accumulated gradients, scaled by 1/grad_scale.
    void step(ParamSet& params, double grad_scale = 1.0);

private:
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

struct ParamSnapshot {
    std::vector<std::pair<std::string, Mat>> arrays;

    static ParamSnapshot capture(const ParamSet& params);
    void restore(ParamSet& params) const;
};

struct FoldResult {
    double val_c_index = 0.0;
    std::vector<LossBreakdown> epoch_means;
    ParamSnapshot params;
    std::vector<double> bin_edges;
};

struct FitResult {
    std::vector<FoldResult> folds;
    double mean_c_index = 0.0;
    double std_c_index = 0.0;  // sample std over folds (0 for a single fold)
    TrainConfig config;
};

FoldResult train_fold(const Cohort& train, const Cohort& val, const TrainConfig& config, uint64_t fold_seed);
// n_jobs > 1 trains folds concurrently; results are identical either way.
FitResult run_cv(const Cohort& cohort, const TrainConfig& config, int n_jobs = 1);

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    std::string worst_param;

    bool pass(double threshold = 1e-4) const { return max_rel_err < threshold; }
};

// Central finite differences (step `h`) against the tape gradients of the
// total loss on one random patient; covers every parameter array exactly
// once. `corrupt_param` optionally perturbs that array's analytic gradient
// so the harness itself can be tested.
GradCheckReport gradient_check(const TrainConfig& config, uint64_t seed, double h = 1e-5,
                               const std::string& corrupt_param = "");

struct Checkpoint {
    int format_version = 1;
    TrainConfig config;
    int d_in_p = 0;
    int d_in_g = 0;
    std::vector<double> bin_edges;
    ParamSnapshot params;
    double val_c_index = 0.0;
    int fold_index = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Model model_from_checkpoint(const Checkpoint& ck, uint64_t seed = 0);

// JSON mirror of a TrainConfig, used by checkpoints and run manifests.
std::string config_to_json_string(const TrainConfig& config);

}  // namespace murre
