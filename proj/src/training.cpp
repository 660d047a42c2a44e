#include "murrenet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>

#include <json.hpp>

namespace murre {

using ordered_json = nlohmann::ordered_json;

Adam::Adam(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(ParamSet& params, double grad_scale) {
    if (m_.empty()) {
        for (const auto& p : params.items()) {
            m_.emplace_back(p->value.rows, p->value.cols);
            v_.emplace_back(p->value.rows, p->value.cols);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const double inv_scale = 1.0 / grad_scale;
    for (size_t k = 0; k < params.items().size(); ++k) {
        Parameter& p = *params.items()[k];
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.a[i] * inv_scale + wd_ * p.value.a[i];
            m_[k].a[i] = b1_ * m_[k].a[i] + (1.0 - b1_) * g;
            v_[k].a[i] = b2_ * v_[k].a[i] + (1.0 - b2_) * g * g;
            const double mhat = m_[k].a[i] / bc1;
            const double vhat = v_[k].a[i] / bc2;
            p.value.a[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            p.grad.a[i] = 0.0;
        }
    }
}

ParamSnapshot ParamSnapshot::capture(const ParamSet& params) {
    ParamSnapshot s;
    for (const auto& p : params.items()) s.arrays.emplace_back(p->name, p->value);
    return s;
}

void ParamSnapshot::restore(ParamSet& params) const {
    if (arrays.size() != params.items().size())
        throw TrainError("snapshot restore: parameter count mismatch (" + std::to_string(arrays.size()) + " vs " +
                         std::to_string(params.items().size()) + ")");
    for (const auto& [name, value] : arrays) {
        Parameter* p = params.find(name);
        if (!p) throw TrainError("snapshot restore: unknown parameter '" + name + "'");
        require_same_shape(p->value, value, "snapshot restore");
        p->value = value;
    }
}

namespace {

ModelDims dims_for_cohort(const TrainConfig& config, const Cohort& cohort) {
    ModelDims dims = config.dims;
    dims.d_in_p = cohort.patients.front().pathology_tokens.cols;
    dims.d_in_g = cohort.patients.front().genomic_groups.cols;
    return dims;
}

std::vector<double> collect_risks(const Model& model, const Cohort& cohort, RiskScore score) {
    std::vector<double> risks;
    risks.reserve(cohort.size());
    for (const auto& p : cohort.patients) risks.push_back(model.predict(p, score).risk);
    return risks;
}

}  // namespace

FoldResult train_fold(const Cohort& train, const Cohort& val, const TrainConfig& config, uint64_t fold_seed) {
    if (train.empty() || val.empty()) throw TrainError("train_fold: empty split");
    if (train.n_bins != config.dims.n_bins)
        throw TrainError("train_fold: cohort discretized with " + std::to_string(train.n_bins) +
                         " bins but config wants " + std::to_string(config.dims.n_bins));
    if (train.bin_edges != val.bin_edges) throw TrainError("train_fold: train/val bin edges differ");

    ModelDims dims = dims_for_cohort(config, train);
    dims.pool_includes_common = config.pool_includes_common;
    Model model(dims, config.flags, Rng::derive(fold_seed, 1));
    Adam adam(config.lr, config.weight_decay);

    FoldResult result;
    std::vector<size_t> order(train.size());
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(Rng::derive(fold_seed, 1000 + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        LossBreakdown sums;
        int pending = 0;
        for (size_t step = 0; step < order.size(); ++step) {
            const PatientRecord& rec = train.patients[order[step]];
            Tape tape;
            Model::Forward fwd = model.run(tape, rec);
            Model::LossVars lv;
            try {
                lv = model.loss(tape, fwd, rec, config.weights, config.sim_variant, config.diff_sign);
            } catch (const std::domain_error& e) {
                throw TrainError("epoch " + std::to_string(epoch + 1) + ", step " + std::to_string(step + 1) +
                                 " (patient " + rec.patient_id + "): " + e.what());
            }
            tape.backward(lv.total);
            if (++pending == config.accum_steps) {
                adam.step(model.params(), pending);
                pending = 0;
            }
            sums.l_sim += lv.breakdown.l_sim;
            sums.l_diff += lv.breakdown.l_diff;
            sums.l_recon += lv.breakdown.l_recon;
            sums.l_surv += lv.breakdown.l_surv;
            sums.l_total += lv.breakdown.l_total;
        }
        if (pending > 0) adam.step(model.params(), pending);
        const double inv = 1.0 / static_cast<double>(order.size());
        result.epoch_means.push_back(
            {sums.l_sim * inv, sums.l_diff * inv, sums.l_recon * inv, sums.l_surv * inv, sums.l_total * inv});
    }

    std::vector<double> risks = collect_risks(model, val, config.risk_score);
    std::vector<double> times;
    std::vector<bool> events;
    for (const auto& p : val.patients) {
        times.push_back(p.survival_time);
        events.push_back(p.event_observed);
    }
    result.val_c_index = concordance_index(risks, times, events);
    result.params = ParamSnapshot::capture(model.params());
    result.bin_edges = train.bin_edges;
    return result;
}

FitResult run_cv(const Cohort& cohort, const TrainConfig& config, int n_jobs) {
    Cohort binned = cohort;
    binned.n_bins = config.dims.n_bins;
    auto splits = split_monte_carlo(binned, config.n_splits, config.train_fraction, config.seed);

    // Leakage audit: every split must partition the cohort by patient id.
    std::multiset<std::string> all_ids;
    for (const auto& p : cohort.patients) all_ids.insert(p.patient_id);
    for (const auto& [train, val] : splits) {
        std::multiset<std::string> seen;
        for (const auto& p : train.patients) seen.insert(p.patient_id);
        for (const auto& p : val.patients) {
            if (seen.count(p.patient_id) > 0 && all_ids.count(p.patient_id) == 1)
                throw TrainError("leakage audit: patient " + p.patient_id + " appears in both train and val");
            seen.insert(p.patient_id);
        }
        if (seen != all_ids) throw TrainError("leakage audit: split does not partition the cohort");
    }

    FitResult fit;
    fit.config = config;
    fit.folds.resize(splits.size());
    auto run_one = [&](size_t k) {
        try {
            fit.folds[k] = train_fold(splits[k].first, splits[k].second, config, Rng::derive(config.seed, 7000 + k));
        } catch (const std::exception& e) {
            throw TrainError("fold " + std::to_string(k) + ": " + e.what());
        }
    };
    if (n_jobs <= 1) {
        for (size_t k = 0; k < splits.size(); ++k) run_one(k);
    } else {
        std::vector<std::future<void>> jobs;
        size_t next = 0;
        while (next < splits.size() || !jobs.empty()) {
            while (next < splits.size() && jobs.size() < static_cast<size_t>(n_jobs))
                jobs.push_back(std::async(std::launch::async, run_one, next++));
            jobs.front().get();
            jobs.erase(jobs.begin());
        }
    }

    double mean = 0.0;
    for (const auto& f : fit.folds) mean += f.val_c_index;
    mean /= static_cast<double>(fit.folds.size());
    double var = 0.0;
    for (const auto& f : fit.folds) var += (f.val_c_index - mean) * (f.val_c_index - mean);
    fit.mean_c_index = mean;
    fit.std_c_index = fit.folds.size() > 1 ? std::sqrt(var / static_cast<double>(fit.folds.size() - 1)) : 0.0;
    return fit;
}

GradCheckReport gradient_check(const TrainConfig& config, uint64_t seed, double h, const std::string& corrupt_param) {
    ModelDims dims = config.dims;
    dims.d_in_p = 9;
    dims.d_in_g = 7;
    dims.pool_includes_common = config.pool_includes_common;
    Model model(dims, config.flags, Rng::derive(seed, 1));

    Rng rng(Rng::derive(seed, 2));
    PatientRecord rec;
    rec.patient_id = "gradcheck";
    rec.pathology_tokens = Mat(6, dims.d_in_p);
    for (double& x : rec.pathology_tokens.a) x = rng.normal();
    rec.genomic_groups = Mat(6, dims.d_in_g);
    for (double& x : rec.genomic_groups.a) x = rng.normal();
    rec.survival_time = 1.0;
    rec.event_observed = true;
    rec.time_bin = static_cast<int>(rng.below(static_cast<uint64_t>(dims.n_bins)));

    auto loss_value = [&]() {
        Tape t;
        Model::Forward f = model.run(t, rec);
        Model::LossVars lv = model.loss(t, f, rec, config.weights, config.sim_variant, config.diff_sign);
        return t.scalar(lv.total);
    };

    model.params().zero_grads();
    {
        Tape t;
        Model::Forward f = model.run(t, rec);
        Model::LossVars lv = model.loss(t, f, rec, config.weights, config.sim_variant, config.diff_sign);
        t.backward(lv.total);
    }
    if (!corrupt_param.empty()) {
        Parameter* p = model.params().find(corrupt_param);
        if (!p) throw TrainError("gradient_check: unknown parameter to corrupt: " + corrupt_param);
        p->grad.a[0] += 0.05;
    }

    GradCheckReport report;
    for (const auto& pp : model.params().items()) {
        Parameter& p = *pp;
        GradCheckEntry entry;
        entry.name = p.name;
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double old = p.value.a[i];
            p.value.a[i] = old + h;
            const double lp = loss_value();
            p.value.a[i] = old - h;
            const double lm = loss_value();
            p.value.a[i] = old;
            const double fd = (lp - lm) / (2.0 * h);
            const double analytic = p.grad.a[i];
            const double abs_err = std::abs(analytic - fd);
            // Relative to max(|analytic|, |fd|) with a 1e-4 floor, below
            // which the central difference cannot resolve the gradient.
            const double rel = abs_err / std::max({std::abs(analytic), std::abs(fd), 1e-4});
            entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        if (entry.max_rel_err >= report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = entry.name;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace {

ordered_json config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["model"] = {{"d", c.dims.d},
                  {"n_heads", c.dims.n_heads},
                  {"n_landmarks", c.dims.n_landmarks},
                  {"pinv_iters", c.dims.pinv_iters},
                  {"gate_hidden", c.dims.gate_hidden},
                  {"n_bins", c.dims.n_bins}};
    j["train"] = {{"lr", c.lr},
                  {"weight_decay", c.weight_decay},
                  {"epochs", c.epochs},
                  {"n_splits", c.n_splits},
                  {"train_fraction", c.train_fraction},
                  {"accum_steps", c.accum_steps},
                  {"seed", c.seed},
                  {"risk_score", c.risk_score == RiskScore::NegSumSurvival ? "neg_sum_survival" : "sum_hazards"}};
    j["losses"] = {{"alpha", c.weights.alpha},
                   {"beta", c.weights.beta},
                   {"gamma", c.weights.gamma},
                   {"sim_variant", c.sim_variant == SimVariant::Prose ? "prose" : "literal"},
                   {"diff_sign", c.diff_sign == DiffSign::Plus ? "plus" : "minus"}};
    j["ablation"] = {{"use_mrd", c.flags.use_mrd},
                     {"use_dhof", c.flags.use_dhof},
                     {"use_sim", c.flags.use_sim},
                     {"use_diff", c.flags.use_diff},
                     {"use_recon", c.flags.use_recon}};
    j["fusion"] = {{"dhof_include_common", c.pool_includes_common}};
    return j;
}

TrainConfig config_from_json(const ordered_json& j) {
    TrainConfig c;
    c.dims.d = j.at("model").at("d");
    c.dims.n_heads = j.at("model").at("n_heads");
    c.dims.n_landmarks = j.at("model").at("n_landmarks");
    c.dims.pinv_iters = j.at("model").at("pinv_iters");
    c.dims.gate_hidden = j.at("model").at("gate_hidden");
    c.dims.n_bins = j.at("model").at("n_bins");
    c.lr = j.at("train").at("lr");
    c.weight_decay = j.at("train").at("weight_decay");
    c.epochs = j.at("train").at("epochs");
    c.n_splits = j.at("train").at("n_splits");
    c.train_fraction = j.at("train").at("train_fraction");
    c.accum_steps = j.at("train").at("accum_steps");
    c.seed = j.at("train").at("seed");
    c.risk_score = j.at("train").at("risk_score") == "sum_hazards" ? RiskScore::SumHazards : RiskScore::NegSumSurvival;
    c.weights.alpha = j.at("losses").at("alpha");
    c.weights.beta = j.at("losses").at("beta");
    c.weights.gamma = j.at("losses").at("gamma");
    c.sim_variant = j.at("losses").at("sim_variant") == "literal" ? SimVariant::Literal : SimVariant::Prose;
    c.diff_sign = j.at("losses").at("diff_sign") == "minus" ? DiffSign::Minus : DiffSign::Plus;
    c.flags.use_mrd = j.at("ablation").at("use_mrd");
    c.flags.use_dhof = j.at("ablation").at("use_dhof");
    c.flags.use_sim = j.at("ablation").at("use_sim");
    c.flags.use_diff = j.at("ablation").at("use_diff");
    c.flags.use_recon = j.at("ablation").at("use_recon");
    c.pool_includes_common = j.at("fusion").at("dhof_include_common");
    return c;
}

}  // namespace

std::string config_to_json_string(const TrainConfig& config) { return config_to_json(config).dump(1); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    ordered_json j;
    j["format_version"] = ck.format_version;
    j["config"] = config_to_json(ck.config);
    j["d_in_p"] = ck.d_in_p;
    j["d_in_g"] = ck.d_in_g;
    j["bin_edges"] = ck.bin_edges;
    j["fold_index"] = ck.fold_index;
    j["val_c_index"] = ck.val_c_index;
    ordered_json params = ordered_json::object();
    for (const auto& [name, value] : ck.params.arrays)
        params[name] = {{"rows", value.rows}, {"cols", value.cols}, {"data", value.a}};
    j["params"] = std::move(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TrainError("cannot write checkpoint: " + path.string());
    out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TrainError("cannot open checkpoint: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw TrainError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    Checkpoint ck;
    ck.format_version = j.at("format_version");
    if (ck.format_version != 1)
        throw TrainError("unsupported checkpoint format_version " + std::to_string(ck.format_version));
    ck.config = config_from_json(j.at("config"));
    ck.d_in_p = j.at("d_in_p");
    ck.d_in_g = j.at("d_in_g");
    ck.bin_edges = j.at("bin_edges").get<std::vector<double>>();
    ck.fold_index = j.at("fold_index");
    ck.val_c_index = j.at("val_c_index");
    for (const auto& [name, entry] : j.at("params").items()) {
        Mat m(entry.at("rows"), entry.at("cols"), entry.at("data").get<std::vector<double>>());
        ck.params.arrays.emplace_back(name, std::move(m));
    }
    return ck;
}

Model model_from_checkpoint(const Checkpoint& ck, uint64_t seed) {
    ModelDims dims = ck.config.dims;
    dims.d_in_p = ck.d_in_p;
    dims.d_in_g = ck.d_in_g;
    dims.pool_includes_common = ck.config.pool_includes_common;
    Model model(dims, ck.config.flags, seed);
    ck.params.restore(model.params());
    return model;
}

}  // namespace murre
