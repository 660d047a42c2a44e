// Acceptance suite: every criterion prints one [PASS]/[FAIL] line with its
// measured quantity and wall time. Usage: acceptance_tests <cli-binary>.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "murrenet/cohort_io.hpp"
#include "murrenet/training.hpp"

namespace fs = std::filesystem;
using namespace murre;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_work;

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = g_cli + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return -1;
    std::string out;
    char buf[4096];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    if (output) *output = out;
    const int status = pclose(pipe);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (double& v : m.a) v = scale * rng.normal();
    return m;
}

// Shared model/cohort settings for the end-to-end criteria.
const char* kStrongSpec = R"([synthetic]
n_patients = 400
n_p_min = 8
n_p_max = 24
d_in_p = 48
d_in_g = 32
shared_signal_strength = 2.0
specific_signal_strength_p = 1.0
specific_signal_strength_g = 1.0
noise_sigma = 0.5
censor_rate = 0.3
seed = 1001
)";

const char* kHeldOutSpec = R"([synthetic]
n_patients = 200
n_p_min = 8
n_p_max = 24
d_in_p = 48
d_in_g = 32
shared_signal_strength = 2.0
specific_signal_strength_p = 1.0
specific_signal_strength_g = 1.0
noise_sigma = 0.5
censor_rate = 0.3
seed = 1002
)";

const char* kNullSpec = R"([synthetic]
n_patients = 400
n_p_min = 8
n_p_max = 24
d_in_p = 48
d_in_g = 32
shared_signal_strength = 0.0
specific_signal_strength_p = 0.0
specific_signal_strength_g = 0.0
noise_sigma = 0.5
censor_rate = 0.3
seed = 1003
)";

// Paper protocol: Adam 2e-4 / 1e-5, 20 epochs, 5 splits, alpha=beta=1e-4, gamma=1.
std::string train_config(char model) {
    std::string cfg = R"([model]
d = 32
n_heads = 8
n_landmarks = 64
gate_hidden = 16
n_bins = 4

[train]
lr = 2e-4
weight_decay = 1e-5
epochs = 20
n_splits = 5
train_fraction = 0.8
seed = 2024

[losses]
alpha = 1e-4
beta = 1e-4
gamma = 1.0

[ablation]
)";
    cfg += std::string("model = ") + model + "\n";
    return cfg;
}

double metrics_mean_c_index(const fs::path& run_dir) {
    json j = json::parse(read_file(run_dir / "metrics.json"));
    return j.at("c_index").at("mean").get<double>();
}

// ---- criteria ---------------------------------------------------------

bool criterion_orthogonality(std::string& detail) {
    ModelDims dims;
    dims.d_in_p = 10;
    dims.d_in_g = 8;
    dims.d = 16;
    dims.n_heads = 4;
    dims.n_landmarks = 8;
    dims.n_bins = 4;
    double worst = 0.0;
    for (int state = 0; state < 200; ++state) {
        Model model(dims, AblationFlags::ladder('F'), 10000 + state);
        Rng rng(20000 + state);
        PatientRecord rec;
        rec.patient_id = "s" + std::to_string(state);
        rec.pathology_tokens = random_mat(2 + static_cast<int>(rng.below(9)), dims.d_in_p, rng);
        rec.genomic_groups = random_mat(6, dims.d_in_g, rng);
        rec.survival_time = 1.0;
        rec.event_observed = true;
        ForwardResult r = forward(rec, model);
        double cnorm = 0.0;
        for (double v : r.fused.f_c_vec.a) cnorm += v * v;
        cnorm = std::sqrt(cnorm);
        for (int i = 0; i < r.fused.orth.rows; ++i) {
            double dot = 0.0, tnorm = 0.0;
            for (int j = 0; j < r.fused.orth.cols; ++j) {
                dot += r.fused.orth(i, j) * r.fused.f_c_vec(0, j);
                tnorm += r.fused.orth(i, j) * r.fused.orth(i, j);
            }
            worst = std::max(worst, std::abs(dot) / (std::sqrt(tnorm) * cnorm + 1e-12));
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max normalized inner product %.3e over 200 states", worst);
    detail = buf;
    return worst < 1e-6;
}

bool criterion_gradients(std::string& detail) {
    const std::string base = R"([model]
d = 12
n_heads = 4
n_landmarks = 4
gate_hidden = 6
n_bins = 3

[losses]
alpha = 1.0
beta = 1.0
gamma = 1.0

[train]
seed = 77

[ablation]
)";
    std::string worst;
    for (char m = 'A'; m <= 'F'; ++m) {
        const fs::path cfg = g_work / (std::string("gradcheck_") + m + ".ini");
        write_file(cfg, base + "model = " + m + "\n");
        std::string out;
        const int code = run_cli("gradcheck --config " + cfg.string(), &out);
        if (code != 0) {
            detail = std::string("model ") + m + " failed: " + out.substr(0, 160);
            return false;
        }
        const size_t pos = out.find("max rel err ");
        worst += std::string(1, m) + "=" + (pos == std::string::npos ? "?" : out.substr(pos + 12, 9)) + " ";
    }
    detail = "cmd_gradcheck exit 0 for A..F; max rel errs: " + worst;
    return true;
}

bool criterion_nll_oracle(std::string& detail) {
    double worst = 0.0;
    long cases = 0;
    for (int T = 1; T <= 5; ++T) {
        std::vector<int> idx(T, 0);
        while (true) {
            Mat h(1, T);
            for (int t = 0; t < T; ++t) h(0, t) = 0.1 * (idx[t] + 1);
            for (int bin = 0; bin < T; ++bin) {
                for (bool event : {true, false}) {
                    const double nll = nll_survival_loss(h, bin, event);
                    // Independent oracle: direct product of probabilities.
                    double surv = 1.0;
                    std::vector<double> s(T);
                    for (int t = 0; t < T; ++t) {
                        surv *= 1.0 - h(0, t);
                        s[t] = surv;
                    }
                    const double s_prev = bin == 0 ? 1.0 : s[bin - 1];
                    const double likelihood = event ? s_prev * h(0, bin) : s[bin];
                    worst = std::max(worst, std::abs(std::exp(-nll) - likelihood) / likelihood);
                    ++cases;
                }
            }
            int t = T - 1;
            while (t >= 0 && ++idx[t] == 9) idx[t--] = 0;
            if (t < 0) break;
        }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative likelihood error %.3e over %ld cases", worst, cases);
    detail = buf;
    return worst < 1e-10;
}

bool criterion_c_index(std::string& detail) {
    Rng rng(4242);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 50 + static_cast<int>(rng.below(251));
        std::vector<double> risks, times;
        std::vector<bool> events;
        for (int i = 0; i < n; ++i) {
            risks.push_back(rng.uniform() < 0.3 ? std::floor(rng.normal() * 4.0) / 4.0 : rng.normal());
            times.push_back(0.1 + static_cast<double>(rng.below(60)) * 0.25);
            events.push_back(rng.uniform() > 0.3);  // ~30% censoring
        }
        bool any_event = false;
        for (bool e : events) any_event = any_event || e;
        if (!any_event) events[0] = true;

        double credit = 0.0;
        long comparable = 0;
        for (int i = 0; i < n; ++i) {
            if (!events[i]) continue;
            for (int j = 0; j < n; ++j) {
                if (times[i] >= times[j]) continue;
                ++comparable;
                if (risks[i] > risks[j])
                    credit += 1.0;
                else if (risks[i] == risks[j])
                    credit += 0.5;
            }
        }
        const double oracle = credit / static_cast<double>(comparable);
        const double fast = concordance_index(risks, times, events);
        if (fast != oracle) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "trial %d (n=%d): %.17g vs oracle %.17g", trial, n, fast, oracle);
            detail = buf;
            return false;
        }
    }
    detail = "exact match with the O(n^2) enumeration on 100 instances, n in [50, 300]";
    return true;
}

bool criterion_km_logrank(std::string& detail) {
    KMCurve km = kaplan_meier({1, 2, 3}, {true, true, true});
    const bool km_ok = km.event_times.size() == 3 && std::abs(km.survival_probs[0] - 2.0 / 3) < 1e-15 &&
                       std::abs(km.survival_probs[1] - 1.0 / 3) < 1e-15 && km.survival_probs[2] == 0.0;

    const double p_crit = chi2_1dof_pvalue(3.841459);
    const bool crit_ok = std::abs(p_crit - 0.05) <= 0.0005;

    std::vector<double> t = {1, 2, 3, 4};
    std::vector<bool> e = {true, false, true, true};
    LogRankResult same = log_rank_test(t, e, t, e);
    const bool same_ok = same.chi2 == 0.0 && same.p_value == 1.0;

    char buf[128];
    std::snprintf(buf, sizeof buf, "KM steps (2/3, 1/3, 0); p(3.841459)=%.6f; identical groups p=%.1f", p_crit,
                  same.p_value);
    detail = buf;
    return km_ok && crit_ok && same_ok;
}

bool criterion_end_to_end(std::string& detail) {
    write_file(g_work / "strong.ini", kStrongSpec);
    write_file(g_work / "null.ini", kNullSpec);
    write_file(g_work / "train_f.ini", train_config('F'));
    if (run_cli("synth --spec " + (g_work / "strong.ini").string() + " --out " + (g_work / "strong").string()) != 0)
        return false;
    if (run_cli("synth --spec " + (g_work / "null.ini").string() + " --out " + (g_work / "nullc").string()) != 0)
        return false;

    std::string out;
    if (run_cli("train --config " + (g_work / "train_f.ini").string() + " --cohort " + (g_work / "strong").string() +
                    " --out " + (g_work / "run_f_strong").string(),
                &out) != 0) {
        detail = "train failed: " + out.substr(0, 160);
        return false;
    }
    const double strong_mean = metrics_mean_c_index(g_work / "run_f_strong");

    if (run_cli("train --config " + (g_work / "train_f.ini").string() + " --cohort " + (g_work / "nullc").string() +
                    " --out " + (g_work / "run_f_null").string(),
                &out) != 0) {
        detail = "null train failed: " + out.substr(0, 160);
        return false;
    }
    const double null_mean = metrics_mean_c_index(g_work / "run_f_null");

    char buf[128];
    std::snprintf(buf, sizeof buf, "strong mean C-index %.4f (>= 0.75), null %.4f (in [0.42, 0.58])", strong_mean,
                  null_mean);
    detail = buf;
    return strong_mean >= 0.75 && null_mean >= 0.42 && null_mean <= 0.58;
}

bool criterion_ablation_direction(std::string& detail) {
    write_file(g_work / "train_a.ini", train_config('A'));
    std::string out;
    if (run_cli("train --config " + (g_work / "train_a.ini").string() + " --cohort " + (g_work / "strong").string() +
                    " --out " + (g_work / "run_a_strong").string(),
                &out) != 0) {
        detail = "model A train failed: " + out.substr(0, 160);
        return false;
    }
    const double mean_a = metrics_mean_c_index(g_work / "run_a_strong");
    const double mean_f = metrics_mean_c_index(g_work / "run_f_strong");
    char buf[96];
    std::snprintf(buf, sizeof buf, "model F %.4f >= model A %.4f over 5 splits", mean_f, mean_a);
    detail = buf;
    return mean_f >= mean_a;
}

bool criterion_stratification(std::string& detail) {
    write_file(g_work / "heldout.ini", kHeldOutSpec);
    if (run_cli("synth --spec " + (g_work / "heldout.ini").string() + " --out " + (g_work / "heldout").string()) != 0)
        return false;
    std::string out;
    const int code = run_cli("stratify --checkpoint " + (g_work / "run_f_strong" / "checkpoint_fold0.json").string() +
                                 " --cohort " + (g_work / "heldout").string() + " --out " +
                                 (g_work / "strat").string(),
                             &out);
    if (code != 0) {
        detail = "stratify failed: " + out.substr(0, 160);
        return false;
    }
    json j = json::parse(read_file(g_work / "strat" / "stratify.json"));
    const double p = j.at("p_value").get<double>();
    char buf[64];
    std::snprintf(buf, sizeof buf, "held-out log-rank p = %.3e (< 0.05)", p);
    detail = buf;
    return p < 0.05;
}

bool criterion_determinism(std::string& detail) {
    write_file(g_work / "det_spec.ini", R"([synthetic]
n_patients = 60
n_p_min = 4
n_p_max = 10
d_in_p = 16
d_in_g = 12
shared_signal_strength = 2.0
specific_signal_strength_p = 1.0
specific_signal_strength_g = 1.0
noise_sigma = 0.5
censor_rate = 0.3
seed = 31
)");
    write_file(g_work / "det_train.ini", R"([model]
d = 16
n_heads = 4
n_landmarks = 8
gate_hidden = 8
n_bins = 4

[train]
lr = 2e-4
weight_decay = 1e-5
epochs = 3
n_splits = 2
seed = 55
)");
    if (run_cli("synth --spec " + (g_work / "det_spec.ini").string() + " --out " + (g_work / "det_cohort").string()) !=
        0)
        return false;
    std::string out1, out2;
    if (run_cli("train --config " + (g_work / "det_train.ini").string() + " --cohort " +
                    (g_work / "det_cohort").string() + " --out " + (g_work / "det1").string(),
                &out1) != 0)
        return false;
    if (run_cli("train --config " + (g_work / "det_train.ini").string() + " --cohort " +
                    (g_work / "det_cohort").string() + " --out " + (g_work / "det2").string(),
                &out2) != 0)
        return false;
    const bool stdout_same = out1 == out2;
    const bool metrics_same =
        read_file(g_work / "det1" / "metrics.json") == read_file(g_work / "det2" / "metrics.json");
    detail = std::string("stdout ") + (stdout_same ? "identical" : "DIFFERS") + ", metrics.json " +
             (metrics_same ? "byte-identical" : "DIFFERS");
    return stdout_same && metrics_same;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance_tests <cli-binary>\n");
        return 2;
    }
    g_cli = argv[1];
    g_work = fs::temp_directory_path() / "murrenet_acceptance";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
        double budget_s;  // 0 = reported only
    };
    const std::vector<Criterion> criteria = {
        {1, "orthogonality invariant after dhof_fuse", criterion_orthogonality, 10.0},
        {2, "gradient suite for ablations A..F", criterion_gradients, 120.0},
        {3, "survival NLL vs product-of-probabilities oracle", criterion_nll_oracle, 30.0},
        {4, "c-index equals O(n^2) enumeration", criterion_c_index, 30.0},
        {5, "KM and log-rank golden values", criterion_km_logrank, 0.0},
        {6, "synthetic end-to-end: strong >= 0.75, null in band", criterion_end_to_end, 0.0},
        {7, "ablation direction: model F >= model A", criterion_ablation_direction, 0.0},
        {8, "held-out stratification p < 0.05", criterion_stratification, 0.0},
        {9, "byte-identical metrics across reruns", criterion_determinism, 0.0},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0.0 && secs >= c.budget_s) {
            ok = false;
            detail += " [over time budget]";
        }
        std::printf("[%s] criterion %d: %s — %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
