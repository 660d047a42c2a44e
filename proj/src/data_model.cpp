#include "murrenet/data_model.hpp"

#include <algorithm>
#include <cmath>

#include "murrenet/rng.hpp"

namespace murre {

void validate_cohort(const Cohort& cohort) {
    if (cohort.empty()) throw DataError("cohort is empty");
    const int d_p = cohort.patients.front().pathology_tokens.cols;
    const int d_g = cohort.patients.front().genomic_groups.cols;
    for (const auto& p : cohort.patients) {
        if (p.pathology_tokens.rows < 1) throw DataError("patient " + p.patient_id + ": no pathology tokens");
        if (p.genomic_groups.rows < 1) throw DataError("patient " + p.patient_id + ": no genomic groups");
        if (p.pathology_tokens.cols != d_p || p.genomic_groups.cols != d_g)
            throw DataError("patient " + p.patient_id + ": feature width differs from the rest of the cohort");
        if (!(p.survival_time > 0.0)) throw DataError("patient " + p.patient_id + ": survival_time must be > 0");
        if (!p.pathology_tokens.all_finite() || !p.genomic_groups.all_finite())
            throw DataError("patient " + p.patient_id + ": non-finite feature value");
    }
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of empty sample");
    if (sorted.size() == 1) return sorted[0];
    const double h = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

int assign_bin(double survival_time, const std::vector<double>& edges) {
    int bin = 0;
    for (double e : edges)
        if (e < survival_time) ++bin;
    return bin;
}

Cohort discretize_survival(const Cohort& cohort, int n_bins) {
    if (n_bins < 2) throw DataError("discretize_survival: n_bins must be >= 2");
    validate_cohort(cohort);
    std::vector<double> uncensored;
    for (const auto& p : cohort.patients)
        if (p.event_observed) uncensored.push_back(p.survival_time);
    if (uncensored.empty()) throw DataError("cannot discretize: no observed events");
    std::sort(uncensored.begin(), uncensored.end());

    Cohort out = cohort;
    out.n_bins = n_bins;
    out.bin_edges.clear();
    for (int i = 1; i < n_bins; ++i)
        out.bin_edges.push_back(quantile_sorted(uncensored, static_cast<double>(i) / n_bins));
    for (auto& p : out.patients) p.time_bin = assign_bin(p.survival_time, out.bin_edges);
    return out;
}

namespace {
void apply_edges(Cohort& c, const std::vector<double>& edges, int n_bins) {
    c.bin_edges = edges;
    c.n_bins = n_bins;
    for (auto& p : c.patients) p.time_bin = assign_bin(p.survival_time, edges);
}
}  // namespace

std::vector<std::pair<Cohort, Cohort>> split_monte_carlo(const Cohort& cohort, int n_splits, double train_fraction,
                                                         uint64_t seed) {
    if (n_splits < 1) throw DataError("split_monte_carlo: n_splits must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DataError("split_monte_carlo: train_fraction must lie in (0, 1)");
    if (cohort.n_bins < 2) throw DataError("split_monte_carlo: cohort.n_bins must be set (>= 2)");
    validate_cohort(cohort);

    std::vector<size_t> strata[2];  // [0] events, [1] censored
    for (size_t i = 0; i < cohort.patients.size(); ++i)
        strata[cohort.patients[i].event_observed ? 0 : 1].push_back(i);
    const char* stratum_name[2] = {"events", "censored"};
    for (int s = 0; s < 2; ++s) {
        const size_t n = strata[s].size();
        if (n == 0) continue;
        const long take = std::lround(train_fraction * static_cast<double>(n));
        if (take < 1 || take > static_cast<long>(n) - 1)
            throw DataError(std::string("split_monte_carlo: stratum '") + stratum_name[s] + "' has " +
                            std::to_string(n) + " patient(s); too small to stratify");
    }

    std::vector<std::pair<Cohort, Cohort>> splits;
    for (int k = 0; k < n_splits; ++k) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(k)));
        Cohort train, val;
        for (auto& stratum : strata) {
            std::vector<size_t> idx = stratum;
            rng.shuffle(idx);
            const size_t take = idx.empty() ? 0 : static_cast<size_t>(std::lround(train_fraction * idx.size()));
            for (size_t i = 0; i < idx.size(); ++i)
                (i < take ? train : val).patients.push_back(cohort.patients[idx[i]]);
        }
        Cohort fitted = discretize_survival(train, cohort.n_bins);
        apply_edges(val, fitted.bin_edges, cohort.n_bins);
        splits.emplace_back(std::move(fitted), std::move(val));
    }
    return splits;
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.n_patients < 1) throw DataError("synthetic spec: n_patients must be >= 1");
    if (spec.n_p_min < 1 || spec.n_p_max < spec.n_p_min) throw DataError("synthetic spec: bad n_p_range");
    if (spec.d_in_p < 1 || spec.d_in_g < 1) throw DataError("synthetic spec: feature widths must be >= 1");
    if (spec.n_genomic_groups < 1) throw DataError("synthetic spec: n_genomic_groups must be >= 1");
    auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!nonneg(spec.shared_signal_strength) || !nonneg(spec.specific_signal_strength_p) ||
        !nonneg(spec.specific_signal_strength_g))
        throw DataError("synthetic spec: signal strengths must be finite and >= 0");
    if (!(spec.noise_sigma > 0.0) || !std::isfinite(spec.noise_sigma))
        throw DataError("synthetic spec: noise_sigma must be > 0");
    if (!(spec.censor_rate >= 0.0 && spec.censor_rate <= 1.0))
        throw DataError("synthetic spec: censor_rate must lie in [0, 1]");
}

Cohort make_synthetic_cohort(const SyntheticSpec& spec) {
    SyntheticAudit audit;
    return make_synthetic_cohort(spec, audit);
}

Cohort make_synthetic_cohort(const SyntheticSpec& spec, SyntheticAudit& audit) {
    validate_spec(spec);
    // Risk weight on the latent sum. With exponential event sampling this
    // puts the oracle C-index of the true latents around 0.87, leaving room
    // for a trained model to clear the synthetic acceptance threshold.
    constexpr double kRiskWeight = 1.5;
    Rng rng(spec.seed);

    auto unit_direction = [&rng](int d) {
        std::vector<double> u(d);
        double norm2 = 0.0;
        for (double& x : u) {
            x = rng.normal();
            norm2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : u) x *= inv;
        return u;
    };
    // The shared and specific signals ride on orthonormal directions so the
    // features identify them separately (a single direction would conflate
    // 2*z_shared + z_specific irrecoverably and cap the reachable C-index).
    auto orthogonalize = [](std::vector<double>& v, const std::vector<double>& u) {
        double dot = 0.0;
        for (size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
        double norm2 = 0.0;
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] -= dot * u[i];
            norm2 += v[i] * v[i];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : v) x *= inv;
    };
    audit = SyntheticAudit{};
    audit.u_p = unit_direction(spec.d_in_p);
    audit.u_g = unit_direction(spec.d_in_g);
    if (spec.d_in_p > 1) {
        audit.u_p_specific = unit_direction(spec.d_in_p);
        orthogonalize(audit.u_p_specific, audit.u_p);
    } else {
        audit.u_p_specific = audit.u_p;
    }
    if (spec.d_in_g > 1) {
        audit.u_g_specific = unit_direction(spec.d_in_g);
        orthogonalize(audit.u_g_specific, audit.u_g);
    } else {
        audit.u_g_specific = audit.u_g;
    }

    Cohort cohort;
    for (int i = 0; i < spec.n_patients; ++i) {
        const double z_s = rng.normal();
        const double z_p = rng.normal();
        const double z_g = rng.normal();
        audit.z_shared.push_back(z_s);
        audit.z_p.push_back(z_p);
        audit.z_g.push_back(z_g);

        PatientRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof buf, "synth-%04d", i);
        rec.patient_id = buf;

        const int n_p =
            spec.n_p_min + static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_p_max - spec.n_p_min + 1)));
        const double shared_p = spec.shared_signal_strength * z_s;
        const double specific_p = spec.specific_signal_strength_p * z_p;
        rec.pathology_tokens = Mat(n_p, spec.d_in_p);
        for (int r = 0; r < n_p; ++r)
            for (int c = 0; c < spec.d_in_p; ++c)
                rec.pathology_tokens(r, c) =
                    spec.noise_sigma * rng.normal() + shared_p * audit.u_p[c] + specific_p * audit.u_p_specific[c];

        const double shared_g = spec.shared_signal_strength * z_s;
        const double specific_g = spec.specific_signal_strength_g * z_g;
        rec.genomic_groups = Mat(spec.n_genomic_groups, spec.d_in_g);
        for (int r = 0; r < spec.n_genomic_groups; ++r)
            for (int c = 0; c < spec.d_in_g; ++c)
                rec.genomic_groups(r, c) =
                    spec.noise_sigma * rng.normal() + shared_g * audit.u_g[c] + specific_g * audit.u_g_specific[c];

        const double rate = std::exp(kRiskWeight * (z_s + z_p + z_g));
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        const double event_time = -std::log(u) / rate;
        audit.event_time.push_back(event_time);

        if (rng.uniform() < spec.censor_rate) {
            rec.survival_time = rng.uniform(0.0, event_time);
            rec.event_observed = false;
        } else {
            rec.survival_time = event_time;
            rec.event_observed = true;
        }
        // Exponential draws can underflow to 0 for extreme latents; keep times positive.
        if (rec.survival_time <= 0.0) rec.survival_time = 1e-12;
        cohort.patients.push_back(std::move(rec));
    }
    return cohort;
}

}  // namespace murre
