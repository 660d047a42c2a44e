#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "murrenet/mat.hpp"

namespace murre {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PatientRecord {
    std::string patient_id;
    Mat pathology_tokens;  // N_p x D_in_p, one row per patch feature vector
    Mat genomic_groups;    // N_g x D_in_g, one row per genomic group
    double survival_time = 0.0;
    bool event_observed = false;
    int time_bin = -1;  // unset before discretization
};

struct Cohort {
    std::vector<PatientRecord> patients;
    std::vector<double> bin_edges;  // T-1 non-decreasing cut points
    int n_bins = 0;

    bool empty() const { return patients.empty(); }
    size_t size() const { return patients.size(); }
};

// Checks the shared-dimension and positive-time invariants; throws DataError.
void validate_cohort(const Cohort& cohort);

// Linear-interpolation quantile of a sorted sample (R type 7).
double quantile_sorted(const std::vector<double>& sorted, double q);

// bin = number of edges strictly below the time.
int assign_bin(double survival_time, const std::vector<double>& edges);

// Recomputes bin edges as the 1/T .. (T-1)/T quantiles of the uncensored
// survival times and assigns every patient's time_bin. Idempotent.
Cohort discretize_survival(const Cohort& cohort, int n_bins);

// n_splits independent stratified partitions (events and censored split
// separately). Bin edges are recomputed from each train half only and
// applied to its validation half; requires cohort.n_bins >= 2.
std::vector<std::pair<Cohort, Cohort>> split_monte_carlo(const Cohort& cohort, int n_splits, double train_fraction,
                                                         uint64_t seed);

struct SyntheticSpec {
    int n_patients = 400;
    int n_p_min = 8;
    int n_p_max = 24;
    int d_in_p = 48;
    int d_in_g = 32;
    int n_genomic_groups = 6;
    double shared_signal_strength = 2.0;
    double specific_signal_strength_p = 1.0;
    double specific_signal_strength_g = 1.0;
    double noise_sigma = 0.5;
    double censor_rate = 0.3;
    uint64_t seed = 1;
};

void validate_spec(const SyntheticSpec& spec);

// Generator bookkeeping kept for auditing: the planted latents, the signal
// directions (u_* carry the shared signal, u_*_specific the modality-specific
// one; the pair is orthonormal per modality), and each patient's
// pre-censoring event time.
struct SyntheticAudit {
    std::vector<double> z_shared, z_p, z_g;
    std::vector<double> u_p, u_g;
    std::vector<double> u_p_specific, u_g_specific;
    std::vector<double> event_time;
};

Cohort make_synthetic_cohort(const SyntheticSpec& spec);
Cohort make_synthetic_cohort(const SyntheticSpec& spec, SyntheticAudit& audit);

}  // namespace murre
