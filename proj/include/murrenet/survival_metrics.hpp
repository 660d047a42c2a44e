#pragma once

#include <utility>
#include <vector>

#include "murrenet/mat.hpp"

namespace murre {

enum class RiskScore { NegSumSurvival, SumHazards };

struct HazardOutput {
    std::vector<double> hazards;   // per-bin death probability, in [0, 1)
    std::vector<double> survival;  // S(t) = prod_{u<=t} (1 - h_u)
    double risk = 0.0;
};

// survival by cumulative product; risk defaults to -sum_t S(t).
HazardOutput hazards_to_output(const std::vector<double>& hazards, RiskScore score = RiskScore::NegSumSurvival);

// Concordant fraction over comparable pairs (event_i and time_i < time_j);
// risk ties earn half credit. O(n log n) via a rank-indexed Fenwick tree.
double concordance_index(const std::vector<double>& risks, const std::vector<double>& times,
                         const std::vector<bool>& events);

struct KMCurve {
    std::vector<double> event_times;
    std::vector<double> survival_probs;
    std::vector<int> at_risk_counts;
};

KMCurve kaplan_meier(const std::vector<double>& times, const std::vector<bool>& events);

struct LogRankResult {
    double chi2 = 0.0;
    double p_value = 1.0;
};

// Two-group log-rank test; p from the chi-square(1) survival function,
// erfc(sqrt(chi2/2)).
LogRankResult log_rank_test(const std::vector<double>& times_a, const std::vector<bool>& events_a,
                            const std::vector<double>& times_b, const std::vector<bool>& events_b);

double chi2_1dof_pvalue(double chi2);

// low = risk <= median, high = risk > median (linear-interpolated median).
std::pair<std::vector<size_t>, std::vector<size_t>> stratify_by_median(const std::vector<double>& risks);

}  // namespace murre
