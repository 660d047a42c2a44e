#include "murrenet/survival_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "murrenet/data_model.hpp"

namespace murre {

HazardOutput hazards_to_output(const std::vector<double>& hazards, RiskScore score) {
    if (hazards.empty()) throw std::invalid_argument("hazards_to_output: empty hazard vector");
    HazardOutput out;
    out.hazards = hazards;
    double s = 1.0;
    double hsum = 0.0;
    for (double h : hazards) {
        if (!(h >= 0.0 && h < 1.0))
            throw std::domain_error("hazards_to_output: hazard " + std::to_string(h) + " outside [0, 1)");
        s *= 1.0 - h;
        hsum += h;
        out.survival.push_back(s);
    }
    if (score == RiskScore::NegSumSurvival) {
        double ssum = 0.0;
        for (double v : out.survival) ssum += v;
        out.risk = -ssum;
    } else {
        out.risk = hsum;
    }
    return out;
}

namespace {
class Fenwick {
public:
    explicit Fenwick(int n) : tree_(n + 1, 0) {}
    void add(int i) {  // 1-based
        for (; i < static_cast<int>(tree_.size()); i += i & -i) ++tree_[i];
    }
    long prefix(int i) const {  // count of entries with rank <= i
        long s = 0;
        for (; i > 0; i -= i & -i) s += tree_[i];
        return s;
    }

private:
    std::vector<long> tree_;
};
}  // namespace

double concordance_index(const std::vector<double>& risks, const std::vector<double>& times,
                         const std::vector<bool>& events) {
    const size_t n = risks.size();
    if (times.size() != n || events.size() != n) throw std::invalid_argument("concordance_index: length mismatch");
    if (n < 2) throw std::invalid_argument("concordance_index: need at least two patients");

    std::vector<double> sorted_risks = risks;
    std::sort(sorted_risks.begin(), sorted_risks.end());
    sorted_risks.erase(std::unique(sorted_risks.begin(), sorted_risks.end()), sorted_risks.end());
    auto rank_of = [&](double r) {
        return static_cast<int>(std::lower_bound(sorted_risks.begin(), sorted_risks.end(), r) -
                                sorted_risks.begin()) +
               1;
    };

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return times[a] > times[b]; });

    Fenwick bit(static_cast<int>(sorted_risks.size()));
    long later = 0;
    long comparable = 0;
    double credit = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && times[order[j]] == times[order[i]]) ++j;
        // Query the strictly-later set before inserting this tie group.
        for (size_t k = i; k < j; ++k) {
            const size_t idx = order[k];
            if (!events[idx]) continue;
            const int r = rank_of(risks[idx]);
            const long below = bit.prefix(r - 1);
            const long below_eq = bit.prefix(r);
            comparable += later;
            credit += static_cast<double>(below) + 0.5 * static_cast<double>(below_eq - below);
        }
        for (size_t k = i; k < j; ++k) bit.add(rank_of(risks[order[k]]));
        later += static_cast<long>(j - i);
        i = j;
    }
    if (comparable == 0) throw std::domain_error("C-index undefined: no comparable pairs");
    return credit / static_cast<double>(comparable);
}

KMCurve kaplan_meier(const std::vector<double>& times, const std::vector<bool>& events) {
    const size_t n = times.size();
    if (n == 0 || events.size() != n) throw std::invalid_argument("kaplan_meier: bad inputs");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return times[a] < times[b]; });

    KMCurve curve;
    double s = 1.0;
    size_t i = 0;
    long at_risk = static_cast<long>(n);
    while (i < n) {
        size_t j = i;
        long d = 0;
        while (j < n && times[order[j]] == times[order[i]]) {
            if (events[order[j]]) ++d;
            ++j;
        }
        if (d > 0) {
            s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            curve.event_times.push_back(times[order[i]]);
            curve.survival_probs.push_back(s);
            curve.at_risk_counts.push_back(static_cast<int>(at_risk));
        }
        at_risk -= static_cast<long>(j - i);
        i = j;
    }
    return curve;
}

double chi2_1dof_pvalue(double chi2) {
    if (chi2 < 0.0) throw std::domain_error("chi2_1dof_pvalue: negative statistic");
    return std::erfc(std::sqrt(chi2 / 2.0));
}

LogRankResult log_rank_test(const std::vector<double>& times_a, const std::vector<bool>& events_a,
                            const std::vector<double>& times_b, const std::vector<bool>& events_b) {
    if (times_a.empty() || times_b.empty()) throw std::invalid_argument("log_rank_test: empty group");
    if (times_a.size() != events_a.size() || times_b.size() != events_b.size())
        throw std::invalid_argument("log_rank_test: length mismatch");

    std::vector<double> event_times;
    for (size_t i = 0; i < times_a.size(); ++i)
        if (events_a[i]) event_times.push_back(times_a[i]);
    for (size_t i = 0; i < times_b.size(); ++i)
        if (events_b[i]) event_times.push_back(times_b[i]);
    if (event_times.empty()) throw std::invalid_argument("log_rank_test: no events in either group");
    std::sort(event_times.begin(), event_times.end());
    event_times.erase(std::unique(event_times.begin(), event_times.end()), event_times.end());

    auto at_risk = [](const std::vector<double>& times, double t) {
        long r = 0;
        for (double x : times)
            if (x >= t) ++r;
        return r;
    };
    auto deaths_at = [](const std::vector<double>& times, const std::vector<bool>& events, double t) {
        long d = 0;
        for (size_t i = 0; i < times.size(); ++i)
            if (events[i] && times[i] == t) ++d;
        return d;
    };

    double observed_a = 0.0, expected_a = 0.0, variance = 0.0;
    for (double t : event_times) {
        const long r_a = at_risk(times_a, t);
        const long r_b = at_risk(times_b, t);
        const long r = r_a + r_b;
        const long d = deaths_at(times_a, events_a, t) + deaths_at(times_b, events_b, t);
        if (r == 0) continue;
        observed_a += static_cast<double>(deaths_at(times_a, events_a, t));
        const double frac_a = static_cast<double>(r_a) / static_cast<double>(r);
        expected_a += static_cast<double>(d) * frac_a;
        if (r > 1)
            variance += static_cast<double>(d) * frac_a * (1.0 - frac_a) * static_cast<double>(r - d) /
                        static_cast<double>(r - 1);
    }
    if (variance <= 0.0) throw std::domain_error("log_rank_test: zero variance (no comparable event structure)");
    LogRankResult res;
    const double diff = observed_a - expected_a;
    res.chi2 = diff * diff / variance;
    res.p_value = chi2_1dof_pvalue(res.chi2);
    return res;
}

std::pair<std::vector<size_t>, std::vector<size_t>> stratify_by_median(const std::vector<double>& risks) {
    if (risks.size() < 2) throw std::invalid_argument("stratify_by_median: need at least two risks");
    const auto [mn, mx] = std::minmax_element(risks.begin(), risks.end());
    if (*mn == *mx) throw std::domain_error("degenerate stratification: all risks identical");
    std::vector<double> sorted = risks;
    std::sort(sorted.begin(), sorted.end());
    const double median = quantile_sorted(sorted, 0.5);
    std::vector<size_t> low, high;
    for (size_t i = 0; i < risks.size(); ++i) (risks[i] > median ? high : low).push_back(i);
    return {low, high};
}

}  // namespace murre
