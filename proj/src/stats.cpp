#include "tsab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace tsab {

namespace {

constexpr int kExactLimit = 25;

struct SignedRanks {
    std::vector<double> ranks;  // rank of |d_i|, average ranks on ties
    std::vector<int> signs;     // +1 / -1
    double w_plus = 0.0;
    double w_minus = 0.0;
    double tie_correction = 0.0;  // sum over tie groups of (t^3 - t)
};

SignedRanks signed_ranks(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw ContractError("wilcoxon: paired samples differ in length, " +
                            std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    if (x.empty()) throw ContractError("wilcoxon: empty samples");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty())
        throw DataError("wilcoxon: all paired differences are zero, test undefined");

    const std::size_t n = diffs.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(diffs[a]) < std::fabs(diffs[b]);
    });

    SignedRanks out;
    out.ranks.resize(n);
    out.signs.resize(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && std::fabs(diffs[idx[j + 1]]) == std::fabs(diffs[idx[i]])) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        const auto group = static_cast<double>(j - i + 1);
        if (group > 1.0) out.tie_correction += group * group * group - group;
        for (std::size_t k = i; k <= j; ++k) out.ranks[idx[k]] = avg_rank;
        i = j + 1;
    }
    for (std::size_t k = 0; k < n; ++k) {
        out.signs[k] = diffs[k] > 0.0 ? 1 : -1;
        if (diffs[k] > 0.0)
            out.w_plus += out.ranks[k];
        else
            out.w_minus += out.ranks[k];
    }
    return out;
}

// Exact two-sided p over the 2^n equiprobable sign assignments, counted with
// a subset-sum table over doubled ranks (average ranks are half-integers).
double exact_two_sided_p(const SignedRanks& sr) {
    const std::size_t n = sr.ranks.size();
    std::vector<std::int64_t> r2(n);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r2[i] = std::llround(2.0 * sr.ranks[i]);
        total += r2[i];
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    std::int64_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
        reach += r2[i];
        for (std::int64_t s = reach; s >= r2[i]; --s)
            count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r2[i])];
    }
    const double denom = std::ldexp(1.0, static_cast<int>(n));  // 2^n
    const auto w2 = std::llround(2.0 * sr.w_plus);
    double below = 0.0, above = 0.0;
    for (std::int64_t s = 0; s <= total; ++s) {
        if (s <= w2) below += count[static_cast<std::size_t>(s)];
        if (s >= w2) above += count[static_cast<std::size_t>(s)];
    }
    const double p = 2.0 * std::min(below, above) / denom;
    return std::min(1.0, p);
}

double normal_two_sided_p(const SignedRanks& sr) {
    const auto n = static_cast<double>(sr.ranks.size());
    const double mu = n * (n + 1.0) / 4.0;
    const double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - sr.tie_correction / 48.0;
    if (variance <= 0.0)
        throw DataError("wilcoxon: zero variance under ties, test undefined");
    const double sd = std::sqrt(variance);
    const double delta = sr.w_plus - mu;
    const double cc = delta > 0.0 ? -0.5 : (delta < 0.0 ? 0.5 : 0.0);
    const double z = (delta + cc) / sd;
    // two-sided: 2 * (1 - Phi(|z|)) = erfc(|z| / sqrt(2))
    return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

}  // namespace

HypothesisTestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                          const std::vector<double>& y, double alpha) {
    const auto sr = signed_ranks(x, y);
    HypothesisTestResult res;
    res.w_plus = sr.w_plus;
    res.w_minus = sr.w_minus;
    res.statistic = sr.w_plus - sr.w_minus;
    res.n_effective = static_cast<int>(sr.ranks.size());
    if (res.n_effective <= kExactLimit) {
        res.method = HypothesisTestResult::Method::Exact;
        res.p_value = exact_two_sided_p(sr);
    } else {
        res.method = HypothesisTestResult::Method::Approximate;
        res.p_value = normal_two_sided_p(sr);
    }
    res.corrected_alpha = alpha;
    res.reject = res.p_value < alpha;
    return res;
}

double wilcoxon_exact_p(const std::vector<double>& x, const std::vector<double>& y) {
    return exact_two_sided_p(signed_ranks(x, y));
}

double wilcoxon_approx_p(const std::vector<double>& x, const std::vector<double>& y) {
    return normal_two_sided_p(signed_ranks(x, y));
}

double dunn_sidak(double alpha, int m) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("dunn_sidak: alpha must lie in (0,1), got " + std::to_string(alpha));
    if (m < 1) throw ParameterError("dunn_sidak: m must be >= 1, got " + std::to_string(m));
    return 1.0 - std::pow(1.0 - alpha, 1.0 / static_cast<double>(m));
}

double mpce(const ResultTable& table, const std::string& model) {
    if (table.rows.empty()) throw ContractError("mpce: empty result table");
    double sum = 0.0;
    for (const auto& [dataset, accs] : table.rows) {
        auto it = accs.find(model);
        if (it == accs.end())
            throw ContractError("mpce: dataset '" + dataset + "' has no accuracy for model '" +
                                model + "'");
        auto cc = table.class_counts.find(dataset);
        if (cc == table.class_counts.end() || cc->second < 1)
            throw ContractError("mpce: missing class count for dataset '" + dataset + "'");
        sum += (1.0 - it->second) / static_cast<double>(cc->second);
    }
    return sum / static_cast<double>(table.rows.size());
}

WinTieLoss win_tie_loss(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    if (a.size() != b.size())
        throw ContractError("win_tie_loss: length mismatch, " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
    WinTieLoss out;
    double gain = 0.0, drop = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i] + tol) {
            ++out.wins;
            gain += a[i] - b[i];
        } else if (a[i] < b[i] - tol) {
            ++out.losses;
            drop += b[i] - a[i];
        } else {
            ++out.ties;
        }
    }
    if (out.wins > 0) out.mean_improvement = gain / out.wins;
    if (out.losses > 0) out.mean_degradation = drop / out.losses;
    return out;
}

}  // namespace tsab
