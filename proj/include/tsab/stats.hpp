#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsab/errors.hpp"

namespace tsab {

struct HypothesisTestResult {
    double statistic = 0.0;  // signed: W+ - W-
    double w_plus = 0.0;
    double w_minus = 0.0;
    double p_value = 1.0;
    int n_effective = 0;
    enum class Method { Exact, Approximate } method = Method::Exact;
    double corrected_alpha = 0.05;
    bool reject = false;
};

// Two-sided paired Wilcoxon signed-rank test. Zero differences are
// discarded, tied magnitudes get average ranks. Exact null distribution for
// up to 25 effective pairs, tie-corrected normal approximation with
// continuity correction beyond that. `alpha` is the (already corrected)
// significance level recorded in the result.
HypothesisTestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                          const std::vector<double>& y,
                                          double alpha = 0.05);

// Both routes individually, for cross-checking one against the other.
double wilcoxon_exact_p(const std::vector<double>& x, const std::vector<double>& y);
double wilcoxon_approx_p(const std::vector<double>& x, const std::vector<double>& y);

// 1 - (1 - alpha)^(1/m)
double dunn_sidak(double alpha, int m);

struct ResultTable {
    // dataset -> model -> accuracy
    std::map<std::string, std::map<std::string, double>> rows;
    // dataset -> number of unique classes
    std::map<std::string, int> class_counts;
};

// Mean over datasets of (1 - accuracy) / class count.
double mpce(const ResultTable& table, const std::string& model);

struct WinTieLoss {
    int wins = 0;
    int ties = 0;
    int losses = 0;
    double mean_improvement = 0.0;  // mean of a-b over wins
    double mean_degradation = 0.0;  // mean of b-a over losses
};

WinTieLoss win_tie_loss(const std::vector<double>& a, const std::vector<double>& b,
                        double tol = 0.0);

}  // namespace tsab
