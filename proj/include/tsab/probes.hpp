#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tsab/data.hpp"
#include "tsab/model.hpp"

namespace tsab {

struct FeatureMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> data;  // row-major
    std::vector<int> labels;

    const double* row_ptr(std::int64_t r) const { return data.data() + r * cols; }
    void validate() const;
};

struct SvmModel {
    // One weight vector per class for multiclass one-vs-rest, exactly one
    // for binary. The bias rides along as an augmented constant feature.
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    std::vector<int> classes;  // sorted distinct labels
    double chosen_c = 1.0;

    int predict(const double* x, std::int64_t cols) const;
};

struct SvmTrainResult {
    SvmModel model;
    double holdout_accuracy = 0.0;
    double train_accuracy = 0.0;
};

// L2-regularized hinge loss by deterministic full-batch subgradient descent;
// C picked from the grid by stratified 80/20 holdout, then refit on all rows.
SvmTrainResult train_linear_svm(const FeatureMatrix& f, const std::vector<double>& c_grid,
                                std::uint64_t seed = 0x5eed);

double svm_accuracy(const SvmModel& model, const FeatureMatrix& f);

struct PerceptronResult {
    Tensor w;  // [classes x cols]
    Tensor b;  // [classes]
    std::vector<int> classes;
    double best_accuracy = 0.0;  // on eval_f when given, else on train_f
    int best_epoch = 0;
    std::vector<double> loss_trace;
    std::vector<double> lr_trace;
};

// Single affine layer + softmax, trained with the exact model protocol:
// Adam, the plateau schedule, class weighting, seeded shuffling.
PerceptronResult train_perceptron(const FeatureMatrix& train_f,
                                  const FeatureMatrix* eval_f = nullptr, int epochs = 2000,
                                  int batch = 128, std::uint64_t seed = 0);

double perceptron_accuracy(const PerceptronResult& model, const FeatureMatrix& f);

// Flattened normalized series as the feature vector.
FeatureMatrix raw_features(const std::vector<LabeledSeries>& split);
// Block activations via extract_features, chunked over the split.
FeatureMatrix features_of_split(ModelParams& params, const ModelConfig& cfg,
                                const std::vector<LabeledSeries>& split, FeaturePath which);

struct ProbeOptions {
    std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    int perceptron_epochs = 2000;
    int batch = 128;
    std::uint64_t seed = 1;
};

struct ProbeTable {
    static constexpr std::array<const char*, 4> kFeatures = {"raw", "fcn", "branch", "concat"};
    static constexpr std::array<const char*, 2> kClassifiers = {"svm", "mlp"};
    // accuracy[feature][classifier], both in the orders above
    std::array<std::array<double, 2>, 4> accuracy{};
};

// Trains both probe classifiers on the train-split features of every path
// and reports test-split accuracies.
ProbeTable probe_suite(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                       const ProbeOptions& opts = {});

}  // namespace tsab
