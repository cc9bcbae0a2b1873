#include "tsab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tsab/training.hpp"

namespace tsab {

void FeatureMatrix::validate() const {
    if (static_cast<std::int64_t>(labels.size()) != rows)
        throw ContractError("feature matrix: " + std::to_string(rows) + " rows but " +
                            std::to_string(labels.size()) + " labels");
    if (static_cast<std::int64_t>(data.size()) != rows * cols)
        throw ContractError("feature matrix: data size does not match rows*cols");
    for (double v : data)
        if (!std::isfinite(v)) throw ContractError("feature matrix: non-finite entry");
}

int SvmModel::predict(const double* x, std::int64_t cols) const {
    auto score = [&](const std::vector<double>& w) {
        double s = w.back();  // augmented bias
        for (std::int64_t j = 0; j < cols; ++j) s += w[static_cast<std::size_t>(j)] * x[j];
        return s;
    };
    if (classes.size() == 2) return score(weights[0]) > 0.0 ? classes[1] : classes[0];
    std::size_t arg = 0;
    double best = score(weights[0]);
    for (std::size_t c = 1; c < weights.size(); ++c) {
        const double s = score(weights[c]);
        if (s > best) {
            best = s;
            arg = c;
        }
    }
    return classes[arg];
}

namespace {

std::vector<int> distinct_classes(const std::vector<int>& labels) {
    std::set<int> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

// Deterministic full-batch projected subgradient on
// lambda/2 ||w||^2 + (1/n) sum hinge, lambda = 1/(C n), averaged tail.
std::vector<double> fit_binary_svm(const FeatureMatrix& f, const std::vector<std::int64_t>& rows,
                                   const std::vector<int>& targets, double c) {
    const std::int64_t n = static_cast<std::int64_t>(rows.size());
    const std::int64_t d = f.cols + 1;  // + bias slot
    const double lambda = 1.0 / (c * static_cast<double>(n));
    const int iters = 2000;
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);
    std::vector<double> avg(static_cast<std::size_t>(d), 0.0);
    std::vector<double> grad(static_cast<std::size_t>(d), 0.0);
    const double radius = 1.0 / std::sqrt(lambda);
    int averaged = 0;
    for (int t = 1; t <= iters; ++t) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            const double* x = f.row_ptr(rows[static_cast<std::size_t>(i)]);
            const double y = targets[static_cast<std::size_t>(i)];
            double margin = w[static_cast<std::size_t>(d - 1)];
            for (std::int64_t j = 0; j < f.cols; ++j)
                margin += w[static_cast<std::size_t>(j)] * x[j];
            margin *= y;
            if (margin < 1.0) {
                for (std::int64_t j = 0; j < f.cols; ++j)
                    grad[static_cast<std::size_t>(j)] -= y * x[j];
                grad[static_cast<std::size_t>(d - 1)] -= y;
            }
        }
        const double eta = 1.0 / (lambda * static_cast<double>(t + 1));
        double norm_sq = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            auto idx = static_cast<std::size_t>(j);
            w[idx] -= eta * (lambda * w[idx] + grad[idx] / static_cast<double>(n));
            norm_sq += w[idx] * w[idx];
        }
        if (norm_sq > radius * radius) {
            const double shrink = radius / std::sqrt(norm_sq);
            for (auto& v : w) v *= shrink;
        }
        if (t > iters / 2) {
            ++averaged;
            for (std::int64_t j = 0; j < d; ++j)
                avg[static_cast<std::size_t>(j)] += w[static_cast<std::size_t>(j)];
        }
    }
    for (auto& v : avg) v /= static_cast<double>(averaged);
    return avg;
}

SvmModel fit_svm(const FeatureMatrix& f, const std::vector<std::int64_t>& rows, double c) {
    SvmModel model;
    model.chosen_c = c;
    std::vector<int> present;
    {
        std::set<int> s;
        for (auto r : rows) s.insert(f.labels[static_cast<std::size_t>(r)]);
        present.assign(s.begin(), s.end());
    }
    model.classes = present;
    std::vector<int> targets(rows.size());
    if (present.size() == 2) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            targets[i] = f.labels[static_cast<std::size_t>(rows[i])] == present[1] ? 1 : -1;
        model.weights.push_back(fit_binary_svm(f, rows, targets, c));
        model.bias.push_back(model.weights[0].back());
    } else {
        for (int cls : present) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                targets[i] = f.labels[static_cast<std::size_t>(rows[i])] == cls ? 1 : -1;
            model.weights.push_back(fit_binary_svm(f, rows, targets, c));
            model.bias.push_back(model.weights.back().back());
        }
    }
    return model;
}

double accuracy_on_rows(const SvmModel& model, const FeatureMatrix& f,
                        const std::vector<std::int64_t>& rows) {
    if (rows.empty()) return 0.0;
    std::int64_t correct = 0;
    for (auto r : rows)
        if (model.predict(f.row_ptr(r), f.cols) == f.labels[static_cast<std::size_t>(r)])
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

}  // namespace

SvmTrainResult train_linear_svm(const FeatureMatrix& f, const std::vector<double>& c_grid,
                                std::uint64_t seed) {
    f.validate();
    if (c_grid.empty()) throw ParameterError("train_linear_svm: empty C grid");
    const auto classes = distinct_classes(f.labels);
    if (classes.size() < 2)
        throw DataError("train_linear_svm: degenerate labels, only " +
                        std::to_string(classes.size()) + " class present");

    // Stratified 80/20 holdout on the training rows.
    Rng rng(seed);
    std::vector<std::int64_t> fit_rows, holdout_rows;
    for (int cls : classes) {
        std::vector<std::int64_t> rows;
        for (std::int64_t r = 0; r < f.rows; ++r)
            if (f.labels[static_cast<std::size_t>(r)] == cls) rows.push_back(r);
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.next_index(i)]);
        const std::size_t hold = rows.size() >= 2 ? std::max<std::size_t>(1, rows.size() / 5) : 0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < hold ? holdout_rows : fit_rows).push_back(rows[i]);
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(holdout_rows.begin(), holdout_rows.end());

    double best_acc = -1.0;
    double best_c = c_grid.front();
    for (double c : c_grid) {
        if (!(c > 0.0)) throw ParameterError("train_linear_svm: C must be positive");
        const SvmModel candidate = fit_svm(f, fit_rows, c);
        const double acc = holdout_rows.empty() ? accuracy_on_rows(candidate, f, fit_rows)
                                                : accuracy_on_rows(candidate, f, holdout_rows);
        if (acc > best_acc) {
            best_acc = acc;
            best_c = c;
        }
    }

    std::vector<std::int64_t> all_rows(static_cast<std::size_t>(f.rows));
    for (std::int64_t r = 0; r < f.rows; ++r) all_rows[static_cast<std::size_t>(r)] = r;
    SvmTrainResult out;
    out.model = fit_svm(f, all_rows, best_c);
    out.holdout_accuracy = best_acc;
    out.train_accuracy = accuracy_on_rows(out.model, f, all_rows);
    return out;
}

double svm_accuracy(const SvmModel& model, const FeatureMatrix& f) {
    std::vector<std::int64_t> rows(static_cast<std::size_t>(f.rows));
    for (std::int64_t r = 0; r < f.rows; ++r) rows[static_cast<std::size_t>(r)] = r;
    return accuracy_on_rows(model, f, rows);
}

namespace {

double perceptron_eval(const Tensor& w, const Tensor& b, const std::vector<int>& classes,
                       const FeatureMatrix& f) {
    const std::int64_t C = w.dim(0);
    std::int64_t correct = 0;
    for (std::int64_t r = 0; r < f.rows; ++r) {
        const double* x = f.row_ptr(r);
        std::int64_t arg = 0;
        double best = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
            double s = b.values()[static_cast<std::size_t>(c)];
            const double* wc = w.values().data() + c * f.cols;
            for (std::int64_t j = 0; j < f.cols; ++j) s += wc[j] * x[j];
            if (c == 0 || s > best) {
                best = s;
                arg = c;
            }
        }
        if (classes[static_cast<std::size_t>(arg)] == f.labels[static_cast<std::size_t>(r)])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(f.rows);
}

}  // namespace

PerceptronResult train_perceptron(const FeatureMatrix& train_f, const FeatureMatrix* eval_f,
                                  int epochs, int batch, std::uint64_t seed) {
    train_f.validate();
    if (train_f.cols < 1) throw ParameterError("train_perceptron: zero-width features");
    if (batch < 1) throw ParameterError("train_perceptron: batch size must be >= 1");
    const auto classes = distinct_classes(train_f.labels);
    if (classes.size() < 2)
        throw DataError("train_perceptron: degenerate labels, only " +
                        std::to_string(classes.size()) + " class present");
    const auto C = static_cast<std::int64_t>(classes.size());
    const std::int64_t d = train_f.cols;

    std::map<int, int> to_id;
    for (std::size_t i = 0; i < classes.size(); ++i) to_id[classes[i]] = static_cast<int>(i);
    const auto weights_by_label = class_weights(train_f.labels);

    Rng rng(seed);
    const double bound = std::sqrt(1.0 / static_cast<double>(d));
    std::vector<double> w0(static_cast<std::size_t>(C * d));
    for (auto& v : w0) v = rng.uniform(-bound, bound);
    PerceptronResult res;
    res.classes = classes;
    res.w = Tensor::from({C, d}, std::move(w0), true);
    res.b = Tensor::zeros({C}, true);

    AdamState adam;
    ScheduleState sched;
    std::vector<NamedTensor> params{{"w", res.w}, {"b", res.b}};

    const std::int64_t n = train_f.rows;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    Tensor best_w = res.w.clone(), best_b = res.b.clone();
    double best_acc = -1.0;
    int best_epoch = 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(rng.next_index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        const double lr = sched.lr();
        double epoch_loss = 0.0;
        for (std::int64_t begin = 0; begin < n; begin += batch) {
            const std::int64_t end = std::min<std::int64_t>(begin + batch, n);
            const std::int64_t bsize = end - begin;
            std::vector<double> xb(static_cast<std::size_t>(bsize * d));
            std::vector<int> labels(static_cast<std::size_t>(bsize));
            std::vector<double> sw(static_cast<std::size_t>(bsize));
            for (std::int64_t i = 0; i < bsize; ++i) {
                const auto r = order[static_cast<std::size_t>(begin + i)];
                std::copy_n(train_f.row_ptr(r), d, xb.data() + i * d);
                const int lbl = train_f.labels[static_cast<std::size_t>(r)];
                labels[static_cast<std::size_t>(i)] = to_id[lbl];
                sw[static_cast<std::size_t>(i)] = weights_by_label.at(lbl);
            }
            Tensor x = Tensor::from({bsize, d}, std::move(xb));
            Tensor probs = softmax(affine(x, res.w, res.b));
            Tensor loss = nll_weighted(probs, labels, sw);
            const double batch_loss = loss.item();
            if (!std::isfinite(batch_loss))
                throw DivergenceError("train_perceptron: non-finite loss at epoch " +
                                          std::to_string(epoch),
                                      epoch);
            res.w.zero_grad();
            res.b.zero_grad();
            loss.backward();
            adam_step(params, adam, lr);
            epoch_loss += batch_loss * static_cast<double>(bsize);
        }
        epoch_loss /= static_cast<double>(n);
        res.loss_trace.push_back(epoch_loss);
        res.lr_trace.push_back(lr);
        schedule_update(sched, epoch_loss);

        const FeatureMatrix& eval_on = eval_f ? *eval_f : train_f;
        const double acc = perceptron_eval(res.w, res.b, classes, eval_on);
        if (acc > best_acc) {
            best_acc = acc;
            best_epoch = epoch + 1;
            best_w = res.w.clone();
            best_b = res.b.clone();
        }
    }

    if (epochs > 0) {
        res.w = best_w;
        res.b = best_b;
        res.best_accuracy = best_acc;
        res.best_epoch = best_epoch;
    } else {
        res.best_accuracy = perceptron_eval(res.w, res.b, classes, eval_f ? *eval_f : train_f);
    }
    return res;
}

double perceptron_accuracy(const PerceptronResult& model, const FeatureMatrix& f) {
    return perceptron_eval(model.w, model.b, model.classes, f);
}

FeatureMatrix raw_features(const std::vector<LabeledSeries>& split) {
    if (split.empty()) throw ParameterError("raw_features: empty split");
    FeatureMatrix f;
    f.rows = static_cast<std::int64_t>(split.size());
    f.cols = static_cast<std::int64_t>(split.front().values.size());
    f.data.reserve(static_cast<std::size_t>(f.rows * f.cols));
    for (const auto& s : split) {
        if (static_cast<std::int64_t>(s.values.size()) != f.cols)
            throw ContractError("raw_features: unpadded split");
        f.data.insert(f.data.end(), s.values.begin(), s.values.end());
        f.labels.push_back(s.label);
    }
    return f;
}

FeatureMatrix features_of_split(ModelParams& params, const ModelConfig& cfg,
                                const std::vector<LabeledSeries>& split, FeaturePath which) {
    if (split.empty()) throw ParameterError("features_of_split: empty split");
    FeatureMatrix f;
    f.rows = static_cast<std::int64_t>(split.size());
    constexpr std::int64_t kChunk = 256;
    for (std::int64_t begin = 0; begin < f.rows; begin += kChunk) {
        const std::int64_t end = std::min<std::int64_t>(begin + kChunk, f.rows);
        std::vector<std::int64_t> idx;
        for (std::int64_t i = begin; i < end; ++i) idx.push_back(i);
        Tensor x = batch_from_series(split, idx);
        Tensor feats = extract_features(x, cfg, params, which);
        f.cols = feats.dim(1);
        f.data.insert(f.data.end(), feats.values().begin(), feats.values().end());
    }
    f.labels = labels_of(split);
    return f;
}

ProbeTable probe_suite(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                       const ProbeOptions& opts) {
    validate_params(cfg, params);
    ProbeTable table;
    for (std::size_t fi = 0; fi < ProbeTable::kFeatures.size(); ++fi) {
        FeatureMatrix train_f, test_f;
        const std::string which = ProbeTable::kFeatures[fi];
        if (which == "raw") {
            train_f = raw_features(data.train);
            test_f = raw_features(data.test);
        } else {
            const FeaturePath path = feature_path_from_string(which);
            train_f = features_of_split(params, cfg, data.train, path);
            test_f = features_of_split(params, cfg, data.test, path);
        }
        const auto svm = train_linear_svm(train_f, opts.c_grid, opts.seed);
        table.accuracy[fi][0] = svm_accuracy(svm.model, test_f);
        const auto mlp = train_perceptron(train_f, &test_f, opts.perceptron_epochs, opts.batch,
                                          opts.seed);
        table.accuracy[fi][1] = mlp.best_accuracy;
    }
    return table;
}

}  // namespace tsab
