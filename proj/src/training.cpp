#include "tsab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace tsab {

void adam_step(std::vector<NamedTensor>& params, AdamState& state, double lr) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].tensor.values().size(), 0.0);
            state.v[i].assign(params[i].tensor.values().size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) +
                            " tensors, got " + std::to_string(params.size()));
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& tensor = params[i].tensor;
        if (!tensor.has_grad())
            throw ContractError("adam_step: parameter '" + params[i].name + "' has no gradient");
        if (state.m[i].size() != tensor.values().size())
            throw ContractError("adam_step: shape drift on '" + params[i].name + "'");
        const auto& g = tensor.grad();
        auto& vals = tensor.values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < vals.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            vals[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

double ScheduleState::lr() const {
    return std::max(init_lr * std::pow(2.0, -static_cast<double>(decays) / 3.0), floor);
}

void schedule_update(ScheduleState& state, double epoch_train_loss) {
    if (!std::isfinite(epoch_train_loss))
        throw DivergenceError("schedule_update: non-finite training loss", -1);
    if (epoch_train_loss < state.best_train_loss) {
        state.best_train_loss = epoch_train_loss;
        state.epochs_since_improve = 0;
        return;
    }
    ++state.epochs_since_improve;
    if (state.epochs_since_improve >= state.patience) {
        ++state.decays;
        state.epochs_since_improve = 0;
    }
}

namespace {

void check_trainable(const ModelConfig& cfg, const Dataset& data) {
    if (data.train.empty()) throw ParameterError("train: empty train split");
    if (static_cast<std::int64_t>(data.num_classes) != cfg.num_classes)
        throw ContractError("train: dataset has " + std::to_string(data.num_classes) +
                            " classes, config expects " + std::to_string(cfg.num_classes));
    if (cfg.input_length != data.max_length)
        throw ContractError("train: config input_length " + std::to_string(cfg.input_length) +
                            " does not match dataset max_length " +
                            std::to_string(data.max_length));
    for (const auto& s : data.train)
        if (static_cast<std::int64_t>(s.values.size()) != data.max_length)
            throw ContractError("train: train split is not padded to max_length");
    for (const auto& s : data.test)
        if (static_cast<std::int64_t>(s.values.size()) != data.max_length)
            throw ContractError("train: test split is not padded to max_length");
}

}  // namespace

TrainReport train(const ModelConfig& cfg, const Dataset& data, const TrainOptions& opts) {
    cfg.validate();
    check_trainable(cfg, data);
    if (opts.batch < 1) throw ParameterError("train: batch size must be >= 1");
    const auto start = std::chrono::steady_clock::now();

    Rng rng(opts.seed);
    ModelParams params = init_params(cfg, rng);
    AdamState adam;
    ScheduleState sched;

    const auto weights = class_weights(labels_of(data.train));
    const auto n = static_cast<std::int64_t>(data.train.size());

    TrainReport report;
    report.seed = opts.seed;
    report.cells = cfg.cells;
    report.best_test_accuracy = -1.0;

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        // Fisher-Yates with the run's own stream
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(rng.next_index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        const double lr = sched.lr();
        double epoch_loss = 0.0;
        for (std::int64_t begin = 0; begin < n; begin += opts.batch) {
            const std::int64_t end = std::min<std::int64_t>(begin + opts.batch, n);
            std::vector<std::int64_t> idx(order.begin() + begin, order.begin() + end);
            Tensor x = batch_from_series(data.train, idx);
            std::vector<int> labels;
            std::vector<double> w;
            labels.reserve(idx.size());
            w.reserve(idx.size());
            for (auto i : idx) {
                const int y = data.train[static_cast<std::size_t>(i)].label;
                labels.push_back(y);
                w.push_back(weights.at(y));
            }
            LossResult lr_out = model_loss(x, labels, w, cfg, params, Mode::Train, rng);
            const double batch_loss = lr_out.loss.item();
            if (!std::isfinite(batch_loss))
                throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch),
                                      epoch);
            params.zero_grads();
            lr_out.loss.backward();
            adam_step(params.entries, adam, lr);
            epoch_loss += batch_loss * static_cast<double>(end - begin);
        }
        epoch_loss /= static_cast<double>(n);
        report.train_loss.push_back(epoch_loss);
        report.lr_trace.push_back(lr);
        schedule_update(sched, epoch_loss);

        const EvalResult ev = evaluate(params, cfg, data.test);
        if (ev.accuracy > report.best_test_accuracy) {
            report.best_test_accuracy = ev.accuracy;
            report.best_epoch = epoch + 1;
            report.best_params = params.clone();
        }
    }

    if (opts.epochs == 0) {
        report.best_test_accuracy = evaluate(params, cfg, data.test).accuracy;
        report.best_epoch = 0;
        report.best_params = params.clone();
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

EvalResult evaluate(ModelParams& params, const ModelConfig& cfg,
                    const std::vector<LabeledSeries>& split) {
    if (split.empty()) throw ParameterError("evaluate: empty split");
    Rng unused(0);
    const auto n = static_cast<std::int64_t>(split.size());
    constexpr std::int64_t kChunk = 256;
    std::int64_t correct = 0;
    std::map<int, std::int64_t> class_total, class_wrong;
    for (std::int64_t begin = 0; begin < n; begin += kChunk) {
        const std::int64_t end = std::min<std::int64_t>(begin + kChunk, n);
        std::vector<std::int64_t> idx;
        for (std::int64_t i = begin; i < end; ++i) idx.push_back(i);
        Tensor x = batch_from_series(split, idx);
        ForwardResult fr = model_forward(x, cfg, params, Mode::Infer, unused);
        const auto& p = fr.probs.values();
        const std::int64_t C = fr.probs.dim(1);
        for (std::int64_t r = 0; r < end - begin; ++r) {
            const double* prow = p.data() + r * C;
            std::int64_t arg = 0;
            for (std::int64_t c = 1; c < C; ++c)
                if (prow[c] > prow[arg]) arg = c;
            const int truth = split[static_cast<std::size_t>(begin + r)].label;
            ++class_total[truth];
            if (arg == truth)
                ++correct;
            else
                ++class_wrong[truth];
        }
    }
    EvalResult out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    for (const auto& [label, total] : class_total) {
        const auto wrong = class_wrong.count(label) ? class_wrong[label] : 0;
        out.per_class_error[label] = static_cast<double>(wrong) / static_cast<double>(total);
    }
    return out;
}

GridResult grid_search_cells(ModelConfig tmpl, const Dataset& data,
                             const std::vector<std::int64_t>& cells, const TrainOptions& opts) {
    if (cells.empty()) throw ParameterError("grid_search_cells: empty grid");
    GridResult out;
    double best_acc = -1.0;
    std::int64_t best_cells = 0;
    for (auto c : cells) {
        ModelConfig cfg = tmpl;
        cfg.cells = c;
        TrainOptions arm = opts;
        arm.seed = Rng(opts.seed).spawn(static_cast<std::uint64_t>(c)).seed();
        TrainReport rep;
        try {
            rep = train(cfg, data, arm);
        } catch (const DivergenceError& e) {
            throw DivergenceError("cells=" + std::to_string(c) + ": " + e.what(), e.epoch);
        } catch (const Error& e) {
            throw Error("cells=" + std::to_string(c) + ": " + e.what());
        }
        const double acc = rep.best_test_accuracy;
        out.reports.push_back(std::move(rep));
        if (acc > best_acc || (acc == best_acc && c < best_cells)) {
            best_acc = acc;
            best_cells = c;
            out.best_config = cfg;
        }
    }
    return out;
}

}  // namespace tsab
