#include "tsab/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "tsab/io.hpp"

namespace tsab {

std::string to_string(BranchKind k) {
    switch (k) {
        case BranchKind::LSTM: return "lstm";
        case BranchKind::ALSTM: return "alstm";
        case BranchKind::GRU: return "gru";
        case BranchKind::RNN: return "rnn";
        case BranchKind::DENSE: return "dense";
    }
    return "?";
}

BranchKind branch_from_string(const std::string& s) {
    if (s == "lstm") return BranchKind::LSTM;
    if (s == "alstm") return BranchKind::ALSTM;
    if (s == "gru") return BranchKind::GRU;
    if (s == "rnn") return BranchKind::RNN;
    if (s == "dense") return BranchKind::DENSE;
    throw ParameterError("unknown branch kind '" + s + "' (expected lstm|alstm|gru|rnn|dense)");
}

void ModelConfig::validate() const {
    if (cells < 1) throw ParameterError("model config: cells must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
        throw ParameterError("model config: dropout_p must lie in [0,1)");
    if (num_classes < 2) throw ParameterError("model config: num_classes must be >= 2");
    if (input_length < 1) throw ParameterError("model config: input_length must be >= 1");
    for (int i = 0; i < 3; ++i) {
        if (fcn.filters[static_cast<std::size_t>(i)] < 1)
            throw ParameterError("model config: filter counts must be >= 1");
        if (fcn.kernels[static_cast<std::size_t>(i)] < 1)
            throw ParameterError("model config: kernel durations must be >= 1");
    }
}

// ---- parameter store ---------------------------------------------------------

Tensor& ModelParams::at(const std::string& name) {
    for (auto& e : entries)
        if (e.name == name) return e.tensor;
    throw ContractError("unknown parameter '" + name + "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e.tensor;
    throw ContractError("unknown parameter '" + name + "'");
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return true;
    return false;
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    out.entries.reserve(entries.size());
    for (const auto& e : entries) {
        Tensor t = Tensor::from(e.tensor.shape(), e.tensor.values(), e.tensor.requires_grad());
        out.entries.push_back({e.name, std::move(t)});
    }
    out.bn = bn;
    return out;
}

void ModelParams::zero_grads() {
    for (auto& e : entries) e.tensor.zero_grad();
}

std::vector<std::pair<std::string, Shape>> expected_param_shapes(const ModelConfig& cfg) {
    cfg.validate();
    const auto& f = cfg.fcn.filters;
    const auto& k = cfg.fcn.kernels;
    const std::int64_t c = cfg.cells;
    const std::int64_t F = cfg.branch_input_width();
    std::vector<std::pair<std::string, Shape>> spec = {
        {"conv1.w", {f[0], k[0], 1}},    {"conv1.b", {f[0]}},
        {"bn1.gamma", {f[0]}},           {"bn1.beta", {f[0]}},
        {"conv2.w", {f[1], k[1], f[0]}}, {"conv2.b", {f[1]}},
        {"bn2.gamma", {f[1]}},           {"bn2.beta", {f[1]}},
        {"conv3.w", {f[2], k[2], f[1]}}, {"conv3.b", {f[2]}},
        {"bn3.gamma", {f[2]}},           {"bn3.beta", {f[2]}},
    };
    switch (cfg.branch) {
        case BranchKind::LSTM:
            for (const char* g : {"update", "forget", "output", "cell"}) {
                spec.push_back({std::string("lstm.w_") + g, {c, c}});
                spec.push_back({std::string("lstm.in_") + g, {c, F}});
            }
            break;
        case BranchKind::ALSTM:
            for (const char* g : {"update", "forget", "output", "cell"}) {
                spec.push_back({std::string("lstm.w_") + g, {c, c}});
                // the cell consumes [x_t ; context], hence the doubled fan-in
                spec.push_back({std::string("lstm.in_") + g, {c, 2 * F}});
            }
            spec.push_back({"attn.state_proj", {c, c}});
            spec.push_back({"attn.annot_proj", {c, F}});
            spec.push_back({"attn.hidden_bias", {c}});
            spec.push_back({"attn.score", {c}});
            break;
        case BranchKind::GRU:
            for (const char* g : {"update", "reset", "cand"}) {
                spec.push_back({std::string("gru.w_") + g, {c, c}});
                spec.push_back({std::string("gru.in_") + g, {c, F}});
            }
            break;
        case BranchKind::RNN:
            spec.push_back({"rnn.w", {c, c}});
            spec.push_back({"rnn.in", {c, F}});
            break;
        case BranchKind::DENSE:
            spec.push_back({"dense.w", {c, cfg.input_length}});
            spec.push_back({"dense.b", {c}});
            break;
    }
    spec.push_back({"fc.w", {cfg.num_classes, cfg.feature_width()}});
    spec.push_back({"fc.b", {cfg.num_classes}});
    return spec;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Tensor init_one(const std::string& name, const Shape& shape, Rng& rng) {
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    std::vector<double> v(n, 0.0);
    if (ends_with(name, ".gamma")) {
        std::fill(v.begin(), v.end(), 1.0);
    } else if (ends_with(name, ".b") || ends_with(name, ".beta") || ends_with(name, "_bias")) {
        // zeros
    } else if (name.rfind("conv", 0) == 0 && ends_with(name, ".w")) {
        const double fan_in = static_cast<double>(shape[1] * shape[2]);
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& x : v) x = sd * rng.normal();
    } else {
        const double fan_in = static_cast<double>(shape.back());
        const double bound = std::sqrt(1.0 / fan_in);
        for (auto& x : v) x = rng.uniform(-bound, bound);
    }
    return Tensor::from(shape, std::move(v), true);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
    ModelParams params;
    for (const auto& [name, shape] : expected_param_shapes(cfg))
        params.entries.push_back({name, init_one(name, shape, rng)});
    return params;
}

void validate_params(const ModelConfig& cfg, const ModelParams& params) {
    const auto spec = expected_param_shapes(cfg);
    if (spec.size() != params.entries.size())
        throw ContractError("model params do not match config: expected " +
                            std::to_string(spec.size()) + " tensors, got " +
                            std::to_string(params.entries.size()));
    for (const auto& [name, shape] : spec) {
        if (!params.has(name)) throw ContractError("model params missing '" + name + "'");
        const auto& t = params.at(name);
        if (t.shape() != shape)
            throw ContractError("parameter '" + name + "' has shape " + shape_str(t.shape()) +
                                ", config requires " + shape_str(shape));
    }
}

// ---- branch steps ------------------------------------------------------------

BranchState lstm_step(const Tensor& x_t, const BranchState& state, const LstmParams& p) {
    auto gate_pre = [&](const Tensor& w, const Tensor& in) {
        return add(linear(state.h, w), linear(x_t, in));
    };
    Tensor g_update = sigmoid(gate_pre(p.w_update, p.in_update));
    Tensor g_forget = sigmoid(gate_pre(p.w_forget, p.in_forget));
    Tensor g_output = sigmoid(gate_pre(p.w_output, p.in_output));
    Tensor g_cell = tanh_act(gate_pre(p.w_cell, p.in_cell));
    Tensor m = add(mul(g_forget, state.m), mul(g_update, g_cell));
    Tensor h = tanh_act(mul(g_output, m));
    return {h, m};
}

Tensor gru_step(const Tensor& x_t, const Tensor& h, const GruParams& p) {
    Tensor z = sigmoid(add(linear(h, p.w_update), linear(x_t, p.in_update)));
    Tensor r = sigmoid(add(linear(h, p.w_reset), linear(x_t, p.in_reset)));
    Tensor cand = tanh_act(add(linear(mul(r, h), p.w_cand), linear(x_t, p.in_cand)));
    Tensor keep = mul(sub(Tensor::full(z.shape(), 1.0), z), h);
    return add(keep, mul(z, cand));
}

Tensor rnn_step(const Tensor& x_t, const Tensor& h, const RnnParams& p) {
    return tanh_act(add(linear(h, p.w_recurrent), linear(x_t, p.w_input)));
}

Tensor dense_branch(const Tensor& x, const Tensor& w, const Tensor& b) {
    return sigmoid(affine(x, w, b));
}

// ---- attention -----------------------------------------------------------------

AttentionOut attention_mix(const Tensor& scores, const std::vector<Tensor>& annotations) {
    if (annotations.empty()) throw ParameterError("attention_mix: no annotations");
    if (scores.rank() != 2 ||
        scores.dim(1) != static_cast<std::int64_t>(annotations.size()))
        throw DimensionError("attention_mix: scores " + shape_str(scores.shape()) +
                             " do not cover " + std::to_string(annotations.size()) +
                             " annotations");
    Tensor alpha = softmax(scores);
    Tensor context = scale_rows(annotations[0], col(alpha, 0));
    for (std::size_t j = 1; j < annotations.size(); ++j)
        context = add(context, scale_rows(annotations[j], col(alpha, static_cast<std::int64_t>(j))));
    return {context, alpha};
}

AttentionOut attention_context_batch(const std::vector<Tensor>& annotations,
                                     const Tensor& prev_state, const AttentionParams& p) {
    if (annotations.empty()) throw ParameterError("attention: no annotations");
    const std::int64_t H = p.score.dim(0);
    Tensor state_term = linear(prev_state, p.state_proj);  // [B x H]
    Tensor score_row = reshape(p.score, {1, H});
    std::vector<Tensor> cols;
    cols.reserve(annotations.size());
    for (const auto& a : annotations) {
        Tensor hidden = tanh_act(add(state_term, affine(a, p.annot_proj, p.hidden_bias)));
        cols.push_back(linear(hidden, score_row));  // [B x 1]
    }
    return attention_mix(hstack(cols), annotations);
}

Tensor attention_context(const Tensor& annotations, const Tensor& prev_state,
                         const AttentionParams& p) {
    if (annotations.rank() != 2)
        throw DimensionError("attention_context: annotations must be [steps x width], got " +
                             shape_str(annotations.shape()));
    const std::int64_t S = annotations.dim(0), W = annotations.dim(1);
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(S));
    for (std::int64_t j = 0; j < S; ++j)
        rows.push_back(reshape(row(annotations, j), {1, W}));
    Tensor prev = reshape(prev_state, {1, prev_state.size()});
    AttentionOut out = attention_context_batch(rows, prev, p);
    return reshape(out.context, {W});
}

// ---- assembled model -----------------------------------------------------------

Tensor fcn_forward(const Tensor& x, const ModelConfig& cfg, ModelParams& params, Mode mode) {
    if (x.rank() != 3)
        throw DimensionError("fcn_forward: input must be [B x 1 x T], got " + shape_str(x.shape()));
    Tensor h = x;
    const char* conv_names[3] = {"conv1", "conv2", "conv3"};
    const char* bn_names[3] = {"bn1", "bn2", "bn3"};
    for (int i = 0; i < 3; ++i) {
        h = conv1d_same(h, params.at(std::string(conv_names[i]) + ".w"),
                        params.at(std::string(conv_names[i]) + ".b"));
        h = batch_norm(h, params.at(std::string(bn_names[i]) + ".gamma"),
                       params.at(std::string(bn_names[i]) + ".beta"),
                       params.bn[static_cast<std::size_t>(i)], mode);
        h = relu(h);
    }
    return global_average_pool(h);
}

namespace {

std::pair<Tensor, std::int64_t> run_branch(const Tensor& x, const ModelConfig& cfg,
                                           ModelParams& params) {
    Tensor z = cfg.dimension_shuffle ? dimension_shuffle(x) : x;
    const std::int64_t B = z.dim(0), F = z.dim(1), S = z.dim(2);

    if (cfg.branch == BranchKind::DENSE) {
        Tensor flat = reshape(z, {B, F * S});
        return {dense_branch(flat, params.at("dense.w"), params.at("dense.b")), 1};
    }

    std::vector<Tensor> steps;
    steps.reserve(static_cast<std::size_t>(S));
    for (std::int64_t t = 0; t < S; ++t) steps.push_back(slice_time(z, t));

    std::int64_t executed = 0;
    switch (cfg.branch) {
        case BranchKind::LSTM: {
            LstmParams p{params.at("lstm.w_update"), params.at("lstm.w_forget"),
                         params.at("lstm.w_output"), params.at("lstm.w_cell"),
                         params.at("lstm.in_update"), params.at("lstm.in_forget"),
                         params.at("lstm.in_output"), params.at("lstm.in_cell")};
            BranchState state{Tensor::zeros({B, cfg.cells}), Tensor::zeros({B, cfg.cells})};
            for (const auto& x_t : steps) {
                state = lstm_step(x_t, state, p);
                ++executed;
            }
            return {state.h, executed};
        }
        case BranchKind::ALSTM: {
            LstmParams p{params.at("lstm.w_update"), params.at("lstm.w_forget"),
                         params.at("lstm.w_output"), params.at("lstm.w_cell"),
                         params.at("lstm.in_update"), params.at("lstm.in_forget"),
                         params.at("lstm.in_output"), params.at("lstm.in_cell")};
            AttentionParams ap{params.at("attn.state_proj"), params.at("attn.annot_proj"),
                               params.at("attn.hidden_bias"), params.at("attn.score")};
            BranchState state{Tensor::zeros({B, cfg.cells}), Tensor::zeros({B, cfg.cells})};
            for (const auto& x_t : steps) {
                AttentionOut att = attention_context_batch(steps, state.h, ap);
                state = lstm_step(hstack({x_t, att.context}), state, p);
                ++executed;
            }
            return {state.h, executed};
        }
        case BranchKind::GRU: {
            GruParams p{params.at("gru.w_update"), params.at("gru.w_reset"),
                        params.at("gru.w_cand"),   params.at("gru.in_update"),
                        params.at("gru.in_reset"), params.at("gru.in_cand")};
            Tensor h = Tensor::zeros({B, cfg.cells});
            for (const auto& x_t : steps) {
                h = gru_step(x_t, h, p);
                ++executed;
            }
            return {h, executed};
        }
        case BranchKind::RNN: {
            RnnParams p{params.at("rnn.w"), params.at("rnn.in")};
            Tensor h = Tensor::zeros({B, cfg.cells});
            for (const auto& x_t : steps) {
                h = rnn_step(x_t, h, p);
                ++executed;
            }
            return {h, executed};
        }
        case BranchKind::DENSE: break;  // handled above
    }
    throw ContractError("run_branch: unreachable branch kind");
}

}  // namespace

ForwardResult model_forward(const Tensor& x, const ModelConfig& cfg, ModelParams& params,
                            Mode mode, Rng& rng) {
    validate_params(cfg, params);
    if (x.rank() != 3 || x.dim(1) != 1)
        throw ContractError("model_forward: input must be [B x 1 x T], got " +
                            shape_str(x.shape()));
    if (x.dim(2) != cfg.input_length)
        throw ContractError("model_forward: input length " + std::to_string(x.dim(2)) +
                            " does not match configured " + std::to_string(cfg.input_length));

    ForwardResult out;
    auto [branch_feat, steps] = run_branch(x, cfg, params);
    out.branch_features = branch_feat;
    out.branch_steps = steps;
    out.fcn_features = fcn_forward(x, cfg, params, mode);
    Tensor dropped = dropout(branch_feat, cfg.dropout_p, mode, rng);
    out.concat_features = hstack({dropped, out.fcn_features});
    Tensor logits = affine(out.concat_features, params.at("fc.w"), params.at("fc.b"));
    out.probs = softmax(logits);
    return out;
}

LossResult model_loss(const Tensor& x, const std::vector<int>& labels,
                      const std::vector<double>& sample_weights, const ModelConfig& cfg,
                      ModelParams& params, Mode mode, Rng& rng) {
    ForwardResult fr = model_forward(x, cfg, params, mode, rng);
    LossResult out;
    out.loss = nll_weighted(fr.probs, labels, sample_weights);
    out.probs = fr.probs;
    out.branch_steps = fr.branch_steps;
    return out;
}

FeaturePath feature_path_from_string(const std::string& s) {
    if (s == "branch") return FeaturePath::Branch;
    if (s == "fcn") return FeaturePath::Fcn;
    if (s == "concat") return FeaturePath::Concat;
    throw ParameterError("unknown feature path '" + s + "' (expected branch|fcn|concat)");
}

Tensor extract_features(const Tensor& x, const ModelConfig& cfg, ModelParams& params,
                        FeaturePath which) {
    Rng unused(0);
    ForwardResult fr = model_forward(x, cfg, params, Mode::Infer, unused);
    switch (which) {
        case FeaturePath::Branch: return fr.branch_features.detach();
        case FeaturePath::Fcn: return fr.fcn_features.detach();
        case FeaturePath::Concat: return fr.concat_features.detach();
    }
    throw ParameterError("extract_features: unknown selector");
}

Tensor batch_from_series(const std::vector<LabeledSeries>& samples,
                         const std::vector<std::int64_t>& indices) {
    if (indices.empty()) throw ParameterError("batch_from_series: empty index list");
    const auto T = static_cast<std::int64_t>(
        samples.at(static_cast<std::size_t>(indices[0])).values.size());
    std::vector<double> data;
    data.reserve(indices.size() * static_cast<std::size_t>(T));
    for (auto idx : indices) {
        const auto& s = samples.at(static_cast<std::size_t>(idx));
        if (static_cast<std::int64_t>(s.values.size()) != T)
            throw ContractError("batch_from_series: unpadded samples (lengths differ)");
        data.insert(data.end(), s.values.begin(), s.values.end());
    }
    return Tensor::from({static_cast<std::int64_t>(indices.size()), 1, T}, std::move(data));
}

// ---- checkpoints -----------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "tsab_checkpoint_v1";
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params) {
    std::ostringstream os;
    os << kCheckpointMagic << "\n";
    os << "branch " << to_string(cfg.branch) << "\n";
    os << "cells " << cfg.cells << "\n";
    os << "dimension_shuffle " << (cfg.dimension_shuffle ? 1 : 0) << "\n";
    os << "dropout_p " << fmt_double(cfg.dropout_p) << "\n";
    os << "filters " << cfg.fcn.filters[0] << " " << cfg.fcn.filters[1] << " "
       << cfg.fcn.filters[2] << "\n";
    os << "kernels " << cfg.fcn.kernels[0] << " " << cfg.fcn.kernels[1] << " "
       << cfg.fcn.kernels[2] << "\n";
    os << "num_classes " << cfg.num_classes << "\n";
    os << "input_length " << cfg.input_length << "\n";
    for (int i = 0; i < 3; ++i) {
        const auto& st = params.bn[static_cast<std::size_t>(i)];
        os << "bn" << (i + 1) << " " << st.running_mean.size() << "\n";
        for (std::size_t j = 0; j < st.running_mean.size(); ++j)
            os << (j ? " " : "") << fmt_double(st.running_mean[j]);
        os << "\n";
        for (std::size_t j = 0; j < st.running_var.size(); ++j)
            os << (j ? " " : "") << fmt_double(st.running_var[j]);
        os << "\n";
    }
    os << "params " << params.entries.size() << "\n";
    for (const auto& e : params.entries) {
        os << e.name << " " << e.tensor.rank();
        for (auto d : e.tensor.shape()) os << " " << d;
        os << "\n";
        const auto& v = e.tensor.values();
        for (std::size_t j = 0; j < v.size(); ++j) os << (j ? " " : "") << fmt_double(v[j]);
        os << "\n";
    }
    os << "end\n";
    atomic_write_text(path, os.str());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::istringstream is(read_text_file(path));
    std::string magic;
    std::getline(is, magic);
    if (magic != kCheckpointMagic)
        throw ParseError("checkpoint '" + path + "': bad header '" + magic + "'");

    Checkpoint ck;
    auto expect_key = [&](const std::string& key) {
        std::string k;
        if (!(is >> k) || k != key)
            throw ParseError("checkpoint '" + path + "': expected key '" + key + "', got '" + k +
                             "'");
    };
    std::string branch;
    expect_key("branch");
    is >> branch;
    ck.config.branch = branch_from_string(branch);
    expect_key("cells");
    is >> ck.config.cells;
    expect_key("dimension_shuffle");
    int shuffle = 0;
    is >> shuffle;
    ck.config.dimension_shuffle = shuffle != 0;
    expect_key("dropout_p");
    is >> ck.config.dropout_p;
    expect_key("filters");
    for (auto& v : ck.config.fcn.filters) is >> v;
    expect_key("kernels");
    for (auto& v : ck.config.fcn.kernels) is >> v;
    expect_key("num_classes");
    is >> ck.config.num_classes;
    expect_key("input_length");
    is >> ck.config.input_length;
    for (int i = 0; i < 3; ++i) {
        expect_key("bn" + std::to_string(i + 1));
        std::size_t n = 0;
        is >> n;
        auto& st = ck.params.bn[static_cast<std::size_t>(i)];
        st.running_mean.resize(n);
        st.running_var.resize(n);
        for (auto& v : st.running_mean) is >> v;
        for (auto& v : st.running_var) is >> v;
    }
    expect_key("params");
    std::size_t count = 0;
    is >> count;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        int rank = 0;
        if (!(is >> name >> rank))
            throw ParseError("checkpoint '" + path + "': truncated parameter table");
        Shape shape(static_cast<std::size_t>(rank));
        for (auto& d : shape) is >> d;
        std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : vals)
            if (!(is >> v))
                throw ParseError("checkpoint '" + path + "': truncated values for '" + name + "'");
        ck.params.entries.push_back({name, Tensor::from(shape, std::move(vals), true)});
    }
    std::string tail;
    is >> tail;
    if (tail != "end") throw ParseError("checkpoint '" + path + "': missing end marker");
    validate_params(ck.config, ck.params);
    return ck;
}

}  // namespace tsab
