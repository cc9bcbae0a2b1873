#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsab/data.hpp"
#include "tsab/tensor.hpp"

namespace tsab {

enum class BranchKind { LSTM, ALSTM, GRU, RNN, DENSE };

std::string to_string(BranchKind k);
BranchKind branch_from_string(const std::string& s);

struct FcnConfig {
    std::array<std::int64_t, 3> filters{128, 256, 128};
    std::array<std::int64_t, 3> kernels{8, 5, 3};
};

struct ModelConfig {
    BranchKind branch = BranchKind::LSTM;
    std::int64_t cells = 8;
    bool dimension_shuffle = true;
    double dropout_p = 0.8;
    FcnConfig fcn;
    std::int64_t num_classes = 2;
    std::int64_t input_length = 1;

    void validate() const;
    // Feature width seen by one recurrent step.
    std::int64_t branch_input_width() const { return dimension_shuffle ? input_length : 1; }
    std::int64_t feature_width() const { return fcn.filters[2] + cells; }
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Trainable parameters plus the batch-norm running statistics, in a fixed
// canonical order so optimizer state can be paired by index.
struct ModelParams {
    std::vector<NamedTensor> entries;
    std::array<BnState, 3> bn;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    ModelParams clone() const;
    void zero_grads();
};

std::vector<std::pair<std::string, Shape>> expected_param_shapes(const ModelConfig& cfg);

// He-normal convolution kernels, uniform fan-in scaling everywhere else.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

void validate_params(const ModelConfig& cfg, const ModelParams& params);

// ---- branch steps ----------------------------------------------------------

struct BranchState {
    Tensor h;  // [B x cells]
    Tensor m;  // [B x cells], memory (LSTM only)
};

struct LstmParams {
    Tensor w_update, w_forget, w_output, w_cell;      // recurrent, [cells x cells]
    Tensor in_update, in_forget, in_output, in_cell;  // projection, [cells x F]
};

// g^u = s(W^u h + I^u x), g^f, g^o likewise, g^c = tanh(W^c h + I^c x),
// m' = g^f . m + g^u . g^c, h' = tanh(g^o . m')
BranchState lstm_step(const Tensor& x_t, const BranchState& state, const LstmParams& p);

struct GruParams {
    Tensor w_update, w_reset, w_cand;
    Tensor in_update, in_reset, in_cand;
};

// z = s(.), r = s(.), cand = tanh(W (r . h) + I x), h' = (1-z) . h + z . cand
Tensor gru_step(const Tensor& x_t, const Tensor& h, const GruParams& p);

struct RnnParams {
    Tensor w_recurrent;  // [cells x cells]
    Tensor w_input;      // [cells x F]
};

// h' = tanh(W h + I x)
Tensor rnn_step(const Tensor& x_t, const Tensor& h, const RnnParams& p);

// sigmoid(W x + b)
Tensor dense_branch(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- attention -------------------------------------------------------------

struct AttentionParams {
    Tensor state_proj;  // [H x cells]
    Tensor annot_proj;  // [H x F]
    Tensor hidden_bias; // [H]
    Tensor score;       // [H]
};

struct AttentionOut {
    Tensor context;  // [B x F]
    Tensor weights;  // [B x S], rows sum to 1
};

// Softmax the alignment scores over annotations and mix: c = sum_j a_j h_j.
AttentionOut attention_mix(const Tensor& scores, const std::vector<Tensor>& annotations);

// One-hidden-layer tanh alignment network conditioned on the previous
// hidden state, then the softmax-weighted sum of the annotations.
AttentionOut attention_context_batch(const std::vector<Tensor>& annotations,
                                     const Tensor& prev_state, const AttentionParams& p);

// Single-sample form: annotations [S x F], prev_state [cells] -> context [F].
Tensor attention_context(const Tensor& annotations, const Tensor& prev_state,
                         const AttentionParams& p);

// ---- assembled model -------------------------------------------------------

// conv -> batch-norm -> ReLU, three times, then global average pooling.
Tensor fcn_forward(const Tensor& x, const ModelConfig& cfg, ModelParams& params, Mode mode);

struct ForwardResult {
    Tensor probs;             // [B x num_classes], rows sum to 1
    Tensor branch_features;   // [B x cells], pre-dropout
    Tensor fcn_features;      // [B x filters[2]]
    Tensor concat_features;   // [B x cells + filters[2]], the classifier input
    std::int64_t branch_steps = 0;
};

ForwardResult model_forward(const Tensor& x, const ModelConfig& cfg, ModelParams& params,
                            Mode mode, Rng& rng);

struct LossResult {
    Tensor loss;   // scalar
    Tensor probs;  // [B x num_classes]
    std::int64_t branch_steps = 0;
};

// Class-weighted cross-entropy over a batch.
LossResult model_loss(const Tensor& x, const std::vector<int>& labels,
                      const std::vector<double>& sample_weights, const ModelConfig& cfg,
                      ModelParams& params, Mode mode, Rng& rng);

enum class FeaturePath { Branch, Fcn, Concat };
FeaturePath feature_path_from_string(const std::string& s);

// Pre-classifier activations with dropout disabled.
Tensor extract_features(const Tensor& x, const ModelConfig& cfg, ModelParams& params,
                        FeaturePath which);

// [B x 1 x T] batch tensor from padded series.
Tensor batch_from_series(const std::vector<LabeledSeries>& samples,
                         const std::vector<std::int64_t>& indices);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

// Versioned textual key -> shape -> values map; written atomically.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tsab
