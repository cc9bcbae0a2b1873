#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsab/data.hpp"
#include "tsab/model.hpp"
#include "tsab/stats.hpp"
#include "tsab/training.hpp"

namespace tsab {

extern const char* kToolVersion;

struct ExperimentSpec {
    std::string name = "experiment";
    std::string label;  // report column; defaults to "<branch>-fcn/<norm>"

    // Data source: a UCR train/test file pair or the built-in generator.
    std::string train_path;
    std::string test_path;
    bool synthetic = false;
    std::int64_t synth_train = 100;
    std::int64_t synth_test = 100;
    std::int64_t synth_length = 64;
    double synth_sigma = 0.1;
    std::uint64_t synth_seed = 7;

    NormScheme norm = NormScheme::PerSample;
    ModelConfig model;                      // input_length/num_classes resolved on load
    std::vector<std::int64_t> cells_grid;   // empty: single arm at model.cells
    int epochs = 2000;
    int batch = 128;
    bool seed_set = false;
    std::uint64_t seed = 0;  // no wall-clock fallback, ever
    int repeats = 1;
    std::string out_dir = "out";
    int workers = 1;

    void validate() const;
    std::string column_label() const;
};

struct ArmReport {
    std::int64_t cells = 0;
    int repeat = 0;
    std::uint64_t seed = 0;
    double best_test_accuracy = 0.0;
    int best_epoch = 0;
    std::vector<double> train_loss;
    std::vector<double> lr_trace;
    double wall_seconds = 0.0;
};

struct ExperimentRecord {
    std::string tool_version;
    ExperimentSpec spec;
    std::string dataset_name;
    int num_classes = 0;
    std::int64_t max_length = 0;
    std::map<std::string, std::string> input_checksums;
    std::vector<ArmReport> reports;
    std::int64_t selected_cells = 0;
    double accuracy = 0.0;
    std::map<int, double> per_class_error;
    std::string checkpoint_path;
    std::string record_path;
};

// Loads, normalizes and pads the spec's dataset.
Dataset load_spec_dataset(const ExperimentSpec& spec);

// load -> normalize -> pad -> train (grid when requested) -> evaluate ->
// persist record + best checkpoint atomically under spec.out_dir.
ExperimentRecord run_experiment(const ExperimentSpec& spec);

ExperimentRecord load_record(const std::string& path);

enum class SuiteKind { NormCompare, BlockProbe, DimShuffle, Substitute };
SuiteKind suite_kind_from_string(const std::string& s);

struct SuiteResult {
    std::vector<std::string> files;     // everything the suite wrote
    std::vector<std::string> failures;  // per-arm error messages, suite kept going
};

SuiteResult ablation_suite(SuiteKind kind, const std::vector<ExperimentSpec>& specs,
                           const std::string& out_dir, int workers = 1);

// Fig-style export: the raw input of one sample plus its post-batch-norm
// activation under one selected filter per chosen conv block, long format
// (series,t,value).
void export_activations(const std::string& checkpoint_path, const Dataset& data,
                        bool use_test_split, std::int64_t sample_index,
                        const std::vector<int>& blocks, std::vector<std::int64_t> filter_indices,
                        std::uint64_t seed, const std::string& out_csv);

// Per-dataset accuracy table over shared dataset keys with MPCE and
// best-count footers plus win/tie/loss against the baseline column.
void compare_records(const std::vector<ExperimentRecord>& records, const std::string& baseline,
                     const std::string& out_csv);

ExperimentSpec parse_config_file(const std::string& path);

}  // namespace tsab
