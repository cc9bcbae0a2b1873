#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsab/errors.hpp"
#include "tsab/rng.hpp"

namespace tsab {

struct LabeledSeries {
    int label = 0;
    std::vector<double> values;
    std::int64_t original_length = 0;
};

enum class NormScheme { PerSample, Dataset };

std::string to_string(NormScheme s);
NormScheme norm_scheme_from_string(const std::string& s);

struct Dataset {
    std::string name;
    std::vector<LabeledSeries> train;
    std::vector<LabeledSeries> test;
    int num_classes = 0;
    std::int64_t max_length = 0;
    NormScheme normalization = NormScheme::PerSample;
    bool normalized = false;
    // Captured train statistics, valid for the Dataset scheme only.
    double train_mean = 0.0;
    double train_std = 1.0;
};

// One row per sample: class label, then the values, separated by tabs or
// commas. Rows may differ in length; trailing missing fields are absent
// values. Labels are remapped to contiguous 0-based ids in sorted order of
// the distinct raw labels.
std::vector<LabeledSeries> load_ucr(const std::string& path);

// Raw parse without label remapping (used to remap train and test jointly).
std::vector<std::pair<double, std::vector<double>>> parse_ucr(const std::string& path);

// Tab-delimited writer; load_ucr(save_ucr(x)) is the identity on labels and
// values.
void save_ucr(const std::string& path, const std::vector<LabeledSeries>& samples);

// (x - mean) / std over the sample's own un-padded values, population std.
// Constant series map to all zeros.
LabeledSeries znorm_per_sample(const LabeledSeries& s);

struct PooledStats {
    double mean = 0.0;
    double stddev = 1.0;
};

// Scalar mean/std pooled over all un-padded train values, applied to both
// splits. Throws DataError when the pooled train values are constant.
PooledStats znorm_dataset(std::vector<LabeledSeries>& train,
                          std::vector<LabeledSeries>& test);

// Appends zeros so every sample reaches length L; original_length is kept.
void pad_zeros(std::vector<LabeledSeries>& samples, std::int64_t L);

// w_c = N / (C * n_c)
std::map<int, double> class_weights(const std::vector<int>& labels);

// Parses both splits, remaps labels jointly, normalizes per the scheme and
// pads with trailing zeros to the longest series across both splits.
Dataset make_dataset(const std::string& train_path, const std::string& test_path,
                     NormScheme scheme, const std::string& name = "");

// Two-class toy set: noisy sine waves against noisy square waves of the same
// fundamental, random phase per sample. Already normalized and padded.
Dataset synthetic_sine_square(std::int64_t n_train, std::int64_t n_test, std::int64_t length,
                              double noise_sigma, std::uint64_t seed,
                              NormScheme scheme = NormScheme::PerSample);

std::vector<int> labels_of(const std::vector<LabeledSeries>& samples);

}  // namespace tsab
