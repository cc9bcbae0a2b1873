#include "tsab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace tsab {

namespace {

constexpr double kDegenerateStd = 1e-12;

bool parse_number(const std::string& token, double& out) {
    const char* begin = token.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end != begin && *end == '\0';
}

std::vector<std::string> split_row(const std::string& line) {
    const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> tokens;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) tokens.push_back(cur);
    return tokens;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \r\n");
    return s.substr(b, e - b + 1);
}

std::vector<LabeledSeries> remap_labels(
    const std::vector<std::pair<double, std::vector<double>>>& raw) {
    std::set<double> distinct;
    for (const auto& [label, values] : raw) distinct.insert(label);
    std::map<double, int> ids;
    int next = 0;
    for (double v : distinct) ids[v] = next++;
    std::vector<LabeledSeries> out;
    out.reserve(raw.size());
    for (const auto& [label, values] : raw) {
        LabeledSeries s;
        s.label = ids[label];
        s.values = values;
        s.original_length = static_cast<std::int64_t>(values.size());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::string to_string(NormScheme s) {
    return s == NormScheme::PerSample ? "sample" : "dataset";
}

NormScheme norm_scheme_from_string(const std::string& s) {
    if (s == "sample" || s == "per-sample" || s == "per_sample") return NormScheme::PerSample;
    if (s == "dataset") return NormScheme::Dataset;
    throw ParameterError("unknown normalization scheme '" + s + "' (expected sample|dataset)");
}

std::vector<std::pair<double, std::vector<double>>> parse_ucr(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    std::vector<std::pair<double, std::vector<double>>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto tokens = split_row(line);
        double label = 0.0;
        const std::string label_tok = trim(tokens.front());
        if (!parse_number(label_tok, label))
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": column 1: non-numeric label '" + label_tok + "'");
        std::vector<double> values;
        values.reserve(tokens.size() - 1);
        for (std::size_t c = 1; c < tokens.size(); ++c) {
            const std::string tok = trim(tokens[c]);
            if (tok.empty()) continue;  // missing field, treated as absent
            double v = 0.0;
            if (!parse_number(tok, v))
                throw ParseError(path + ":" + std::to_string(lineno) + ": column " +
                                 std::to_string(c + 1) + ": non-numeric value '" + tok + "'");
            values.push_back(v);
        }
        if (values.empty())
            throw ParseError(path + ":" + std::to_string(lineno) + ": row has no values");
        rows.emplace_back(label, std::move(values));
    }
    if (rows.empty()) throw DataError("empty dataset file '" + path + "'");
    return rows;
}

std::vector<LabeledSeries> load_ucr(const std::string& path) {
    return remap_labels(parse_ucr(path));
}

void save_ucr(const std::string& path, const std::vector<LabeledSeries>& samples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file '" + path + "'");
    char buf[40];
    for (const auto& s : samples) {
        out << s.label;
        for (std::int64_t i = 0; i < s.original_length; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", s.values[static_cast<std::size_t>(i)]);
            out << '\t' << buf;
        }
        out << '\n';
    }
}

LabeledSeries znorm_per_sample(const LabeledSeries& s) {
    LabeledSeries out = s;
    const auto n = static_cast<std::size_t>(s.original_length);
    if (n == 0) return out;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += s.values[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = s.values[i] - mean;
        var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd <= kDegenerateStd) {
        for (std::size_t i = 0; i < n; ++i) out.values[i] = 0.0;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) out.values[i] = (s.values[i] - mean) / sd;
    return out;
}

PooledStats znorm_dataset(std::vector<LabeledSeries>& train, std::vector<LabeledSeries>& test) {
    if (train.empty()) throw DataError("znorm_dataset: empty train split");
    double sum = 0.0;
    std::int64_t count = 0;
    for (const auto& s : train) {
        for (std::int64_t i = 0; i < s.original_length; ++i)
            sum += s.values[static_cast<std::size_t>(i)];
        count += s.original_length;
    }
    const double mean = sum / static_cast<double>(count);
    double ssq = 0.0;
    for (const auto& s : train)
        for (std::int64_t i = 0; i < s.original_length; ++i) {
            const double d = s.values[static_cast<std::size_t>(i)] - mean;
            ssq += d * d;
        }
    const double sd = std::sqrt(ssq / static_cast<double>(count));
    if (sd <= kDegenerateStd)
        throw DataError("znorm_dataset: degenerate statistics, train values are constant");
    auto apply = [&](std::vector<LabeledSeries>& split) {
        for (auto& s : split)
            for (std::int64_t i = 0; i < s.original_length; ++i) {
                auto& v = s.values[static_cast<std::size_t>(i)];
                v = (v - mean) / sd;
            }
    };
    apply(train);
    apply(test);
    return {mean, sd};
}

void pad_zeros(std::vector<LabeledSeries>& samples, std::int64_t L) {
    for (const auto& s : samples)
        if (s.original_length > L)
            throw ContractError("pad_zeros: target length " + std::to_string(L) +
                                " is shorter than a sample of length " +
                                std::to_string(s.original_length));
    for (auto& s : samples) s.values.resize(static_cast<std::size_t>(L), 0.0);
}

std::map<int, double> class_weights(const std::vector<int>& labels) {
    if (labels.empty()) throw ParameterError("class_weights: empty label list");
    std::map<int, std::int64_t> counts;
    for (int l : labels) ++counts[l];
    const double n = static_cast<double>(labels.size());
    const double c = static_cast<double>(counts.size());
    std::map<int, double> weights;
    for (const auto& [label, count] : counts)
        weights[label] = n / (c * static_cast<double>(count));
    return weights;
}

namespace {

void normalize_and_pad(Dataset& ds) {
    if (ds.normalization == NormScheme::PerSample) {
        for (auto& s : ds.train) s = znorm_per_sample(s);
        for (auto& s : ds.test) s = znorm_per_sample(s);
    } else {
        const auto stats = znorm_dataset(ds.train, ds.test);
        ds.train_mean = stats.mean;
        ds.train_std = stats.stddev;
    }
    // Normalization first, so the appended zeros are true zeros.
    pad_zeros(ds.train, ds.max_length);
    pad_zeros(ds.test, ds.max_length);
    ds.normalized = true;
}

}  // namespace

Dataset make_dataset(const std::string& train_path, const std::string& test_path,
                     NormScheme scheme, const std::string& name) {
    auto raw_train = parse_ucr(train_path);
    auto raw_test = parse_ucr(test_path);
    // Joint remap keeps ids consistent even when a split misses a class.
    auto combined = raw_train;
    combined.insert(combined.end(), raw_test.begin(), raw_test.end());
    auto all = remap_labels(combined);

    Dataset ds;
    ds.name = name.empty() ? train_path : name;
    ds.normalization = scheme;
    ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(raw_train.size()));
    ds.test.assign(all.begin() + static_cast<std::ptrdiff_t>(raw_train.size()), all.end());
    std::set<int> classes;
    for (const auto& s : all) {
        classes.insert(s.label);
        ds.max_length = std::max(ds.max_length, s.original_length);
    }
    ds.num_classes = static_cast<int>(classes.size());
    normalize_and_pad(ds);
    return ds;
}

Dataset synthetic_sine_square(std::int64_t n_train, std::int64_t n_test, std::int64_t length,
                              double noise_sigma, std::uint64_t seed, NormScheme scheme) {
    if (n_train < 1 || n_test < 1 || length < 2)
        throw ParameterError("synthetic_sine_square: need n_train, n_test >= 1 and length >= 2");
    Rng rng(seed);
    auto make_split = [&](std::int64_t n) {
        std::vector<LabeledSeries> split;
        split.reserve(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            LabeledSeries s;
            s.label = static_cast<int>(i % 2);
            s.original_length = length;
            s.values.resize(static_cast<std::size_t>(length));
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::int64_t t = 0; t < length; ++t) {
                const double arg =
                    2.0 * std::numbers::pi * 2.0 * static_cast<double>(t) /
                        static_cast<double>(length) + phase;
                const double base = s.label == 0 ? std::sin(arg) : (std::sin(arg) >= 0.0 ? 1.0 : -1.0);
                s.values[static_cast<std::size_t>(t)] = base + noise_sigma * rng.normal();
            }
            split.push_back(std::move(s));
        }
        return split;
    };

    Dataset ds;
    ds.name = "sine-square";
    ds.normalization = scheme;
    ds.train = make_split(n_train);
    ds.test = make_split(n_test);
    ds.num_classes = 2;
    ds.max_length = length;
    normalize_and_pad(ds);
    return ds;
}

std::vector<int> labels_of(const std::vector<LabeledSeries>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

}  // namespace tsab
