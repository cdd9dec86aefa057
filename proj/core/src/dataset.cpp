#include "rangead/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rangead/error.hpp"

namespace rangead {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

}  // namespace

std::size_t Dataset::count_anomalies() const {
    return static_cast<std::size_t>(std::ranges::count(anomaly_flags, AnomalyFlag::anomaly));
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features = features.select_rows(indices);
    out.class_labels.reserve(indices.size());
    out.anomaly_flags.reserve(indices.size());
    for (const std::size_t i : indices) {
        out.class_labels.push_back(class_labels[i]);
        out.anomaly_flags.push_back(anomaly_flags[i]);
    }
    out.feature_names = feature_names;
    out.class_names = class_names;
    return out;
}

void Dataset::validate() const {
    if (features.cols() == 0) {
        throw DataError("dataset has no feature columns");
    }
    if (class_labels.size() != size() || anomaly_flags.size() != size()) {
        throw DataError("dataset label vectors do not match the number of rows");
    }
    if (!feature_names.empty() && feature_names.size() != dims()) {
        throw DataError("dataset feature names do not match the number of columns");
    }
    for (std::size_t r = 0; r < size(); ++r) {
        for (std::size_t c = 0; c < dims(); ++c) {
            if (!std::isfinite(features(r, c))) {
                throw DataError("non-finite value at row " + std::to_string(r) + ", column " + std::to_string(c));
            }
        }
        if (anomaly_flags[r] == AnomalyFlag::normal) {
            if (class_labels[r] < 0 || static_cast<std::size_t>(class_labels[r]) >= num_classes()) {
                throw DataError("row " + std::to_string(r) + " has class label " + std::to_string(class_labels[r]) +
                                " outside [0, " + std::to_string(num_classes()) + ")");
            }
        } else if (anomaly_flags[r] != AnomalyFlag::anomaly) {
            throw DataError("row " + std::to_string(r) + " has an invalid anomaly flag");
        }
    }
}

Dataset parse_csv(const std::string& text, const CsvOptions& options) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            for (const auto f : split_fields(line)) header.emplace_back(f);
            break;
        }
    }
    if (header.empty()) {
        throw DataError("csv input has no header row");
    }
    const auto label_it = std::ranges::find(header, options.label_column);
    if (label_it == header.end()) {
        throw DataError("label column '" + options.label_column + "' not found in csv header");
    }
    const auto label_col = static_cast<std::size_t>(label_it - header.begin());

    Dataset data;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != label_col) data.feature_names.push_back(header[c]);
    }
    if (data.feature_names.empty()) {
        throw DataError("csv input has no feature columns");
    }

    std::vector<std::string> raw_labels;
    std::vector<double> values(data.feature_names.size());
    std::vector<double> storage;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        }
        std::size_t v = 0;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            if (c == label_col) continue;
            const auto field = fields[c];
            double x = 0.0;
            const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
            if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(x)) {
                throw DataError("line " + std::to_string(line_no) + ", column '" + header[c] +
                                "': not a finite number: '" + std::string(field) + "'");
            }
            values[v++] = x;
        }
        storage.insert(storage.end(), values.begin(), values.end());
        raw_labels.emplace_back(fields[label_col]);
    }

    std::map<std::string, int> class_index;
    for (const auto& label : raw_labels) {
        if (label != options.anomaly_label) class_index.emplace(label, 0);
    }
    int next = 0;
    for (auto& [name, idx] : class_index) {
        idx = next++;
        data.class_names.push_back(name);
    }

    const std::size_t n = raw_labels.size();
    data.features = Matrix(n, data.feature_names.size(), std::move(storage));
    data.class_labels.reserve(n);
    data.anomaly_flags.reserve(n);
    for (const auto& label : raw_labels) {
        if (label == options.anomaly_label) {
            data.class_labels.push_back(kNoClass);
            data.anomaly_flags.push_back(AnomalyFlag::anomaly);
        } else {
            data.class_labels.push_back(class_index.at(label));
            data.anomaly_flags.push_back(AnomalyFlag::normal);
        }
    }
    return data;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open csv file '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_csv(buf.str(), options);
    } catch (const Error& err) {
        rethrow_with_prefix(err, path.string() + ": ");
    }
}

std::string format_csv(const Dataset& data, const CsvOptions& options) {
    std::string out;
    for (std::size_t c = 0; c < data.dims(); ++c) {
        out += data.feature_names.empty() ? "f" + std::to_string(c) : data.feature_names[c];
        out += ',';
    }
    out += options.label_column;
    out += '\n';
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (const double v : data.features.row(r)) {
            out += format_double(v);
            out += ',';
        }
        if (data.anomaly_flags[r] == AnomalyFlag::anomaly) {
            out += options.anomaly_label;
        } else {
            out += data.class_names.at(static_cast<std::size_t>(data.class_labels[r]));
        }
        out += '\n';
    }
    return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path, const CsvOptions& options) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write csv file '" + path.string() + "'");
    }
    out << format_csv(data, options);
}

NormalizationStats normalize(const Dataset& train) {
    if (train.size() == 0) {
        throw DataError("cannot compute normalization statistics of an empty dataset");
    }
    const std::size_t n = train.size();
    const std::size_t d = train.dims();
    NormalizationStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) stats.mean[c] += train.features(r, c);
    }
    for (double& m : stats.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double dev = train.features(r, c) - stats.mean[c];
            stats.stddev[c] += dev * dev;
        }
    }
    for (double& s : stats.stddev) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s == 0.0) s = 1.0;
    }
    return stats;
}

Dataset apply_normalization(const NormalizationStats& stats, const Dataset& data) {
    if (stats.mean.size() != data.dims() || stats.stddev.size() != data.dims()) {
        throw ShapeError("normalization statistics cover " + std::to_string(stats.mean.size()) +
                         " features, dataset has " + std::to_string(data.dims()));
    }
    Dataset out = data;
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto row = out.features.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
    }
    return out;
}

Split split_protocol(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw ConfigError("test fraction must lie in [0, 1)");
    }
    std::vector<std::size_t> normals;
    std::vector<std::size_t> anomalies;
    for (std::size_t r = 0; r < data.size(); ++r) {
        (data.anomaly_flags[r] == AnomalyFlag::anomaly ? anomalies : normals).push_back(r);
    }
    if (anomalies.empty()) {
        throw DataError("dataset contains no anomalies; evaluation needs at least one");
    }
    std::vector<bool> seen(data.num_classes(), false);
    for (const std::size_t r : normals) seen[static_cast<std::size_t>(data.class_labels[r])] = true;
    if (std::ranges::count(seen, true) < 2) {
        throw DataError("dataset needs at least two normal classes");
    }

    std::vector<std::size_t> order = normals;
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng() % i]);
    }
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(normals.size())));
    if (n_test >= normals.size()) {
        throw ConfigError("test fraction leaves no normal rows for training");
    }
    std::vector<std::size_t> test_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::ranges::sort(test_idx);
    std::ranges::sort(train_idx);
    test_idx.insert(test_idx.end(), anomalies.begin(), anomalies.end());

    Split split;
    split.train = data.select(train_idx);
    split.prep = split.train;
    split.test = data.select(test_idx);
    return split;
}

Dataset synth_blobs(const SynthParams& p) {
    if (p.n_per_class == 0 || p.num_classes == 0 || p.anomaly_n == 0) {
        throw ConfigError("synthetic data counts must be at least 1");
    }
    if (p.dims < 2) {
        throw ConfigError("synthetic data needs at least 2 dimensions");
    }
    constexpr double kCenterNorm = 3.0;
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto random_unit = [&](const std::vector<double>* orthogonal_to) {
        std::vector<double> v(p.dims);
        double norm = 0.0;
        while (norm < 1e-6) {
            for (double& x : v) x = gauss(rng);
            if (orthogonal_to != nullptr) {
                const double proj = std::inner_product(v.begin(), v.end(), orthogonal_to->begin(), 0.0);
                for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * (*orthogonal_to)[i];
            }
            norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        }
        for (double& x : v) x /= norm;
        return v;
    };

    const std::vector<double> held_out = random_unit(nullptr);
    std::vector<std::vector<double>> centers;
    for (std::size_t k = 0; k < p.num_classes; ++k) {
        auto c = random_unit(&held_out);
        for (double& x : c) x *= kCenterNorm;
        centers.push_back(std::move(c));
    }

    Dataset data;
    const std::size_t n = p.n_per_class * p.num_classes + p.anomaly_n;
    data.features = Matrix(n, p.dims);
    data.class_labels.reserve(n);
    data.anomaly_flags.reserve(n);
    for (std::size_t c = 0; c < p.dims; ++c) data.feature_names.push_back("f" + std::to_string(c));
    for (std::size_t k = 0; k < p.num_classes; ++k) data.class_names.push_back("c" + std::to_string(k));

    std::size_t r = 0;
    for (std::size_t k = 0; k < p.num_classes; ++k) {
        for (std::size_t i = 0; i < p.n_per_class; ++i, ++r) {
            for (std::size_t c = 0; c < p.dims; ++c) data.features(r, c) = centers[k][c] + gauss(rng);
            data.class_labels.push_back(static_cast<int>(k));
            data.anomaly_flags.push_back(AnomalyFlag::normal);
        }
    }
    for (std::size_t i = 0; i < p.anomaly_n; ++i, ++r) {
        const std::size_t k = rng() % p.num_classes;
        for (std::size_t c = 0; c < p.dims; ++c) {
            data.features(r, c) = centers[k][c] + gauss(rng) + p.anomaly_shift * held_out[c];
        }
        data.class_labels.push_back(kNoClass);
        data.anomaly_flags.push_back(AnomalyFlag::anomaly);
    }
    return data;
}

}  // namespace rangead
