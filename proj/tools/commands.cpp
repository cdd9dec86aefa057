#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rangead::cli {

namespace {

using nlohmann::ordered_json;

template <class F>
auto in_phase(const char* phase, F&& fn) {
    try {
        return fn();
    } catch (const Error& err) {
        rethrow_with_prefix(err, std::string(phase) + ": ");
    }
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    out << text;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string threshold_mode_name(ThresholdMode mode) {
    switch (mode) {
        case ThresholdMode::none:
            return "none";
        case ThresholdMode::neuron_fraction:
            return "neuron_fraction";
        case ThresholdMode::contamination:
            return "contamination";
    }
    return "none";
}

ThresholdMode threshold_mode_from(const std::string& name) {
    if (name == "none") return ThresholdMode::none;
    if (name == "neuron_fraction") return ThresholdMode::neuron_fraction;
    if (name == "contamination") return ThresholdMode::contamination;
    throw ConfigError("unknown threshold mode '" + name + "'");
}

std::vector<std::size_t> monitored(const RunConfig& config, const MlpModel& model) {
    return config.monitored_layers.empty() ? all_hidden_layers(model) : config.monitored_layers;
}

MlpModel train_model(const RunConfig& config, const PreparedData& data, const EpochCallback& on_epoch = {}) {
    const auto& train_set = data.split.train;
    auto specs = mlp_specs(train_set.dims(), config.hidden_sizes, train_set.num_classes());
    const MlpModel initial = in_phase("init", [&] { return init_model(std::move(specs), config.seed); });
    return in_phase("train", [&] { return train(initial, train_set, config.train_config(), on_epoch); });
}

std::optional<double> pick_threshold(const RunConfig& config, const ActivationRanges& ranges,
                                     std::span<const double> scores) {
    switch (config.threshold_mode) {
        case ThresholdMode::none:
            return std::nullopt;
        case ThresholdMode::neuron_fraction:
            return threshold_by_neuron_fraction(ranges, config.threshold_value);
        case ThresholdMode::contamination:
            return threshold_by_contamination(scores, config.threshold_value);
    }
    return std::nullopt;
}

double sample_std(std::span<const double> xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (const double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

std::string config_to_json(const RunConfig& c) {
    ordered_json doc;
    ordered_json data;
    if (c.csv_path.empty()) {
        data["source"] = "synth";
        data["n_per_class"] = c.synth.n_per_class;
        data["num_classes"] = c.synth.num_classes;
        data["dims"] = c.synth.dims;
        data["anomaly_n"] = c.synth.anomaly_n;
        data["anomaly_shift"] = c.synth.anomaly_shift;
    } else {
        data["source"] = "csv";
        data["csv_path"] = c.csv_path;
        data["label_column"] = c.csv.label_column;
        data["anomaly_label"] = c.csv.anomaly_label;
    }
    doc["data"] = data;
    doc["test_fraction"] = c.test_fraction;
    doc["hidden_sizes"] = c.hidden_sizes;
    doc["epochs"] = c.epochs;
    doc["learning_rate"] = c.learning_rate;
    doc["batch_size"] = c.batch_size;
    doc["border"] = {{"name", method_name(c.border)}, {"parameter", method_parameter(c.border)}};
    doc["monitored_layers"] = c.monitored_layers;
    doc["threshold"] = {{"mode", threshold_mode_name(c.threshold_mode)}, {"value", c.threshold_value}};
    doc["seed"] = c.seed;
    doc["threads"] = c.threads;
    doc["knn_k"] = c.knn_k;
    return doc.dump(2);
}

RunConfig config_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        RunConfig c;
        const auto& data = doc.at("data");
        if (data.at("source").get<std::string>() == "csv") {
            c.csv_path = data.at("csv_path").get<std::string>();
            c.csv.label_column = data.at("label_column").get<std::string>();
            c.csv.anomaly_label = data.at("anomaly_label").get<std::string>();
        } else {
            c.synth.n_per_class = data.at("n_per_class").get<std::size_t>();
            c.synth.num_classes = data.at("num_classes").get<std::size_t>();
            c.synth.dims = data.at("dims").get<std::size_t>();
            c.synth.anomaly_n = data.at("anomaly_n").get<std::size_t>();
            c.synth.anomaly_shift = data.at("anomaly_shift").get<double>();
        }
        c.test_fraction = doc.at("test_fraction").get<double>();
        c.hidden_sizes = doc.at("hidden_sizes").get<std::vector<std::size_t>>();
        c.epochs = doc.at("epochs").get<std::size_t>();
        c.learning_rate = doc.at("learning_rate").get<double>();
        c.batch_size = doc.at("batch_size").get<std::size_t>();
        c.border = make_border_method(doc.at("border").at("name").get<std::string>(),
                                      doc.at("border").at("parameter").get<double>());
        c.monitored_layers = doc.at("monitored_layers").get<std::vector<std::size_t>>();
        c.threshold_mode = threshold_mode_from(doc.at("threshold").at("mode").get<std::string>());
        c.threshold_value = doc.at("threshold").at("value").get<double>();
        c.seed = doc.at("seed").get<std::uint64_t>();
        c.threads = doc.at("threads").get<std::size_t>();
        c.knn_k = doc.at("knn_k").get<std::size_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config document: ") + e.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(read_file(path));
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

PreparedData prepare_data(const RunConfig& config) {
    return in_phase("data", [&] {
        if (config.hidden_sizes.empty()) {
            throw ConfigError("at least one hidden layer is required");
        }
        Dataset raw;
        if (config.csv_path.empty()) {
            SynthParams params = config.synth;
            params.seed = config.seed;
            raw = synth_blobs(params);
        } else {
            raw = load_csv(config.csv_path, config.csv);
        }
        raw.validate();
        Split split = split_protocol(raw, config.test_fraction, config.seed);
        PreparedData out;
        out.stats = normalize(split.train);
        out.split.train = apply_normalization(out.stats, split.train);
        out.split.prep = apply_normalization(out.stats, split.prep);
        out.split.test = apply_normalization(out.stats, split.test);
        return out;
    });
}

Evaluation evaluate_model(const RunConfig& config, const PreparedData& data, const MlpModel& model,
                          const BorderMethod& border) {
    const auto layers = monitored(config, model);
    const ActivationRanges ranges =
        in_phase("prepare", [&] { return extract_ranges(model, data.split.prep, layers, border); });
    const ScoreReport scores =
        in_phase("inference", [&] { return score_batch(model, ranges, data.split.test.features, config.threads); });
    const auto real = scores.real_scores();
    Evaluation ev;
    ev.auc_roc = in_phase("evaluate", [&] { return auc_roc(real, data.split.test.anomaly_flags); });
    ev.threshold = in_phase("evaluate", [&] { return pick_threshold(config, ranges, real); });
    if (ev.threshold) ev.fpr = fpr_at_threshold(real, data.split.test.anomaly_flags, *ev.threshold);
    return ev;
}

RunResult run_pipeline(const RunConfig& config, const PreparedData& data) {
    const MlpModel model = train_model(config, data);
    const auto layers = monitored(config, model);
    const auto& test = data.split.test;

    std::optional<ActivationRanges> ranges;
    ScoreReport scores;
    const PhaseTimes times = time_phases(
        [&] { ranges = in_phase("prepare", [&] { return extract_ranges(model, data.split.prep, layers, config.border); }); },
        [&] { scores = in_phase("inference", [&] { return score_batch(model, *ranges, test.features, config.threads); }); });

    RunResult result{.report = {}, .model = model, .ranges = *ranges, .scores = std::move(scores)};
    const auto real = result.scores.real_scores();
    EvalReport& report = result.report;
    report.method = "rangead";
    report.auc_roc = in_phase("evaluate", [&] { return auc_roc(real, test.anomaly_flags); });
    report.threshold = in_phase("evaluate", [&] { return pick_threshold(config, result.ranges, real); });
    if (report.threshold) {
        apply_threshold(result.scores, *report.threshold);
        report.fpr = fpr_at_threshold(real, test.anomaly_flags, *report.threshold);
    }
    report.prepare_seconds = times.prepare_seconds;
    report.inference_seconds = times.inference_seconds;
    report.n_test = test.size();
    report.n_anomalies = test.count_anomalies();
    result.test_accuracy = predict_accuracy(model, test);
    return result;
}

RunResult cmd_run(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
    const PreparedData data = prepare_data(config);
    RunResult result = run_pipeline(config, data);
    if (out_dir) {
        in_phase("output", [&] {
            std::filesystem::create_directories(*out_dir);
            write_file(*out_dir / "config.json", config_to_json(config) + "\n");
            save_model(result.model, *out_dir / "model.json");
            save_ranges(result.ranges, *out_dir / "ranges.json");
            write_file(*out_dir / "scores.csv", scores_csv(result.scores, data.split.test.anomaly_flags));
            write_file(*out_dir / "report.json", report_to_json(result.report) + "\n");
            return 0;
        });
    }
    return result;
}

std::vector<SizeRow> cmd_ablate_size(const RunConfig& config, std::span<const std::size_t> sizes,
                                     std::size_t repeats) {
    if (sizes.empty() || repeats == 0) {
        throw ConfigError("size ablation needs at least one size and one repeat");
    }
    const PreparedData data = prepare_data(config);
    std::vector<SizeRow> rows;
    for (const std::size_t size : sizes) {
        std::vector<double> accuracies;
        std::vector<double> aucs;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            RunConfig c = config;
            std::ranges::fill(c.hidden_sizes, size);
            c.seed = config.seed + rep;
            const MlpModel model = train_model(c, data);
            accuracies.push_back(predict_accuracy(model, data.split.test));
            aucs.push_back(evaluate_model(c, data, model, c.border).auc_roc);
        }
        SizeRow row;
        row.hidden_size = size;
        row.accuracy_mean = mean_of(accuracies);
        row.accuracy_std = sample_std(accuracies, row.accuracy_mean);
        row.auc_mean = mean_of(aucs);
        row.auc_std = sample_std(aucs, row.auc_mean);
        row.repeats = repeats;
        rows.push_back(row);
    }
    return rows;
}

std::vector<EpochRow> cmd_ablate_epochs(const RunConfig& config, std::span<const std::size_t> checkpoints) {
    if (checkpoints.empty()) {
        throw ConfigError("epoch ablation needs at least one checkpoint");
    }
    const std::set<std::size_t> wanted(checkpoints.begin(), checkpoints.end());
    const PreparedData data = prepare_data(config);
    std::vector<EpochRow> rows;
    const auto record = [&](std::size_t epoch, const MlpModel& model) {
        if (!wanted.contains(epoch)) return;
        rows.push_back({epoch, evaluate_model(config, data, model, config.border).auc_roc,
                        predict_accuracy(model, data.split.test)});
    };
    RunConfig c = config;
    c.epochs = *wanted.rbegin();
    if (wanted.contains(0)) {
        const auto& train_set = data.split.train;
        record(0, init_model(mlp_specs(train_set.dims(), c.hidden_sizes, train_set.num_classes()), c.seed));
    }
    if (c.epochs > 0) train_model(c, data, record);
    return rows;
}

std::vector<BorderRow> cmd_ablate_borders(const RunConfig& config, std::span<const double> sigmas,
                                          std::span<const double> ts) {
    std::vector<BorderMethod> methods;
    for (const double s : sigmas) methods.emplace_back(Quantile{s});
    for (const double t : ts) methods.emplace_back(QuartileIqr{t});
    for (const double t : ts) methods.emplace_back(MinMaxRange{t});
    if (methods.empty()) {
        throw ConfigError("border ablation needs at least one sigma or t value");
    }
    for (const auto& m : methods) validate(m);

    const PreparedData data = prepare_data(config);
    const MlpModel model = train_model(config, data);
    const auto layers = monitored(config, model);
    const auto& test = data.split.test;
    const auto& prep = data.split.prep;
    std::vector<BorderRow> rows;
    for (const auto& method : methods) {
        const ActivationRanges ranges = in_phase("prepare", [&] { return extract_ranges(model, prep, layers, method); });
        const double threshold = threshold_by_neuron_fraction(ranges, kBorderAblationFraction);
        const auto test_scores = score_batch(model, ranges, test.features, config.threads).real_scores();
        const auto prep_scores = score_batch(model, ranges, prep.features, config.threads).real_scores();
        BorderRow row{method, auc_roc(test_scores, test.anomaly_flags),
                      fpr_at_threshold(test_scores, test.anomaly_flags, threshold),
                      fpr_at_threshold(prep_scores, prep.anomaly_flags, threshold)};
        rows.push_back(row);
    }
    return rows;
}

EvalReport cmd_baseline(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
    const PreparedData data = prepare_data(config);
    const auto& test = data.split.test;
    std::optional<KnnDetector> detector;
    std::vector<double> scores;
    const PhaseTimes times = time_phases(
        [&] { detector = in_phase("prepare", [&] { return knn_fit(data.split.train, config.knn_k); }); },
        [&] { scores = in_phase("inference", [&] { return knn_score_batch(*detector, test.features, config.threads); }); });

    EvalReport report;
    report.method = "knn";
    report.auc_roc = in_phase("evaluate", [&] { return auc_roc(scores, test.anomaly_flags); });
    if (config.threshold_mode == ThresholdMode::contamination) {
        report.threshold = threshold_by_contamination(scores, config.threshold_value);
        report.fpr = fpr_at_threshold(scores, test.anomaly_flags, *report.threshold);
    }
    report.prepare_seconds = times.prepare_seconds;
    report.inference_seconds = times.inference_seconds;
    report.n_test = test.size();
    report.n_anomalies = test.count_anomalies();
    if (out_dir) {
        in_phase("output", [&] {
            std::filesystem::create_directories(*out_dir);
            write_file(*out_dir / "config.json", config_to_json(config) + "\n");
            write_file(*out_dir / "scores.csv", scores_csv(scores, test.anomaly_flags));
            write_file(*out_dir / "report.json", report_to_json(report) + "\n");
            return 0;
        });
    }
    return report;
}

std::string size_table_csv(std::span<const SizeRow> rows) {
    std::string out = "hidden_size,test_accuracy_mean,test_accuracy_std,auc_roc_mean,auc_roc_std,repeats\n";
    for (const auto& r : rows) {
        out += std::to_string(r.hidden_size) + ',' + fmt(r.accuracy_mean) + ',' + fmt(r.accuracy_std) + ',' +
               fmt(r.auc_mean) + ',' + fmt(r.auc_std) + ',' + std::to_string(r.repeats) + '\n';
    }
    return out;
}

std::string epoch_table_csv(std::span<const EpochRow> rows) {
    std::string out = "epoch,auc_roc,test_accuracy\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch) + ',' + fmt(r.auc_roc) + ',' + fmt(r.test_accuracy) + '\n';
    }
    return out;
}

std::string border_table_csv(std::span<const BorderRow> rows) {
    std::string out = "method,param,auc_roc,fpr,prep_fpr\n";
    for (const auto& r : rows) {
        out += method_name(r.method) + ',' + fmt(method_parameter(r.method)) + ',' + fmt(r.auc_roc) + ',' +
               fmt(r.fpr) + ',' + fmt(r.prep_fpr) + '\n';
    }
    return out;
}

namespace {

std::string scores_csv(std::span<const double> scores, std::span<const AnomalyFlag> labels,
                       const std::vector<AnomalyFlag>* decisions) {
    std::string out = "sample_id,score,flag,label\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int flag = decisions != nullptr ? static_cast<int>((*decisions)[i]) : 0;
        out += std::to_string(i) + ',' + fmt(scores[i]) + ',' + std::to_string(flag) + ',' +
               std::to_string(static_cast<int>(labels[i])) + '\n';
    }
    return out;
}

}  // namespace

std::string scores_csv(const ScoreReport& scores, std::span<const AnomalyFlag> labels) {
    const auto real = scores.real_scores();
    return scores_csv(real, labels, scores.decisions ? &*scores.decisions : nullptr);
}

std::string scores_csv(std::span<const double> scores, std::span<const AnomalyFlag> labels) {
    return scores_csv(scores, labels, nullptr);
}

int exit_code(const Error& err) {
    switch (err.kind()) {
        case ErrorKind::config:
        case ErrorKind::shape:
            return 2;
        case ErrorKind::data:
            return 3;
        case ErrorKind::numeric:
            return 4;
    }
    return 1;
}

}  // namespace rangead::cli
