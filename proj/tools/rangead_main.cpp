#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "commands.hpp"

using namespace rangead;
using namespace rangead::cli;

namespace {

struct Flags {
    std::string config_path;
    std::string border_name = "quantile";
    double border_param = 0.01;
    std::size_t width = 0;
    double threshold_fraction = 0.0;
    double contamination = 0.0;
    std::string out_dir;
};

void add_run_flags(CLI::App& app, RunConfig& cfg, Flags& flags) {
    app.add_option("--config", flags.config_path, "Load a config.json written by a previous run (other flags override it)");
    app.add_option("--csv", cfg.csv_path, "CSV dataset; synthetic blobs are used when omitted");
    app.add_option("--label-column", cfg.csv.label_column, "Name of the label column")->capture_default_str();
    app.add_option("--anomaly-label", cfg.csv.anomaly_label, "Label value marking anomalies")->capture_default_str();
    app.add_option("--n-per-class", cfg.synth.n_per_class, "Synthetic rows per normal class")->capture_default_str();
    app.add_option("--classes", cfg.synth.num_classes, "Synthetic normal classes")->capture_default_str();
    app.add_option("--dims", cfg.synth.dims, "Synthetic feature count")->capture_default_str();
    app.add_option("--anomalies", cfg.synth.anomaly_n, "Synthetic anomaly rows")->capture_default_str();
    app.add_option("--shift", cfg.synth.anomaly_shift, "Synthetic anomaly offset along the held-out direction")
        ->capture_default_str();
    app.add_option("--test-fraction", cfg.test_fraction, "Fraction of normal rows held out for testing")
        ->capture_default_str();
    app.add_option("--hidden", cfg.hidden_sizes, "Hidden layer sizes")->delimiter(',')->capture_default_str();
    app.add_option("--width", flags.width, "Preset: two hidden layers of this size (e.g. 100, 500, 1000)");
    app.add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app.add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--border", flags.border_name, "Border method: quantile, iqr or minmax")
        ->check(CLI::IsMember({"quantile", "iqr", "minmax", "quartile_iqr", "min_max_range"}))
        ->capture_default_str();
    app.add_option("--border-param", flags.border_param, "sigma for quantile, t for iqr/minmax")->capture_default_str();
    app.add_option("--monitor", cfg.monitored_layers, "Monitored hidden layers (default: all)")->delimiter(',');
    auto* frac = app.add_option("--threshold-fraction", flags.threshold_fraction,
                                "Flag samples violating more than this fraction of monitored neurons");
    app.add_option("--contamination", flags.contamination, "Flag the expected anomaly fraction of the test set")
        ->excludes(frac);
    app.add_option("--seed", cfg.seed, "Seed for data, split, initialization and shuffling")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Scoring worker threads")->capture_default_str();
    app.add_option("--out", flags.out_dir, "Output directory");
}

bool given(const CLI::App& app, const std::string& name) {
    const auto* opt = app.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

// Applies flags that need post-processing; loads --config first when given.
RunConfig resolve(const CLI::App& app, const RunConfig& parsed, const Flags& flags) {
    RunConfig cfg = parsed;
    if (!flags.config_path.empty()) {
        cfg = load_config(flags.config_path);
        // Re-apply explicitly passed flags on top of the loaded file.
        const RunConfig& p = parsed;
        const auto given = [&](const char* name) { return ::given(app, name); };
        if (given("--csv")) cfg.csv_path = p.csv_path;
        if (given("--label-column")) cfg.csv.label_column = p.csv.label_column;
        if (given("--anomaly-label")) cfg.csv.anomaly_label = p.csv.anomaly_label;
        if (given("--n-per-class")) cfg.synth.n_per_class = p.synth.n_per_class;
        if (given("--classes")) cfg.synth.num_classes = p.synth.num_classes;
        if (given("--dims")) cfg.synth.dims = p.synth.dims;
        if (given("--anomalies")) cfg.synth.anomaly_n = p.synth.anomaly_n;
        if (given("--shift")) cfg.synth.anomaly_shift = p.synth.anomaly_shift;
        if (given("--test-fraction")) cfg.test_fraction = p.test_fraction;
        if (given("--hidden")) cfg.hidden_sizes = p.hidden_sizes;
        if (given("--epochs")) cfg.epochs = p.epochs;
        if (given("--lr")) cfg.learning_rate = p.learning_rate;
        if (given("--batch-size")) cfg.batch_size = p.batch_size;
        if (given("--monitor")) cfg.monitored_layers = p.monitored_layers;
        if (given("--seed")) cfg.seed = p.seed;
        if (given("--threads")) cfg.threads = p.threads;
        if (given("--k")) cfg.knn_k = p.knn_k;
    }
    if (flags.config_path.empty() || given(app, "--border") || given(app, "--border-param")) {
        cfg.border = make_border_method(flags.border_name, flags.border_param);
    }
    if (flags.width > 0) cfg.hidden_sizes.assign(std::max<std::size_t>(cfg.hidden_sizes.size(), 2), flags.width);
    if (given(app, "--threshold-fraction")) {
        cfg.threshold_mode = ThresholdMode::neuron_fraction;
        cfg.threshold_value = flags.threshold_fraction;
    } else if (given(app, "--contamination")) {
        cfg.threshold_mode = ThresholdMode::contamination;
        cfg.threshold_value = flags.contamination;
    }
    return cfg;
}

void emit_table(const std::string& csv, const Flags& flags, const RunConfig& cfg) {
    std::cout << csv;
    if (flags.out_dir.empty()) return;
    std::filesystem::create_directories(flags.out_dir);
    std::ofstream(std::filesystem::path(flags.out_dir) / "table.csv") << csv;
    std::ofstream(std::filesystem::path(flags.out_dir) / "config.json") << config_to_json(cfg) << '\n';
}

std::optional<std::filesystem::path> out_path(const Flags& flags) {
    if (flags.out_dir.empty()) return std::nullopt;
    return std::filesystem::path(flags.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RangeAD: on-model anomaly detection from neuron activation ranges"};
    app.require_subcommand(1);

    RunConfig cfg;
    Flags flags;

    auto* run = app.add_subcommand("run", "Train, extract ranges, score the test split and report");
    add_run_flags(*run, cfg, flags);

    std::vector<std::size_t> sizes{10, 100, 500, 1000};
    std::size_t repeats = 5;
    auto* ablate_size = app.add_subcommand("ablate-size", "AUC-ROC and accuracy across hidden layer sizes");
    add_run_flags(*ablate_size, cfg, flags);
    ablate_size->add_option("--sizes", sizes, "Hidden sizes to sweep")->delimiter(',')->capture_default_str();
    ablate_size->add_option("--repeats", repeats, "Model seeds per size")->capture_default_str();

    std::vector<std::size_t> checkpoints{0, 1, 10, 50, 100, 500};
    auto* ablate_epochs = app.add_subcommand("ablate-epochs", "AUC-ROC after selected training epochs");
    add_run_flags(*ablate_epochs, cfg, flags);
    ablate_epochs->add_option("--checkpoints", checkpoints, "Epochs to evaluate (0 = untrained)")
        ->delimiter(',')
        ->capture_default_str();

    std::vector<double> sigmas{0.0, 0.001, 0.01, 0.05, 0.1};
    std::vector<double> ts{0.001, 0.01, 0.1, 0.5, 0.9};
    auto* ablate_borders = app.add_subcommand("ablate-borders", "AUC-ROC and FPR across border methods");
    add_run_flags(*ablate_borders, cfg, flags);
    ablate_borders->add_option("--sigmas", sigmas, "Quantile sigma grid")->delimiter(',')->capture_default_str();
    ablate_borders->add_option("--ts", ts, "t grid for the IQR and min-max methods")->delimiter(',')->capture_default_str();

    auto* baseline = app.add_subcommand("baseline", "kNN distance baseline on the same split");
    add_run_flags(*baseline, cfg, flags);
    std::string baseline_method = "knn";
    baseline->add_option("--method", baseline_method, "Baseline detector")
        ->check(CLI::IsMember({"knn"}))
        ->capture_default_str();
    baseline->add_option("--k", cfg.knn_k, "Neighbour rank used as score")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
    SynthParams synth_params;
    CsvOptions synth_csv;
    std::string synth_out;
    synth->add_option("--n-per-class", synth_params.n_per_class, "Rows per normal class")->capture_default_str();
    synth->add_option("--classes", synth_params.num_classes, "Normal classes")->capture_default_str();
    synth->add_option("--dims", synth_params.dims, "Feature count")->capture_default_str();
    synth->add_option("--anomalies", synth_params.anomaly_n, "Anomaly rows")->capture_default_str();
    synth->add_option("--shift", synth_params.anomaly_shift, "Anomaly offset along the held-out direction")
        ->capture_default_str();
    synth->add_option("--seed", synth_params.seed, "Generator seed")->capture_default_str();
    synth->add_option("--label-column", synth_csv.label_column, "Label column name")->capture_default_str();
    synth->add_option("--anomaly-label", synth_csv.anomaly_label, "Label of anomaly rows")->capture_default_str();
    synth->add_option("--out", synth_out, "Output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*synth) {
            const Dataset data = synth_blobs(synth_params);
            if (synth_out.empty()) {
                std::cout << format_csv(data, synth_csv);
            } else {
                write_csv(data, synth_out, synth_csv);
            }
            return 0;
        }
        CLI::App* active = app.get_subcommands().front();
        const RunConfig resolved = resolve(*active, cfg, flags);
        if (*run) {
            const RunResult result = cmd_run(resolved, out_path(flags));
            std::cout << render_report(result.report);
            std::cout << std::left << std::setw(20) << "test_accuracy" << result.test_accuracy << '\n';
        } else if (*ablate_size) {
            emit_table(size_table_csv(cmd_ablate_size(resolved, sizes, repeats)), flags, resolved);
        } else if (*ablate_epochs) {
            emit_table(epoch_table_csv(cmd_ablate_epochs(resolved, checkpoints)), flags, resolved);
        } else if (*ablate_borders) {
            emit_table(border_table_csv(cmd_ablate_borders(resolved, sigmas, ts)), flags, resolved);
        } else if (*baseline) {
            std::cout << render_report(cmd_baseline(resolved, out_path(flags)));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
