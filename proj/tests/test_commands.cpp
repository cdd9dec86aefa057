#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "commands.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace rangead;
using namespace rangead::cli;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
    RunConfig c;
    c.synth = {.n_per_class = 60, .num_classes = 3, .dims = 8, .anomaly_n = 20, .anomaly_shift = 10, .seed = 0};
    c.hidden_sizes = {16, 16};
    c.epochs = 5;
    c.seed = 3;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string without_timing(const std::string& report) {
    auto doc = nlohmann::json::parse(report);
    for (const char* key : kTimingKeys) doc.erase(key);
    return doc.dump();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("rangead_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RANGEAD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cmd_run writes every artifact") {
    const fs::path dir = scratch("run");
    const RunResult r = cmd_run(small_config(), dir);
    for (const char* f : {"config.json", "model.json", "ranges.json", "scores.csv", "report.json"}) {
        CHECK(fs::exists(dir / f));
    }
    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    for (const char* key : {"method", "auc_roc", "threshold", "fpr", "prepare_seconds", "inference_seconds", "n_test",
                            "n_anomalies"}) {
        CHECK(report.contains(key));
    }
    CHECK(r.report.n_test == 54 + 20);
    CHECK(r.report.n_anomalies == 20);
    CHECK(load_model(dir / "model.json") == r.model);
    CHECK(load_ranges(dir / "ranges.json") == r.ranges);
    std::istringstream lines(slurp(dir / "scores.csv"));
    std::string header;
    std::getline(lines, header);
    CHECK(header == "sample_id,score,flag,label");
    std::size_t rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == r.report.n_test);
    fs::remove_all(dir);
}

TEST_CASE("cmd_run is reproducible and the config echo replays it") {
    const fs::path a = scratch("repro_a");
    const fs::path b = scratch("repro_b");
    RunConfig c = small_config();
    c.threshold_mode = ThresholdMode::contamination;
    c.threshold_value = 0.2;
    cmd_run(c, a);
    cmd_run(load_config(a / "config.json"), b);
    CHECK(slurp(a / "scores.csv") == slurp(b / "scores.csv"));
    CHECK(without_timing(slurp(a / "report.json")) == without_timing(slurp(b / "report.json")));
    CHECK(slurp(a / "config.json") == slurp(b / "config.json"));
    CHECK(slurp(a / "model.json") == slurp(b / "model.json"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("config JSON round trip") {
    RunConfig c = small_config();
    c.border = MinMaxRange{0.25};
    c.monitored_layers = {1};
    c.threshold_mode = ThresholdMode::neuron_fraction;
    c.threshold_value = 0.05;
    c.knn_k = 7;
    CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));
    c.csv_path = "/data/x.csv";
    c.csv.label_column = "y";
    CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));
    CHECK_THROWS_AS(config_from_json("{}"), ConfigError);
}

TEST_CASE("neuron-fraction threshold of the largest preset") {
    RunConfig c = small_config();
    c.hidden_sizes = {1000, 1000};
    c.epochs = 0;
    c.threshold_mode = ThresholdMode::neuron_fraction;
    c.threshold_value = 0.10;
    const RunResult r = cmd_run(c);
    REQUIRE(r.report.threshold.has_value());
    CHECK(*r.report.threshold == 200.0);
    REQUIRE(r.scores.decisions.has_value());
    for (std::size_t i = 0; i < r.scores.scores.size(); ++i) {
        CHECK(((*r.scores.decisions)[i] == AnomalyFlag::anomaly) == (r.scores.scores[i] > 200));
    }
}

TEST_CASE("prepared data uses train statistics only") {
    const RunConfig c = small_config();
    const PreparedData p = prepare_data(c);
    SynthParams sp = c.synth;
    sp.seed = c.seed;
    const Split raw = split_protocol(synth_blobs(sp), c.test_fraction, c.seed);
    CHECK(p.stats == normalize(raw.train));
    CHECK(p.split.test == apply_normalization(p.stats, raw.test));
}

TEST_CASE("errors name the failing phase") {
    RunConfig c = small_config();
    c.csv_path = "/nonexistent/data.csv";
    try {
        cmd_run(c);
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("data") != std::string::npos);
    }
}

TEST_CASE("ablation tables have the requested shape") {
    const RunConfig c = small_config();
    const std::size_t sizes[] = {4, 8, 12};
    const auto size_rows = cmd_ablate_size(c, sizes, 2);
    REQUIRE(size_rows.size() == 3);
    CHECK(size_rows[1].hidden_size == 8);
    CHECK(size_rows[0].repeats == 2);
    CHECK(size_table_csv(size_rows).find("auc_roc_std") != std::string::npos);

    const std::size_t one[] = {8};
    const auto single = cmd_ablate_size(c, one, 1);
    REQUIRE(single.size() == 1);
    RunConfig eight = c;
    eight.hidden_sizes = {8, 8};
    const RunResult direct = run_pipeline(eight, prepare_data(eight));
    CHECK(single[0].auc_mean == direct.report.auc_roc);
    CHECK(single[0].accuracy_mean == direct.test_accuracy);
    CHECK(single[0].auc_std == 0.0);

    const std::size_t checkpoints[] = {0, 1, 5};
    const auto epoch_rows = cmd_ablate_epochs(c, checkpoints);
    REQUIRE(epoch_rows.size() == 3);
    CHECK(epoch_rows[0].epoch == 0);
    const PreparedData data = prepare_data(c);
    const MlpModel untrained = init_model(mlp_specs(8, c.hidden_sizes, 3), c.seed);
    CHECK(epoch_rows[0].auc_roc == evaluate_model(c, data, untrained, c.border).auc_roc);
    CHECK(epoch_rows[2].auc_roc == run_pipeline(c, data).report.auc_roc);

    RunConfig no_training = c;
    no_training.epochs = 0;
    const std::size_t zero[] = {0};
    CHECK(cmd_ablate_epochs(no_training, zero).size() == 1);

    const double sigmas[] = {0.0, 0.01, 0.1};
    const double ts[] = {0.1, 0.5};
    const auto border_rows = cmd_ablate_borders(c, sigmas, ts);
    REQUIRE(border_rows.size() == 3 + 2 * 2);
    CHECK(std::holds_alternative<Quantile>(border_rows[0].method));
    CHECK(std::holds_alternative<QuartileIqr>(border_rows[3].method));
    CHECK(std::holds_alternative<MinMaxRange>(border_rows[6].method));
    CHECK(border_rows[0].prep_fpr == 0.0);
}

TEST_CASE("kNN baseline report") {
    const fs::path dir = scratch("baseline");
    const EvalReport r = cmd_baseline(small_config(), dir);
    CHECK(r.method == "knn");
    CHECK(r.auc_roc >= 0.0);
    CHECK(r.inference_seconds > 0.0);
    CHECK(fs::exists(dir / "report.json"));
    fs::remove_all(dir);
}

TEST_CASE("exit codes") {
    CHECK(exit_code(ConfigError("x")) == 2);
    CHECK(exit_code(ShapeError("x")) == 2);
    CHECK(exit_code(DataError("x")) == 3);
    CHECK(exit_code(NumericError("x")) == 4);

    const fs::path dir = scratch("exit");
    fs::create_directories(dir);
    CHECK(run_cli("run --n-per-class 30 --dims 4 --hidden 8,8 --epochs 2 --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "report.json"));
    CHECK(run_cli("run --config " + (dir / "ok" / "config.json").string() + " --epochs 1") == 0);
    CHECK(run_cli("run --border-param 0.7") == 2);
    CHECK(run_cli("run --no-such-flag") == 2);
    CHECK(run_cli("run --threshold-fraction 0.1 --contamination 0.1") == 2);
    CHECK(run_cli("run --csv /nonexistent.csv") == 3);
    std::ofstream(dir / "bad.csv") << "a,label\n1,x\nnan,anomaly\n";
    CHECK(run_cli("run --csv " + (dir / "bad.csv").string()) == 3);
    CHECK(run_cli("synth --n-per-class 5 --out " + (dir / "s.csv").string()) == 0);
    CHECK(load_csv(dir / "s.csv").size() == 5 * 4 + 100);
    CHECK(run_cli("ablate-borders --n-per-class 30 --hidden 4 --epochs 1 --sigmas 0.01 --ts 0.1") == 0);
    fs::remove_all(dir);
}
