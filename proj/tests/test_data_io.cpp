#include <filesystem>
#include <set>

#include "doctest.h"
#include "oracles.hpp"

using namespace rangead;

namespace {

Dataset labelled(std::size_t normals, std::size_t anomalies) {
    Dataset d;
    d.features = Matrix(normals + anomalies, 2);
    for (std::size_t r = 0; r < d.size(); ++r) {
        d.features(r, 0) = static_cast<double>(r);
        d.features(r, 1) = static_cast<double>(r % 7);
        const bool anomaly = r >= normals;
        d.class_labels.push_back(anomaly ? kNoClass : static_cast<int>(r % 2));
        d.anomaly_flags.push_back(anomaly ? AnomalyFlag::anomaly : AnomalyFlag::normal);
    }
    d.feature_names = {"f0", "f1"};
    d.class_names = {"even", "odd"};
    return d;
}

std::multiset<double> first_column(const Dataset& d) {
    std::multiset<double> out;
    for (std::size_t r = 0; r < d.size(); ++r) out.insert(d.features(r, 0));
    return out;
}

}  // namespace

TEST_CASE("parse_csv relabels classes and anomalies") {
    const Dataset d = parse_csv("x,y,label\n1,2,b\n3,4,a\n5,6,ANOM\n", {.label_column = "label", .anomaly_label = "ANOM"});
    CHECK(d.size() == 3);
    CHECK(d.dims() == 2);
    CHECK(d.anomaly_flags == std::vector<AnomalyFlag>{AnomalyFlag::normal, AnomalyFlag::normal, AnomalyFlag::anomaly});
    CHECK(d.class_labels == std::vector<int>{1, 0, kNoClass});
    CHECK(d.class_names == std::vector<std::string>{"a", "b"});
    CHECK(d.feature_names == std::vector<std::string>{"x", "y"});
    CHECK(d.features(2, 1) == 6.0);
}

TEST_CASE("parse_csv accepts the label column anywhere") {
    const Dataset d = parse_csv("cls,x\nk,1.5\nanomaly,-2e3\n", {.label_column = "cls"});
    CHECK(d.features == Matrix(2, 1, {1.5, -2000.0}));
    CHECK(d.count_anomalies() == 1);
}

TEST_CASE("parse_csv errors name the offending cell") {
    const auto message = [](const std::string& text) {
        try {
            parse_csv(text);
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const auto nan = message("x,y,label\n1,2,a\n3,nan,b\n");
    CHECK(nan.find("line 3") != std::string::npos);
    CHECK(nan.find("y") != std::string::npos);
    CHECK(message("x,label\nabc,a\n").find("line 2") != std::string::npos);
    CHECK(message("x,y\n1,2\n").find("label") != std::string::npos);
    CHECK(message("x,label\n1,a,3\n") != "no error");
    CHECK(message("") != "no error");
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("property: ingestion rejects every non-finite cell") {
    gen::Rng rng(81);
    const char* bad[] = {"nan", "NaN", "inf", "-inf", "Infinity", "1e999", "", "1.0.0", "0x10", "1 2"};
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = gen::uniform(rng, 1, 6);
        const std::size_t cols = gen::uniform(rng, 1, 4);
        const std::size_t bad_row = gen::uniform(rng, 0, rows - 1);
        const std::size_t bad_col = gen::uniform(rng, 0, cols - 1);
        std::string text;
        for (std::size_t c = 0; c < cols; ++c) text += "f" + std::to_string(c) + ",";
        text += "label\n";
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                text += r == bad_row && c == bad_col ? bad[gen::uniform(rng, 0, std::size(bad) - 1)]
                                                     : std::to_string(gen::uniform_real(rng, -5, 5));
                text += ",";
            }
            text += "c\n";
        }
        CHECK_THROWS_AS(parse_csv(text), DataError);
    }
}

TEST_CASE("CSV round trip is exact") {
    gen::Rng rng(82);
    const Dataset d = synth_blobs({.n_per_class = 10, .num_classes = 3, .dims = 4, .anomaly_n = 5, .anomaly_shift = 4, .seed = 2});
    CHECK(parse_csv(format_csv(d)) == d);
    const auto path = std::filesystem::temp_directory_path() / "rangead_roundtrip.csv";
    write_csv(d, path, {.label_column = "target", .anomaly_label = "outlier"});
    CHECK(load_csv(path, {.label_column = "target", .anomaly_label = "outlier"}) == d);
    std::filesystem::remove(path);
}

TEST_CASE("normalization") {
    Dataset d;
    d.features = Matrix(2, 2, {0, 5, 2, 5});
    d.class_labels = {0, 0};
    d.anomaly_flags = {AnomalyFlag::normal, AnomalyFlag::normal};
    d.class_names = {"a"};
    const NormalizationStats s = normalize(d);
    CHECK(s.mean == std::vector<double>{1, 5});
    CHECK(s.stddev == std::vector<double>{1, 1});
    const Dataset z = apply_normalization(s, d);
    CHECK(z.features == Matrix(2, 2, {-1, 0, 1, 0}));
    Dataset wide = d;
    wide.features = Matrix(2, 3);
    CHECK_THROWS_AS(apply_normalization(s, wide), ShapeError);
}

TEST_CASE("a constant column normalizes to zeros") {
    Dataset d = labelled(5, 0);
    for (std::size_t r = 0; r < d.size(); ++r) d.features(r, 1) = 3.25;
    const NormalizationStats s = normalize(d);
    CHECK(s.stddev[1] == 1.0);
    const Dataset z = apply_normalization(s, d);
    for (std::size_t r = 0; r < z.size(); ++r) CHECK(z.features(r, 1) == 0.0);
}

TEST_CASE("split_protocol arithmetic") {
    const Split s = split_protocol(labelled(100, 10), 0.2, 0);
    CHECK(s.train.size() == 80);
    CHECK(s.test.size() == 30);
    CHECK(s.test.count_anomalies() == 10);
    CHECK(s.prep == s.train);
    CHECK(s.train.count_anomalies() == 0);
    for (std::size_t r = 20; r < 30; ++r) CHECK(s.test.anomaly_flags[r] == AnomalyFlag::anomaly);
}

TEST_CASE("split_protocol is seeded") {
    const Dataset d = labelled(100, 10);
    const Split a = split_protocol(d, 0.3, 5);
    const Split b = split_protocol(d, 0.3, 5);
    const Split c = split_protocol(d, 0.3, 6);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.train == c.train);
    const auto tail = [](const Dataset& t) {
        std::vector<std::size_t> idx;
        for (std::size_t r = 0; r < t.size(); ++r) {
            if (t.anomaly_flags[r] == AnomalyFlag::anomaly) idx.push_back(r);
        }
        return t.select(idx);
    };
    CHECK(tail(a.test) == tail(c.test));
}

TEST_CASE("split_protocol rejects unusable inputs") {
    CHECK_THROWS_AS(split_protocol(labelled(100, 0), 0.3, 0), DataError);
    CHECK_THROWS_AS(split_protocol(labelled(100, 10), 1.0, 0), ConfigError);
    CHECK_THROWS_AS(split_protocol(labelled(100, 10), -0.1, 0), ConfigError);
    Dataset one_class = labelled(10, 2);
    one_class.class_names = {"only"};
    for (auto& c : one_class.class_labels) c = c == kNoClass ? kNoClass : 0;
    CHECK_THROWS_AS(split_protocol(one_class, 0.3, 0), DataError);
}

TEST_CASE("property: split partitions the normals exactly") {
    gen::Rng rng(83);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t normals = gen::uniform(rng, 4, 200);
        const std::size_t anomalies = gen::uniform(rng, 1, 30);
        const double fraction = gen::uniform_real(rng, 0.0, 0.7);
        const Dataset d = labelled(normals, anomalies);
        const Split s = split_protocol(d, fraction, rng());
        const auto all_normals = first_column(d.select([&] {
            std::vector<std::size_t> idx(normals);
            std::iota(idx.begin(), idx.end(), 0);
            return idx;
        }()));
        auto train = first_column(s.train);
        std::multiset<double> test_normals;
        for (std::size_t r = 0; r < s.test.size(); ++r) {
            if (s.test.anomaly_flags[r] == AnomalyFlag::normal) test_normals.insert(s.test.features(r, 0));
        }
        std::vector<double> overlap;
        std::set_intersection(train.begin(), train.end(), test_normals.begin(), test_normals.end(),
                              std::back_inserter(overlap));
        CHECK(overlap.empty());
        train.insert(test_normals.begin(), test_normals.end());
        CHECK(train == all_normals);
        CHECK(test_normals.size() == static_cast<std::size_t>(std::llround(fraction * static_cast<double>(normals))));
        CHECK(s.test.count_anomalies() == anomalies);
    }
}

TEST_CASE("synth_blobs") {
    const SynthParams p{.n_per_class = 40, .num_classes = 3, .dims = 6, .anomaly_n = 12, .anomaly_shift = 10, .seed = 4};
    const Dataset d = synth_blobs(p);
    CHECK(d.size() == 132);
    CHECK(d.dims() == 6);
    CHECK(d.num_classes() == 3);
    CHECK(d.count_anomalies() == 12);
    CHECK_NOTHROW(d.validate());
    CHECK(synth_blobs(p) == d);
    SynthParams other = p;
    other.seed = 5;
    CHECK_FALSE(synth_blobs(other) == d);
    CHECK_THROWS_AS(synth_blobs({.n_per_class = 0}), ConfigError);
    CHECK_THROWS_AS(synth_blobs({.dims = 1}), ConfigError);
}

TEST_CASE("synth_blobs places anomalies along a held-out direction") {
    // With a large shift the anomaly mean sits far from every class mean.
    const SynthParams p{.n_per_class = 400, .num_classes = 4, .dims = 10, .anomaly_n = 400, .anomaly_shift = 10, .seed = 1};
    const Dataset d = synth_blobs(p);
    std::vector<std::vector<double>> mean(5, std::vector<double>(p.dims, 0.0));
    std::vector<double> count(5, 0.0);
    for (std::size_t r = 0; r < d.size(); ++r) {
        const std::size_t g = d.anomaly_flags[r] == AnomalyFlag::anomaly ? 4 : static_cast<std::size_t>(d.class_labels[r]);
        count[g] += 1;
        for (std::size_t c = 0; c < p.dims; ++c) mean[g][c] += d.features(r, c);
    }
    for (std::size_t g = 0; g < 5; ++g) {
        for (double& m : mean[g]) m /= count[g];
    }
    const auto norm = [](const std::vector<double>& v) {
        double s = 0;
        for (const double x : v) s += x * x;
        return std::sqrt(s);
    };
    for (std::size_t g = 0; g < 4; ++g) CHECK(norm(mean[g]) == doctest::Approx(3.0).epsilon(0.1));
    // Class centres are orthogonal to u, so the anomaly mean is the mixture mean plus 10 u.
    std::vector<double> mixture(p.dims, 0.0);
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t c = 0; c < p.dims; ++c) mixture[c] += mean[g][c] / 4.0;
    }
    std::vector<double> diff(p.dims);
    for (std::size_t c = 0; c < p.dims; ++c) diff[c] = mean[4][c] - mixture[c];
    CHECK(norm(diff) == doctest::Approx(10.0).epsilon(0.05));
}
