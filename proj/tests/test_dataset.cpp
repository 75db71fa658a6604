#include <doctest.h>

#include "testutil.hpp"
#include "tsc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace tsc;

#ifndef TSC_FIXTURE_DIR
#error "TSC_FIXTURE_DIR must point at the fixtures directory"
#endif

namespace {
std::string fixture(const std::string& name) { return std::string(TSC_FIXTURE_DIR "/") + name; }
}  // namespace

TEST_CASE("tab-delimited split loads with remapped labels") {
    Dataset train = load_ucr_split(fixture("tabwave_TRAIN.tsv"), "tabwave", "train");
    CHECK(train.size() == 4);
    CHECK(train.series_length == 8);
    CHECK(train.channels == 1);
    CHECK(train.num_classes == 2);
    // original labels {2,5} sorted -> {0,1}
    CHECK(train.label_map.at(2.0) == 0);
    CHECK(train.label_map.at(5.0) == 1);
    CHECK(train.samples[0].label == 0);
    CHECK(train.samples[1].label == 1);
    CHECK(train.samples[0].values[0] == doctest::Approx(0.5f));
    CHECK(train.samples[1].values[7] == doctest::Approx(1.25f));

    Dataset test = load_ucr_split(fixture("tabwave_TEST.tsv"), "tabwave", "test",
                                  &train.label_map);
    CHECK(test.size() == 2);
    CHECK(test.samples[0].label == 1);
    CHECK(test.samples[1].label == 0);
    CHECK(test.num_classes == 2);
}

TEST_CASE("comma-delimited split is auto-detected") {
    Dataset train = load_ucr_split(fixture("commawave_TRAIN.csv"), "commawave", "train");
    CHECK(train.size() == 4);
    CHECK(train.series_length == 6);
    CHECK(train.num_classes == 2);
    CHECK(train.label_map.at(-1.0) == 0);
    CHECK(train.label_map.at(1.0) == 1);
    CHECK(train.samples[3].values[5] == doctest::Approx(1.8f));

    Dataset test = load_ucr_split(fixture("commawave_TEST.csv"), "commawave", "test",
                                  &train.label_map);
    CHECK(test.samples[0].label == 1);
    CHECK(test.samples[1].label == 0);
}

TEST_CASE("loader error paths") {
    CHECK_THROWS_AS(load_ucr_split(fixture("does_not_exist.tsv")), IoError);
    CHECK_THROWS_WITH_AS(load_ucr_split(fixture("ragged_TRAIN.tsv")),
                         doctest::Contains("ragged"), DataError);
    // a test label never seen in train
    Dataset train = load_ucr_split(fixture("tabwave_TRAIN.tsv"));
    std::map<double, int64_t> narrow{{2.0, 0}};
    CHECK_THROWS_AS(load_ucr_split(fixture("tabwave_TEST.tsv"), "tabwave", "test", &narrow),
                    DataError);
}

TEST_CASE("loader errors name the offending line") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "tsc_ds_test").string();
    fs::create_directories(dir);
    {
        std::ofstream f(dir + "/bad.tsv");
        f << "1\t0.5\t0.25\n1\t0.5\tbogus\n";
    }
    CHECK_THROWS_WITH_AS(load_ucr_split(dir + "/bad.tsv"), doctest::Contains("bad.tsv:2"),
                         DataError);
    {
        std::ofstream f(dir + "/empty.tsv");
    }
    CHECK_THROWS_AS(load_ucr_split(dir + "/empty.tsv"), DataError);
    {
        std::ofstream f(dir + "/lonely.tsv");
        f << "1\n";
    }
    CHECK_THROWS_AS(load_ucr_split(dir + "/lonely.tsv"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("znormalize examples and statistics") {
    Dataset ds;
    ds.name = "inline";
    ds.series_length = 3;
    ds.num_classes = 1;
    ds.samples.push_back({{1, 2, 3}, 0});
    ds.samples.push_back({{4, 4, 4}, 0});
    Dataset z = znormalize(ds);
    CHECK(z.samples[0].values[0] == doctest::Approx(-1.224745f).epsilon(1e-5));
    CHECK(z.samples[0].values[1] == doctest::Approx(0.0f));
    CHECK(z.samples[0].values[2] == doctest::Approx(1.224745f).epsilon(1e-5));
    // constant series collapses to zeros
    for (float v : z.samples[1].values) CHECK(v == 0.0f);

    // random series end up with mean ~0 and population var ~1
    Rng rng(77);
    Dataset big;
    big.series_length = 64;
    big.num_classes = 1;
    for (int i = 0; i < 5; ++i) {
        TimeSeriesSample s;
        for (int t = 0; t < 64; ++t) s.values.push_back(static_cast<float>(rng.uniform(-3, 9)));
        big.samples.push_back(std::move(s));
    }
    Dataset zb = znormalize(big);
    for (const auto& s : zb.samples) {
        double mean = 0, var = 0;
        for (float v : s.values) mean += v;
        mean /= 64;
        for (float v : s.values) var += (v - mean) * (v - mean);
        var /= 64;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("batching covers every index exactly once") {
    auto batches = make_batches(10, 3, false, 0);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 3);
    CHECK(batches[3].size() == 1);
    // unshuffled order is the identity
    CHECK(batches[0] == std::vector<int64_t>{0, 1, 2});

    auto shuffled = make_batches(10, 3, true, 42);
    auto again = make_batches(10, 3, true, 42);
    CHECK(shuffled == again);
    auto other = make_batches(10, 3, true, 43);
    CHECK(shuffled != other);

    std::vector<int64_t> seen;
    for (const auto& b : shuffled) seen.insert(seen.end(), b.begin(), b.end());
    std::sort(seen.begin(), seen.end());
    std::vector<int64_t> want(10);
    for (int64_t i = 0; i < 10; ++i) want[static_cast<size_t>(i)] = i;
    CHECK(seen == want);
}

TEST_CASE("batch iterator preserves the label multiset") {
    Dataset train = load_ucr_split(fixture("miniwave_TRAIN.tsv"), "miniwave", "train");
    CHECK(train.size() == 24);

    std::map<int64_t, int> want;
    for (const auto& s : train.samples) want[s.label]++;

    BatchIterator it(train, 5, /*shuffle=*/true, /*seed=*/9);
    CHECK(it.num_batches() == 5);
    Tensor<float> x({1});
    std::vector<int64_t> labels;
    std::map<int64_t, int> got;
    int64_t total = 0;
    while (it.next(x, labels)) {
        CHECK(x.shape()[1] == train.series_length);
        CHECK(x.shape()[2] == 1);
        CHECK(x.shape()[0] == static_cast<int64_t>(labels.size()));
        for (int64_t l : labels) got[l]++;
        total += x.shape()[0];
    }
    CHECK(total == 24);
    CHECK(got == want);

    it.reset();
    CHECK(it.next(x, labels));

    Dataset empty;
    empty.name = "void";
    CHECK_THROWS_AS(BatchIterator(empty, 4, false, 0), DataError);
}

TEST_CASE("to_tensor materializes [N,T,d]") {
    Dataset train = load_ucr_split(fixture("tabwave_TRAIN.tsv"));
    auto [x, labels] = to_tensor<double>(train);
    CHECK(x.shape() == std::vector<int64_t>{4, 8, 1});
    CHECK(labels.size() == 4);
    CHECK(x.at({0, 0, 0}) == doctest::Approx(0.5));
    CHECK(x.at({3, 7, 0}) == doctest::Approx(-0.9));
}
