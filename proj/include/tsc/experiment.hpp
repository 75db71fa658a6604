#pragma once

#include <string>
#include <vector>

#include "tsc/trainer.hpp"

namespace tsc {

struct ExperimentSpec {
    std::string data_dir;
    std::vector<std::string> datasets;
    std::vector<std::string> families = {"mlp", "cnn", "resnet", "inception", "transformer"};
    std::vector<std::string> modes = {"plain", "hybrid"};
    TrainConfig train;
    EncoderConfig encoder;    // family is overridden per run
    BackboneConfig backbone;  // hidden is forced to encoder.hidden_width
    std::vector<double> grid_lrs = {1e-3, 1e-4, 1e-5};
    std::vector<int64_t> grid_n_kernels = {3, 4, 5, 6};
    std::vector<int64_t> grid_ks = {8, 16};
    std::string out_dir = "out";
    uint64_t seed = 42;
    int64_t threads = 1;
    bool znorm = true;
    bool write_curves = false;
};

// One line of results.csv. n_kernels and k are 0 for families without them
// (serialized as empty fields).
struct ResultRow {
    std::string dataset, family, mode;
    double lr = 0;
    int64_t n_kernels = 0;
    int64_t k = 0;
    uint64_t seed = 0;
    double max_test_acc = 0;
    double min_loss_acc = 0;
    int64_t epochs = 0;
    double wall_s = 0;
    std::string status = "ok";

    std::string key() const;  // all columns except metrics/wall/status
};

struct ResultsTable {
    std::vector<ResultRow> rows;

    bool has(const std::string& key) const;
    void sort_canonical();  // by (dataset, family, mode, lr, n_kernels, k, seed)
};

// Unweighted means over datasets, grouped by every other key column.
struct AggregateRow {
    std::string family, mode;
    double lr = 0;
    int64_t n_kernels = 0;
    int64_t k = 0;
    double avg_max_acc = 0;
    double avg_min_loss_acc = 0;
    int64_t n_datasets = 0;
};

std::vector<AggregateRow> aggregate(const ResultsTable& table);

// %.6g rendering shared by the CSV writer and key derivation.
std::string format_g6(double v);

std::string results_csv_header();
std::string to_csv_line(const ResultRow& row);
ResultRow parse_csv_line(const std::string& line, size_t line_no);

void write_results_csv(const std::string& path, const ResultsTable& table);
ResultsTable read_results_csv(const std::string& path);  // throws IoError if unreadable
void write_results_markdown(const std::string& path, const ResultsTable& table);

// Stable per-run seed: adding datasets or families never changes the seeds
// of existing runs.
uint64_t derive_run_seed(uint64_t master, const std::string& dataset, const std::string& family,
                         const std::string& mode);

// Resolves <data_dir>/<name>_TRAIN.tsv style paths (also .txt/.csv and the
// <data_dir>/<name>/<name>_TRAIN.* layout of the UCR archive).
std::string resolve_split_path(const std::string& data_dir, const std::string& name, bool train);

struct GridConfig {
    double lr;
    int64_t n_kernels;
    int64_t k;
    bool operator==(const GridConfig&) const = default;
};

// The grid enumeration: lr ascending, then n_kernels, then k.
std::vector<GridConfig> grid_configs(const ExperimentSpec& spec);

// Full matrix: |datasets| x |families| x |modes| runs at spec.train settings.
ResultsTable run_matrix(const ExperimentSpec& spec);

// Inception grid: lr x n_kernels x k (ascending enumeration), every config
// run on every dataset.
ResultsTable grid_search(const ExperimentSpec& spec);

// results.csv (canonical order) and results.md under out_dir.
void emit_reports(const ResultsTable& table, const std::string& out_dir);

}  // namespace tsc
