#include "tsc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;

namespace tsc {

namespace {

std::string sanitize_status(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

std::vector<std::string> split_on(const std::string& line, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_double(const std::string& s, size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw IoError("results.csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

int64_t parse_int_or_zero(const std::string& s, size_t line_no) {
    if (s.empty()) return 0;
    return static_cast<int64_t>(parse_double(s, line_no));
}

struct RunJob {
    std::string dataset, family, mode;
    double lr = 0;
    int64_t n_kernels = 0;  // 0 = family default / not applicable
    int64_t k = 0;
};

}  // namespace

std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string ResultRow::key() const {
    return dataset + "|" + family + "|" + mode + "|" + format_g6(lr) + "|" +
           std::to_string(n_kernels) + "|" + std::to_string(k) + "|" + std::to_string(seed);
}

bool ResultsTable::has(const std::string& key) const {
    for (const auto& r : rows)
        if (r.key() == key) return true;
    return false;
}

void ResultsTable::sort_canonical() {
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.dataset, a.family, a.mode, a.lr, a.n_kernels, a.k, a.seed) <
               std::tie(b.dataset, b.family, b.mode, b.lr, b.n_kernels, b.k, b.seed);
    });
}

std::vector<AggregateRow> aggregate(const ResultsTable& table) {
    std::vector<AggregateRow> out;
    for (const auto& r : table.rows) {
        if (r.status != "ok") continue;
        AggregateRow* agg = nullptr;
        for (auto& a : out)
            if (a.family == r.family && a.mode == r.mode && a.lr == r.lr &&
                a.n_kernels == r.n_kernels && a.k == r.k) {
                agg = &a;
                break;
            }
        if (!agg) {
            out.push_back({r.family, r.mode, r.lr, r.n_kernels, r.k, 0.0, 0.0, 0});
            agg = &out.back();
        }
        agg->avg_max_acc += r.max_test_acc;
        agg->avg_min_loss_acc += r.min_loss_acc;
        agg->n_datasets += 1;
    }
    for (auto& a : out) {
        a.avg_max_acc /= static_cast<double>(a.n_datasets);
        a.avg_min_loss_acc /= static_cast<double>(a.n_datasets);
    }
    std::sort(out.begin(), out.end(), [](const AggregateRow& a, const AggregateRow& b) {
        return std::tie(a.family, a.mode, a.lr, a.n_kernels, a.k) <
               std::tie(b.family, b.mode, b.lr, b.n_kernels, b.k);
    });
    return out;
}

std::string results_csv_header() {
    return "dataset,family,mode,lr,n_kernels,k,seed,max_test_acc,min_loss_acc,epochs,wall_s,"
           "status";
}

std::string to_csv_line(const ResultRow& row) {
    std::string out = row.dataset + "," + row.family + "," + row.mode + "," + format_g6(row.lr) +
                      ",";
    if (row.n_kernels > 0) out += std::to_string(row.n_kernels);
    out += ",";
    if (row.k > 0) out += std::to_string(row.k);
    out += "," + std::to_string(row.seed) + "," + format_g6(row.max_test_acc) + "," +
           format_g6(row.min_loss_acc) + "," + std::to_string(row.epochs) + "," +
           format_g6(row.wall_s) + "," + row.status;
    return out;
}

ResultRow parse_csv_line(const std::string& line, size_t line_no) {
    const auto fields = split_on(line, ',');
    if (fields.size() != 12)
        throw IoError("results.csv line " + std::to_string(line_no) + ": expected 12 fields, got " +
                      std::to_string(fields.size()));
    ResultRow row;
    row.dataset = fields[0];
    row.family = fields[1];
    row.mode = fields[2];
    row.lr = parse_double(fields[3], line_no);
    row.n_kernels = parse_int_or_zero(fields[4], line_no);
    row.k = parse_int_or_zero(fields[5], line_no);
    row.seed = static_cast<uint64_t>(std::strtoull(fields[6].c_str(), nullptr, 10));
    row.max_test_acc = parse_double(fields[7], line_no);
    row.min_loss_acc = parse_double(fields[8], line_no);
    row.epochs = parse_int_or_zero(fields[9], line_no);
    row.wall_s = parse_double(fields[10], line_no);
    row.status = fields[11];
    return row;
}

void write_results_csv(const std::string& path, const ResultsTable& table) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << results_csv_header() << "\n";
    for (const auto& r : table.rows) f << to_csv_line(r) << "\n";
    if (!f) throw IoError("write failed for " + path);
}

ResultsTable read_results_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != results_csv_header()) throw IoError(path + ": unexpected header '" + line + "'");
    ResultsTable table;
    size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        table.rows.push_back(parse_csv_line(line, line_no));
    }
    return table;
}

void write_results_markdown(const std::string& path, const ResultsTable& table) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "# Results\n\n";
    const auto aggs = aggregate(table);
    f << "## Aggregates (unweighted mean over datasets)\n\n";
    f << "| family | mode | lr | n_kernels | k | avg_max_acc | avg_min_loss_acc | datasets |\n";
    f << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& a : aggs) {
        f << "| " << a.family << " | " << a.mode << " | " << format_g6(a.lr) << " | "
          << (a.n_kernels > 0 ? std::to_string(a.n_kernels) : "-") << " | "
          << (a.k > 0 ? std::to_string(a.k) : "-") << " | " << format_g6(a.avg_max_acc) << " | "
          << format_g6(a.avg_min_loss_acc) << " | " << a.n_datasets << " |\n";
    }
    f << "\n## Runs\n\n";
    f << "| dataset | family | mode | lr | n_kernels | k | seed | max_test_acc | min_loss_acc | "
         "epochs | status |\n";
    f << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : table.rows) {
        f << "| " << r.dataset << " | " << r.family << " | " << r.mode << " | " << format_g6(r.lr)
          << " | " << (r.n_kernels > 0 ? std::to_string(r.n_kernels) : "-") << " | "
          << (r.k > 0 ? std::to_string(r.k) : "-") << " | " << r.seed << " | "
          << format_g6(r.max_test_acc) << " | " << format_g6(r.min_loss_acc) << " | " << r.epochs
          << " | " << r.status << " |\n";
    }
}

uint64_t derive_run_seed(uint64_t master, const std::string& dataset, const std::string& family,
                         const std::string& mode) {
    uint64_t h = fnv1a64(&master, sizeof(master));
    h = fnv1a64(dataset.data(), dataset.size(), h);
    h = fnv1a64("|", 1, h);
    h = fnv1a64(family.data(), family.size(), h);
    h = fnv1a64("|", 1, h);
    h = fnv1a64(mode.data(), mode.size(), h);
    return h;
}

std::string resolve_split_path(const std::string& data_dir, const std::string& name, bool train) {
    const std::string tag = train ? "_TRAIN" : "_TEST";
    std::vector<std::string> candidates;
    for (const char* ext : {".tsv", ".txt", ".csv", ""}) {
        candidates.push_back(data_dir + "/" + name + "/" + name + tag + ext);
        candidates.push_back(data_dir + "/" + name + tag + ext);
    }
    for (const auto& c : candidates)
        if (fs::exists(c)) return c;
    std::string msg = "no split file found for dataset " + name + "; tried:";
    for (const auto& c : candidates) msg += " " + c;
    throw DataError(msg);
}

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::pair<Dataset, Dataset> load_pair(const ExperimentSpec& spec, const std::string& name) {
    Dataset train =
        load_ucr_split(resolve_split_path(spec.data_dir, name, true), name, "train");
    Dataset test = load_ucr_split(resolve_split_path(spec.data_dir, name, false), name, "test",
                                  &train.label_map);
    if (spec.znorm) {
        train = znormalize(train);
        test = znormalize(test);
    }
    return {std::move(train), std::move(test)};
}

void write_curve(const ExperimentSpec& spec, const ResultRow& row, const RunResult& result) {
    const std::string dir = spec.out_dir + "/curves";
    ensure_dir(dir);
    std::string stem = row.key();
    for (char& c : stem)
        if (c == '|') c = '_';
    std::ofstream f(dir + "/" + stem + ".csv", std::ios::trunc);
    f << "epoch,train_loss,test_acc\n";
    for (const auto& rec : result.curve)
        f << rec.epoch << "," << format_g6(rec.train_loss) << "," << format_g6(rec.test_acc)
          << "\n";
}

ResultRow execute_run(const ExperimentSpec& spec, const RunJob& job,
                      const std::shared_ptr<const FrozenBackbone<float>>& backbone) {
    ResultRow row;
    row.dataset = job.dataset;
    row.family = job.family;
    row.mode = job.mode;
    row.lr = job.lr;
    row.n_kernels = job.family == "inception"
                        ? (job.n_kernels > 0 ? job.n_kernels : spec.encoder.n_kernels)
                        : 0;
    row.k = job.family == "inception" ? (job.k > 0 ? job.k : spec.encoder.kernel_size) : 0;
    row.seed = derive_run_seed(spec.seed, job.dataset, job.family, job.mode);
    try {
        auto [train, test] = load_pair(spec, job.dataset);

        EncoderConfig enc = spec.encoder;
        enc.family = job.family;
        if (job.family == "inception") {
            if (row.n_kernels > 0) enc.n_kernels = row.n_kernels;
            if (row.k > 0) enc.kernel_size = row.k;
        }

        TrainConfig tc = spec.train;
        tc.lr = job.lr;
        tc.seed = row.seed;

        std::unique_ptr<ClassifierModel<float>> model;
        if (job.mode == "hybrid") {
            model = std::make_unique<HybridModel<float>>(enc, backbone, train.series_length,
                                                         train.channels, train.num_classes,
                                                         row.seed);
        } else if (job.mode == "plain") {
            model = std::make_unique<PlainModel<float>>(enc, train.series_length, train.channels,
                                                        train.num_classes, row.seed);
        } else {
            throw ConfigError("unknown mode '" + job.mode + "'");
        }

        const RunResult result = train_run(*model, train, test, tc);
        row.max_test_acc = result.max_test_acc;
        row.min_loss_acc = result.min_loss_acc;
        row.epochs = static_cast<int64_t>(result.curve.size());
        row.wall_s = result.wall_s;
        row.status = "ok";
        if (spec.write_curves) write_curve(spec, row, result);
    } catch (const std::exception& e) {
        row.status = sanitize_status(std::string("error: ") + e.what());
    }
    return row;
}

ResultsTable run_jobs(const ExperimentSpec& spec, const std::vector<RunJob>& jobs) {
    ensure_dir(spec.out_dir);
    const std::string csv_path = spec.out_dir + "/results.csv";

    ResultsTable table;
    if (fs::exists(csv_path)) table = read_results_csv(csv_path);

    // Completed keys are skipped so an interrupted matrix resumes.
    std::vector<RunJob> pending;
    for (const auto& job : jobs) {
        ResultRow probe;
        probe.dataset = job.dataset;
        probe.family = job.family;
        probe.mode = job.mode;
        probe.lr = job.lr;
        probe.n_kernels = job.family == "inception"
                              ? (job.n_kernels > 0 ? job.n_kernels : spec.encoder.n_kernels)
                              : 0;
        probe.k = job.family == "inception" ? (job.k > 0 ? job.k : spec.encoder.kernel_size) : 0;
        probe.seed = derive_run_seed(spec.seed, job.dataset, job.family, job.mode);
        if (!table.has(probe.key())) pending.push_back(job);
    }

    std::shared_ptr<const FrozenBackbone<float>> backbone;
    bool needs_backbone = false;
    for (const auto& job : pending)
        if (job.mode == "hybrid") needs_backbone = true;
    if (needs_backbone) {
        BackboneConfig bb = spec.backbone;
        bb.hidden = spec.encoder.hidden_width;
        bb.seed = spec.seed;
        backbone = std::make_shared<FrozenBackbone<float>>(bb);
    }

    std::ofstream app(csv_path, std::ios::app);
    if (!app) throw IoError("cannot open " + csv_path + " for append");
    if (table.rows.empty() && fs::file_size(csv_path) == 0) {
        app << results_csv_header() << "\n";
        app.flush();
    }

    std::mutex mu;
    std::atomic<size_t> next{0};
    const int64_t workers =
        std::max<int64_t>(1, std::min<int64_t>(spec.threads, static_cast<int64_t>(pending.size())));

    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= pending.size()) break;
            ResultRow row = execute_run(spec, pending[i], backbone);
            std::lock_guard<std::mutex> lock(mu);
            table.rows.push_back(row);
            app << to_csv_line(row) << "\n";
            app.flush();
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int64_t i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    app.close();

    emit_reports(table, spec.out_dir);
    return table;
}

}  // namespace

ResultsTable run_matrix(const ExperimentSpec& spec) {
    if (spec.datasets.empty()) throw ConfigError("experiment spec: no datasets given");
    std::vector<std::string> datasets = spec.datasets, families = spec.families,
                             modes = spec.modes;
    std::sort(datasets.begin(), datasets.end());
    std::sort(families.begin(), families.end());
    std::sort(modes.begin(), modes.end());
    std::vector<RunJob> jobs;
    for (const auto& ds : datasets)
        for (const auto& fam : families)
            for (const auto& mode : modes)
                jobs.push_back({ds, fam, mode, spec.train.lr, 0, 0});
    return run_jobs(spec, jobs);
}

std::vector<GridConfig> grid_configs(const ExperimentSpec& spec) {
    if (spec.grid_lrs.empty() || spec.grid_n_kernels.empty() || spec.grid_ks.empty())
        throw ConfigError("experiment spec: grid axes must be non-empty");
    std::vector<double> lrs = spec.grid_lrs;
    std::vector<int64_t> ns = spec.grid_n_kernels, ks = spec.grid_ks;
    std::sort(lrs.begin(), lrs.end());
    std::sort(ns.begin(), ns.end());
    std::sort(ks.begin(), ks.end());
    std::vector<GridConfig> out;
    for (double lr : lrs)
        for (int64_t n : ns)
            for (int64_t k : ks) out.push_back({lr, n, k});
    return out;
}

ResultsTable grid_search(const ExperimentSpec& spec) {
    if (spec.datasets.empty()) throw ConfigError("experiment spec: no datasets given");
    const std::string mode = spec.modes.empty() ? "hybrid" : spec.modes.front();

    std::vector<std::string> datasets = spec.datasets;
    std::sort(datasets.begin(), datasets.end());

    std::vector<RunJob> jobs;
    for (const GridConfig& gc : grid_configs(spec))
        for (const auto& ds : datasets)
            jobs.push_back({ds, "inception", mode, gc.lr, gc.n_kernels, gc.k});
    return run_jobs(spec, jobs);
}

void emit_reports(const ResultsTable& table, const std::string& out_dir) {
    ensure_dir(out_dir);
    ResultsTable sorted = table;
    sorted.sort_canonical();
    write_results_csv(out_dir + "/results.csv", sorted);
    write_results_markdown(out_dir + "/results.md", sorted);
}

}  // namespace tsc
