#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tsc/experiment.hpp"

namespace {

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    for (const auto& s : split_list(csv)) out.push_back(std::stod(s));
    return out;
}

std::vector<int64_t> parse_ints(const std::string& csv) {
    std::vector<int64_t> out;
    for (const auto& s : split_list(csv)) out.push_back(std::stoll(s));
    return out;
}

void add_common_flags(CLI::App* cmd, tsc::ExperimentSpec& spec, std::string& datasets) {
    cmd->add_option("--data-dir", spec.data_dir, "Directory holding <name>_TRAIN/_TEST files")
        ->required();
    cmd->add_option("--datasets", datasets, "Comma-separated dataset names")->required();
    cmd->add_option("--epochs", spec.train.epochs, "Training epochs per run");
    cmd->add_option("--batch-size", spec.train.batch_size, "Mini-batch size");
    cmd->add_option("--seed", spec.seed, "Master seed; per-run seeds derive from it");
    cmd->add_option("--hidden", spec.encoder.hidden_width, "Latent width h");
    cmd->add_option("--out", spec.out_dir, "Output directory for results.csv/results.md");
    cmd->add_option("--threads", spec.threads, "Parallel runs")->envname("TSC_THREADS");
    cmd->add_flag_callback(
        "--no-znorm", [&spec] { spec.znorm = false; }, "Skip per-series z-normalization");
    cmd->add_flag("--curves", spec.write_curves, "Write per-epoch curve CSVs");
    cmd->add_option("--backbone-layers", spec.backbone.layers, "Frozen backbone depth");
    cmd->add_option("--prompt-tokens", spec.backbone.prompt_tokens, "Prompt positions P");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-series classification experiments: trainable encoders with an optional "
                 "frozen transformer backbone"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key=value config file mirroring the flags");

    tsc::ExperimentSpec spec;
    std::string datasets, families = "mlp,cnn,resnet,inception,transformer", mode = "plain";

    CLI::App* run = app.add_subcommand("run", "Run the family x mode x dataset matrix");
    add_common_flags(run, spec, datasets);
    run->add_option("--encoder,--encoders", families,
                    "Comma-separated encoder families (mlp,cnn,resnet,inception,transformer)");
    run->add_option("--mode", mode, "plain, hybrid, or both")
        ->check(CLI::IsMember({"plain", "hybrid", "both"}));
    run->add_option("--lr", spec.train.lr, "Learning rate");
    run->add_option("--nkernels", spec.encoder.n_kernels, "Inception branch count");
    run->add_option("--ksize", spec.encoder.kernel_size, "Inception base kernel size K");

    std::string lrs = "1e-3,1e-4,1e-5", nkernels = "3,4,5,6", ksizes = "8,16";
    std::string grid_mode = "hybrid";
    CLI::App* grid = app.add_subcommand("grid", "Inception lr x N_kernels x K grid search");
    add_common_flags(grid, spec, datasets);
    grid->add_option("--lrs", lrs, "Comma-separated learning rates");
    grid->add_option("--nkernels", nkernels, "Comma-separated branch counts");
    grid->add_option("--ksizes", ksizes, "Comma-separated base kernel sizes");
    grid->add_option("--mode", grid_mode, "plain or hybrid")
        ->check(CLI::IsMember({"plain", "hybrid"}));

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "Rebuild results.md from results.csv");
    report->add_option("--in", report_dir, "Directory containing results.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            spec.datasets = split_list(datasets);
            spec.families = split_list(families);
            spec.modes = mode == "both" ? std::vector<std::string>{"plain", "hybrid"}
                                        : std::vector<std::string>{mode};
            tsc::run_matrix(spec);
            std::cout << "wrote " << spec.out_dir << "/results.csv\n";
        } else if (grid->parsed()) {
            spec.datasets = split_list(datasets);
            spec.modes = {grid_mode};
            spec.grid_lrs = parse_doubles(lrs);
            spec.grid_n_kernels = parse_ints(nkernels);
            spec.grid_ks = parse_ints(ksizes);
            tsc::grid_search(spec);
            std::cout << "wrote " << spec.out_dir << "/results.csv\n";
        } else if (report->parsed()) {
            const tsc::ResultsTable table = tsc::read_results_csv(report_dir + "/results.csv");
            tsc::emit_reports(table, report_dir);
            std::ifstream md(report_dir + "/results.md");
            std::cout << md.rdbuf();
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
