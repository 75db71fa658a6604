#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "tsc/adam.hpp"
#include "tsc/backbone.hpp"
#include "tsc/dataset.hpp"

namespace tsc {

struct TrainConfig {
    double lr = 1e-3;
    int64_t epochs = 100;
    int64_t batch_size = 32;
    uint64_t seed = 0;
};

struct EpochRecord {
    int64_t epoch = 0;      // 0-based
    double train_loss = 0;  // sample-weighted mean over the epoch
    double test_acc = 0;
};

struct RunResult {
    std::vector<EpochRecord> curve;
    double max_test_acc = 0;
    double min_loss_acc = 0;  // test accuracy at the earliest minimum-train-loss epoch
    double wall_s = 0;
    TrainConfig config;
};

// (max_test_acc, min_loss_acc) from a training curve.
inline std::pair<double, double> compute_metrics(const std::vector<EpochRecord>& curve) {
    if (curve.empty()) throw TrainError("compute_metrics: empty curve");
    double max_acc = curve.front().test_acc;
    double min_loss = curve.front().train_loss;
    double min_loss_acc = curve.front().test_acc;
    for (const auto& rec : curve) {
        max_acc = std::max(max_acc, rec.test_acc);
        if (rec.train_loss < min_loss) {
            min_loss = rec.train_loss;
            min_loss_acc = rec.test_acc;
        }
    }
    return {max_acc, min_loss_acc};
}

// Fraction of samples whose argmax logit matches the label. Eval mode, no
// tape; invariant to the order of the test set.
template <typename S>
double evaluate(ClassifierModel<S>& model, const Dataset& ds, int64_t batch_size = 64) {
    BatchIterator it(ds, batch_size, /*shuffle=*/false, /*seed=*/0);
    Tensor<S> values;
    std::vector<int64_t> labels;
    int64_t correct = 0;
    while (it.next(values, labels)) {
        const auto pred = argmax_rows(model.logits(values, /*training=*/false));
        for (size_t i = 0; i < labels.size(); ++i)
            if (pred[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

using EpochCallback = std::function<bool(const EpochRecord&)>;

// The training protocol: per epoch, reshuffle, step Adam on softmax cross
// entropy per batch, record the mean train loss, then evaluate the full test
// split. `on_epoch`, when given, observes each record; returning false ends
// the run after that epoch (the protocol itself never stops early).
template <typename S>
RunResult train_run(ClassifierModel<S>& model, const Dataset& train, const Dataset& test,
                    const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    if (cfg.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (!(cfg.lr > 0)) throw ConfigError("train config: lr must be > 0");
    if (train.num_classes != test.num_classes || train.series_length != test.series_length ||
        train.channels != test.channels)
        throw DataError("train/test splits disagree: train C=" +
                        std::to_string(train.num_classes) + " T=" +
                        std::to_string(train.series_length) + " d=" +
                        std::to_string(train.channels) + ", test C=" +
                        std::to_string(test.num_classes) + " T=" +
                        std::to_string(test.series_length) + " d=" +
                        std::to_string(test.channels));

    const auto t0 = std::chrono::steady_clock::now();
    Adam<S> opt(model.trainable_params(), cfg.lr);
    RunResult result;
    result.config = cfg;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        BatchIterator it(train, cfg.batch_size, /*shuffle=*/true,
                         mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        Tensor<S> values;
        std::vector<int64_t> labels;
        double loss_sum = 0.0;
        int64_t batch_idx = 0;
        while (it.next(values, labels)) {
            double batch_loss;
            {
                GradientTape<S> tape;
                Tensor<S> loss =
                    softmax_cross_entropy(model.logits(values, /*training=*/true), labels);
                batch_loss = static_cast<double>(loss.item());
                if (!std::isfinite(batch_loss))
                    throw TrainError("non-finite training loss at epoch " +
                                     std::to_string(epoch) + " batch " +
                                     std::to_string(batch_idx));
                tape.backward(loss);
            }
            opt.step();
            opt.zero_grad();
            loss_sum += batch_loss * static_cast<double>(labels.size());
            ++batch_idx;
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        rec.test_acc = evaluate(model, test);
        result.curve.push_back(rec);
        if (on_epoch && !on_epoch(rec)) break;
    }

    std::tie(result.max_test_acc, result.min_loss_acc) = compute_metrics(result.curve);
    result.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace tsc
