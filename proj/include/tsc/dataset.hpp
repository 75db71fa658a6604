#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsc/common.hpp"
#include "tsc/tensor.hpp"

namespace tsc {

// One labeled series; values are T*d row-major (UCR data is univariate, d=1).
struct TimeSeriesSample {
    std::vector<float> values;
    int64_t label = 0;
};

struct Dataset {
    std::string name;
    std::string split;  // "train" or "test"
    std::vector<TimeSeriesSample> samples;
    int64_t num_classes = 0;
    int64_t series_length = 0;
    int64_t channels = 1;
    std::map<double, int64_t> label_map;  // original label -> class index

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

// Parses a UCR-format split: one sample per line, label first, then T values,
// tab- or comma-delimited (auto-detected). When label_map is given (loading a
// test split against its train split) it is applied instead of rebuilding;
// an unseen label is an error.
Dataset load_ucr_split(const std::string& path, const std::string& name = "",
                       const std::string& split = "train",
                       const std::map<double, int64_t>* label_map = nullptr);

// Per-series, per-channel z-normalization (population std). A series whose
// std falls below 1e-8 becomes all zeros.
Dataset znormalize(const Dataset& ds);

// Epoch batching: index batches in shuffled (seeded Fisher-Yates) or original
// order; the final batch may be short.
std::vector<std::vector<int64_t>> make_batches(int64_t n, int64_t batch_size, bool shuffle,
                                               uint64_t seed);

struct BatchIterator {
    BatchIterator(const Dataset& ds, int64_t batch_size, bool shuffle, uint64_t seed)
        : ds_(&ds), batches_(make_batches(ds.size(), batch_size, shuffle, seed)) {
        if (ds.samples.empty()) throw DataError("batch_iter: dataset " + ds.name + " is empty");
    }

    // Fills values [B,T,d] and labels [B]; returns false at end of epoch.
    template <typename S>
    bool next(Tensor<S>& values, std::vector<int64_t>& labels) {
        if (cursor_ >= batches_.size()) return false;
        const auto& idx = batches_[cursor_++];
        const int64_t b = static_cast<int64_t>(idx.size());
        const int64_t t = ds_->series_length, d = ds_->channels;
        values = Tensor<S>({b, t, d});
        labels.resize(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) {
            const auto& s = ds_->samples[static_cast<size_t>(idx[static_cast<size_t>(i)])];
            S* dst = values.data().data() + i * t * d;
            for (size_t j = 0; j < s.values.size(); ++j) dst[j] = static_cast<S>(s.values[j]);
            labels[static_cast<size_t>(i)] = s.label;
        }
        return true;
    }

    void reset() { cursor_ = 0; }
    size_t num_batches() const { return batches_.size(); }

private:
    const Dataset* ds_;
    std::vector<std::vector<int64_t>> batches_;
    size_t cursor_ = 0;
};

// Materializes the whole dataset as one [N,T,d] tensor plus labels.
template <typename S>
std::pair<Tensor<S>, std::vector<int64_t>> to_tensor(const Dataset& ds) {
    Tensor<S> values({ds.size(), ds.series_length, ds.channels});
    std::vector<int64_t> labels(ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        S* dst = values.data().data() +
                 static_cast<int64_t>(i) * ds.series_length * ds.channels;
        for (size_t j = 0; j < ds.samples[i].values.size(); ++j)
            dst[j] = static_cast<S>(ds.samples[i].values[j]);
        labels[i] = ds.samples[i].label;
    }
    return {std::move(values), std::move(labels)};
}

}  // namespace tsc
