#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "tsc/dataset.hpp"

namespace tsc {

namespace detail {

inline Dataset make_split(const std::string& name, const std::string& split, int64_t n,
                          int64_t num_classes, int64_t t,
                          const std::function<void(int64_t cls, Rng&, std::vector<float>&)>& gen,
                          Rng& rng) {
    Dataset ds;
    ds.name = name;
    ds.split = split;
    ds.num_classes = num_classes;
    ds.series_length = t;
    ds.channels = 1;
    for (int64_t c = 0; c < num_classes; ++c) ds.label_map[static_cast<double>(c)] = c;
    for (int64_t i = 0; i < n; ++i) {
        TimeSeriesSample s;
        s.label = i % num_classes;
        s.values.resize(static_cast<size_t>(t));
        gen(s.label, rng, s.values);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace detail

// Two easily separable classes: a sine of period 32 vs. period 8, additive
// Gaussian noise. Balanced splits, deterministic in the seed.
inline std::pair<Dataset, Dataset> make_sine_task(int64_t n_train = 200, int64_t n_test = 200,
                                                  int64_t t = 64, double sigma = 0.1,
                                                  uint64_t seed = 7) {
    constexpr double kTwoPi = 6.283185307179586477;
    Rng rng(seed);
    auto gen = [=](int64_t cls, Rng& r, std::vector<float>& out) {
        const double period = cls == 0 ? 32.0 : 8.0;
        for (size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<float>(std::sin(kTwoPi * static_cast<double>(i) / period) +
                                        sigma * r.normal());
    };
    Dataset train = detail::make_split("sine2", "train", n_train, 2, t, gen, rng);
    Dataset test = detail::make_split("sine2", "test", n_test, 2, t, gen, rng);
    return {std::move(train), std::move(test)};
}

// Three classes built from pairs of sinusoids at different scales with random
// per-sample phases: class 0 long periods (32, 16), class 1 short (8, 4),
// class 2 mixed (32, 8). Harder than the two-class task; phase randomness
// forces shift-invariant features.
inline std::pair<Dataset, Dataset> make_multiscale_task(int64_t n_train = 300,
                                                        int64_t n_test = 300, int64_t t = 64,
                                                        double sigma = 0.3, uint64_t seed = 7) {
    constexpr double kTwoPi = 6.283185307179586477;
    Rng rng(seed);
    auto gen = [=](int64_t cls, Rng& r, std::vector<float>& out) {
        static const double periods[3][2] = {{32.0, 16.0}, {8.0, 4.0}, {32.0, 8.0}};
        const double p1 = periods[cls][0], p2 = periods[cls][1];
        const double phi1 = r.uniform(0.0, kTwoPi), phi2 = r.uniform(0.0, kTwoPi);
        for (size_t i = 0; i < out.size(); ++i) {
            const double x = static_cast<double>(i);
            out[i] = static_cast<float>(std::sin(kTwoPi * x / p1 + phi1) +
                                        std::sin(kTwoPi * x / p2 + phi2) + sigma * r.normal());
        }
    };
    Dataset train = detail::make_split("multiscale3", "train", n_train, 3, t, gen, rng);
    Dataset test = detail::make_split("multiscale3", "test", n_test, 3, t, gen, rng);
    return {std::move(train), std::move(test)};
}

}  // namespace tsc
