#include "tsc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace tsc {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_number(const std::string& field, const std::string& path, size_t line_no) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin < end && (*begin == ' ')) ++begin;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw DataError(path + ":" + std::to_string(line_no) + ": unparsable number '" + field +
                        "'");
    if (!std::isfinite(v))
        throw DataError(path + ":" + std::to_string(line_no) + ": non-finite value '" + field +
                        "'");
    return v;
}

}  // namespace

Dataset load_ucr_split(const std::string& path, const std::string& name, const std::string& split,
                       const std::map<double, int64_t>* label_map) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset file " + path);

    Dataset ds;
    ds.name = name.empty() ? path : name;
    ds.split = split;

    std::vector<double> raw_labels;
    std::string line;
    size_t line_no = 0;
    char delim = '\0';
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (delim == '\0') delim = line.find('\t') != std::string::npos ? '\t' : ',';
        const auto fields = split_fields(line, delim);
        if (fields.size() < 2)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected a label and at least one value");
        const int64_t t = static_cast<int64_t>(fields.size()) - 1;
        if (ds.series_length == 0)
            ds.series_length = t;
        else if (t != ds.series_length)
            throw DataError(path + ":" + std::to_string(line_no) + ": ragged row, " +
                            std::to_string(t) + " values where " +
                            std::to_string(ds.series_length) + " expected");
        raw_labels.push_back(parse_number(fields[0], path, line_no));
        TimeSeriesSample s;
        s.values.resize(static_cast<size_t>(t));
        for (int64_t i = 0; i < t; ++i)
            s.values[static_cast<size_t>(i)] =
                static_cast<float>(parse_number(fields[static_cast<size_t>(i) + 1], path, line_no));
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError("dataset file " + path + " has no samples");

    if (label_map) {
        ds.label_map = *label_map;
    } else {
        std::set<double> distinct(raw_labels.begin(), raw_labels.end());
        int64_t next = 0;
        for (double l : distinct) ds.label_map[l] = next++;
    }
    ds.num_classes = static_cast<int64_t>(ds.label_map.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const auto it = ds.label_map.find(raw_labels[i]);
        if (it == ds.label_map.end()) {
            std::ostringstream msg;
            msg << path << ": label " << raw_labels[i] << " at sample " << (i + 1)
                << " not present in the training split's label map";
            throw DataError(msg.str());
        }
        ds.samples[i].label = it->second;
    }
    return ds;
}

Dataset znormalize(const Dataset& ds) {
    Dataset out = ds;
    const int64_t t = ds.series_length, d = ds.channels;
    for (auto& s : out.samples) {
        for (int64_t c = 0; c < d; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < t; ++i) {
                const double v = s.values[static_cast<size_t>(i * d + c)];
                sum += v;
                sq += v * v;
            }
            const double mean = sum / t;
            double var = sq / t - mean * mean;
            if (var < 0.0) var = 0.0;
            const double std = std::sqrt(var);
            for (int64_t i = 0; i < t; ++i) {
                auto& v = s.values[static_cast<size_t>(i * d + c)];
                v = std < 1e-8 ? 0.0f : static_cast<float>((v - mean) / std);
            }
        }
    }
    return out;
}

std::vector<std::vector<int64_t>> make_batches(int64_t n, int64_t batch_size, bool shuffle,
                                               uint64_t seed) {
    if (batch_size < 1) throw DataError("batch size must be >= 1");
    std::vector<int64_t> order;
    if (shuffle) {
        order = permutation(n, seed);
    } else {
        order.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    }
    std::vector<std::vector<int64_t>> batches;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + stop);
    }
    return batches;
}

}  // namespace tsc
