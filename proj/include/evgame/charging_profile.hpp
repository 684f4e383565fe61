#pragma once

#include <vector>

namespace evgame {

// Per-slot grid energy drawn by one aggregator over its charging window
// [start, T]. values[k] belongs to slot start + k (slots are 1-based).
struct ChargingProfile {
    int start = 1;
    std::vector<double> values;

    int window() const { return static_cast<int>(values.size()); }
    int end_slot() const { return start + window() - 1; }
    double total() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
};

}  // namespace evgame
