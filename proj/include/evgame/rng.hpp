#pragma once

#include <cstdint>
#include <random>

namespace evgame {

// Deterministic draws for instance generation. std::mt19937_64 output is
// pinned by the C++ standard; the [0,1) mapping is spelled out here instead
// of using std::uniform_real_distribution (whose results are
// implementation-defined). Scenario files record the algorithm name so an
// instance can be regenerated bit-exactly elsewhere.
class SeededRng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64/u53-v1";

    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0,1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        int span = hi - lo + 1;
        int k = static_cast<int>(uniform01() * span);
        if (k >= span) k = span - 1;
        return lo + k;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace evgame
