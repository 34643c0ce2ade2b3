#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace brc {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorF = Eigen::VectorXf;
using TokenId = int32_t;

/// Invalid run configuration (CLI flags, sweep parameters). CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad input data: missing/malformed files, schema or shape violations. CLI exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values encountered while computing. CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for input fingerprints. Stable across platforms.
class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ull;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    template <typename T>
    void update_value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        update(&v, sizeof(v));
    }
    uint64_t digest() const { return state_; }

private:
    uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string to_hex(uint64_t v);

/// Shortest round-trip decimal formatting (std::to_chars), so emitted
/// artifacts are byte-stable.
std::string format_double(double v);

/// Deterministic Gaussian stream: mt19937 + explicit Box-Muller, so samples
/// do not depend on the standard library's distribution internals.
class GaussianRng {
public:
    explicit GaussianRng(uint32_t seed) : engine_(seed) {}
    double next();

private:
    double uniform01();
    std::mt19937 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Fisher-Yates with explicit modulo-rejection draws; std::shuffle is
/// implementation-defined and would break cross-platform reproducibility.
void deterministic_shuffle(std::vector<int>& values, uint32_t seed);

}  // namespace brc
