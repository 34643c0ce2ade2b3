#include "brc/common.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace brc {

std::string to_hex(uint64_t v) {
    char buf[19] = "0x";
    for (int i = 15; i >= 0; --i) {
        buf[2 + (15 - i)] = "0123456789abcdef"[(v >> (4 * i)) & 0xf];
    }
    buf[18] = '\0';
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw NumericError("format_double: to_chars failed");
    return std::string(buf, ptr);
}

double GaussianRng::uniform01() {
    // (0, 1), never exactly 0 so log() below is safe
    return (static_cast<double>(engine_()) + 0.5) / 4294967296.0;
}

double GaussianRng::next() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

void deterministic_shuffle(std::vector<int>& values, uint32_t seed) {
    std::mt19937 engine(seed);
    for (size_t i = values.size(); i > 1; --i) {
        const uint64_t bound = i;
        // rejection sampling keeps the draw unbiased
        const uint64_t limit = (0x100000000ull / bound) * bound;
        uint64_t x;
        do {
            x = engine();
        } while (x >= limit);
        std::swap(values[i - 1], values[x % bound]);
    }
}

}  // namespace brc
