#include "mixedsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace mixedsde {

namespace {
constexpr std::uint32_t lo32(std::uint64_t x) { return static_cast<std::uint32_t>(x); }
constexpr std::uint32_t hi32(std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); }
}  // namespace

RngStream::RngStream(StreamKey key, Stream kind, std::uint64_t subject) {
    std::seed_seq seq{lo32(key.seed),      hi32(key.seed),    static_cast<std::uint32_t>(kind),
                      lo32(key.replicate), hi32(key.replicate),
                      lo32(subject),       hi32(subject)};
    engine_.seed(seq);
}

double RngStream::uniform01() {
    // top 53 bits, offset by half an ulp so 0 is never returned
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform01()));
    const double a = 2.0 * std::numbers::pi * uniform01();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

}  // namespace mixedsde
