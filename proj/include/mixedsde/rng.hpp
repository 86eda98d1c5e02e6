#pragma once

#include <cstdint>
#include <random>

namespace mixedsde {

/// Purpose tag of a random sub-stream. Each (seed, kind, replicate, subject)
/// tuple names an independent stream, so parallel and serial runs draw the
/// same numbers regardless of schedule.
enum class Stream : std::uint32_t {
    Brownian = 1,    // standard Brownian driver increments
    Fractional = 2,  // fractional Gaussian noise increments
    Effects = 3,     // latent random effects
    Score = 4,       // Fisher-information replicates
    Aux = 5,         // anything else (tests, diagnostics)
};

/// (seed, replicate) pair identifying the stream space of one run unit.
/// Replicate 0 is reserved for standalone panels and limit estimation.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
};

/// Deterministic random stream. The engine is an mt19937_64 seeded through
/// std::seed_seq from the full (seed, kind, replicate, subject) tuple; both
/// pieces are pinned by the C++ standard, so identical keys reproduce the
/// stream bit-for-bit. Normals come from an internal Box-Muller transform
/// rather than std::normal_distribution, which is implementation-defined.
class RngStream {
  public:
    RngStream(StreamKey key, Stream kind, std::uint64_t subject = 0);

    /// Uniform draw in the open interval (0, 1), 53-bit resolution.
    double uniform01();

    /// Standard normal draw.
    double normal();

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mixedsde
