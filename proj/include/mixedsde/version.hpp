#pragma once

namespace mixedsde {

inline constexpr const char* kVersion = "0.1.0";

// Bumping either value invalidates on-disk artifacts produced with the old one.
inline constexpr int kKernelSolverVersion = 1;
inline constexpr int kFileFormatVersion = 1;

}  // namespace mixedsde
