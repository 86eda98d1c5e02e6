#include "mixedsde/kernel.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "mixedsde/csv.hpp"
#include "mixedsde/errors.hpp"
#include "mixedsde/parallel.hpp"
#include "mixedsde/version.hpp"

namespace mixedsde {

namespace {

inline double signed_pow(double u, double p) { return std::copysign(std::pow(std::abs(u), p), u); }

// Closed-form product-integration weights over one interval [a, b] for the
// kernel H*alpha*|s-r|^{alpha-1}: returns the coefficients of the integrand
// values at the left and right interval endpoints (linear interpolation in
// between). Exact for any position of the collocation point s, including the
// singular cases s == a or s == b.
struct IntervalWeights {
    double left;
    double right;
};

IntervalWeights product_weights(double s, double a, double b, double hurst, double alpha) {
    const double fb = signed_pow(b - s, alpha);
    const double fa = signed_pow(a - s, alpha);
    const double i0 = hurst * (fb - fa);
    const double i1 = hurst * s * (fb - fa) +
                      hurst * alpha / (alpha + 1.0) *
                          (std::pow(std::abs(b - s), alpha + 1.0) - std::pow(std::abs(a - s), alpha + 1.0));
    const double width = b - a;
    return {(b * i0 - i1) / width, (i1 - a * i0) / width};
}

double trapezoid_row(std::span<const double> row, double dt) {
    const std::size_t k = row.size() - 1;
    double acc = 0.5 * (row[0] + row[k]);
    for (std::size_t j = 1; j < k; ++j) acc += row[j];
    return acc * dt;
}

}  // namespace

double KernelTable::bracket(int k) const {
    if (k < 1 || k > n_steps()) throw std::invalid_argument("KernelTable::bracket: index out of range");
    return w_[static_cast<std::size_t>(k)];
}

KernelTable KernelTable::solve(const TimeGrid& grid, double hurst, const KernelSolverConfig& config) {
    if (!(hurst >= 0.5 && hurst < 1.0))
        throw std::invalid_argument("KernelTable: H must lie in [1/2, 1), got " + format_g17(hurst));
    const int n = grid.n_steps();
    if (n > config.warn_steps)
        std::fprintf(stderr, "warning: kernel solve with n=%d exceeds the soft cap %d (cost grows like n^4)\n", n,
                     config.warn_steps);

    KernelTable table;
    table.grid_ = grid;
    table.hurst_ = hurst;
    table.tolerance_ = config.tolerance;
    table.rows_.resize(static_cast<std::size_t>(n) + 1);
    table.w_.assign(static_cast<std::size_t>(n) + 1, 0.0);

    if (hurst == 0.5) {
        for (int k = 1; k <= n; ++k) {
            table.rows_[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(k) + 1, 0.5);
            table.w_[static_cast<std::size_t>(k)] = trapezoid_row(table.rows_[static_cast<std::size_t>(k)], grid.dt());
        }
        table.residual_norm_ = 0.0;
        return table;
    }

    const double alpha = 2 * hurst - 1;
    const auto& t = grid.points();
    std::vector<double> row_residual(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> row_failed(static_cast<std::size_t>(n) + 1, 0);

    parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t idx) {
        const int k = static_cast<int>(idx) + 1;
        const int m = k + 1;  // nodes 0..k
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
        for (int i = 0; i < m; ++i) {
            const double s = t[static_cast<std::size_t>(i)];
            for (int interval = 0; interval < k; ++interval) {
                const auto wts = product_weights(s, t[static_cast<std::size_t>(interval)],
                                                 t[static_cast<std::size_t>(interval) + 1], hurst, alpha);
                a(i, interval) += wts.left;
                a(i, interval + 1) += wts.right;
            }
        }
        const Eigen::VectorXd rhs = Eigen::VectorXd::Ones(m);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
        const Eigen::VectorXd g = lu.solve(rhs);
        const double resid = (a * g - rhs).lpNorm<Eigen::Infinity>();
        row_residual[static_cast<std::size_t>(k)] = resid;
        if (!g.allFinite()) {
            row_failed[static_cast<std::size_t>(k)] = 1;
            return;
        }
        auto& row = table.rows_[static_cast<std::size_t>(k)];
        row.assign(g.data(), g.data() + m);
        table.w_[static_cast<std::size_t>(k)] = trapezoid_row(row, grid.dt());
    });

    for (int k = 1; k <= n; ++k) {
        if (row_failed[static_cast<std::size_t>(k)])
            throw NumericalError("kernel solve singular at t_k=" + format_g17(t[static_cast<std::size_t>(k)]));
        if (row_residual[static_cast<std::size_t>(k)] > config.tolerance)
            throw NumericalError("kernel residual " + format_g17(row_residual[static_cast<std::size_t>(k)]) +
                                 " above tolerance at t_k=" + format_g17(t[static_cast<std::size_t>(k)]));
        table.residual_norm_ = std::max(table.residual_norm_, row_residual[static_cast<std::size_t>(k)]);
        if (!(table.w_[static_cast<std::size_t>(k)] > table.w_[static_cast<std::size_t>(k) - 1]))
            throw NumericalError("bracket w not strictly increasing at t_k=" +
                                 format_g17(t[static_cast<std::size_t>(k)]));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Cache round trip

namespace {
constexpr char kMagic[8] = {'M', 'S', 'D', 'E', 'K', 'T', 'B', 'L'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError(path + ": truncated kernel cache file");
    return v;
}
}  // namespace

void KernelTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open kernel cache for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    put(out, static_cast<std::int32_t>(kFileFormatVersion));
    put(out, static_cast<std::int32_t>(kKernelSolverVersion));
    put(out, grid_.horizon());
    put(out, static_cast<std::int32_t>(grid_.n_steps()));
    put(out, hurst_);
    put(out, tolerance_);
    put(out, residual_norm_);
    const int n = grid_.n_steps();
    out.write(reinterpret_cast<const char*>(w_.data()), static_cast<std::streamsize>(w_.size() * sizeof(double)));
    for (int k = 1; k <= n; ++k) {
        const auto& row = rows_[static_cast<std::size_t>(k)];
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    out.flush();
    if (!out) throw DataError("write failed: " + path);
}

KernelTable KernelTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open kernel cache: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError(path + ": not a kernel cache file");
    const auto format = get<std::int32_t>(in, path);
    const auto solver = get<std::int32_t>(in, path);
    if (format != kFileFormatVersion || solver != kKernelSolverVersion)
        throw DataError(path + ": kernel cache version mismatch");
    const double horizon = get<double>(in, path);
    const auto n = get<std::int32_t>(in, path);
    if (n < 1 || n > (1 << 20)) throw DataError(path + ": implausible step count");

    KernelTable table;
    table.grid_ = TimeGrid(horizon, n);
    table.hurst_ = get<double>(in, path);
    table.tolerance_ = get<double>(in, path);
    table.residual_norm_ = get<double>(in, path);
    table.w_.resize(static_cast<std::size_t>(n) + 1);
    in.read(reinterpret_cast<char*>(table.w_.data()), static_cast<std::streamsize>(table.w_.size() * sizeof(double)));
    table.rows_.resize(static_cast<std::size_t>(n) + 1);
    for (int k = 1; k <= n; ++k) {
        auto& row = table.rows_[static_cast<std::size_t>(k)];
        row.resize(static_cast<std::size_t>(k) + 1);
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!in) throw DataError(path + ": truncated kernel cache file");
    return table;
}

std::string KernelTable::cache_key(double horizon, int n_steps, double hurst, double tolerance) {
    const std::string canon = format_g17(horizon) + "|" + std::to_string(n_steps) + "|" + format_g17(hurst) + "|" +
                              format_g17(tolerance) + "|solver" + std::to_string(kKernelSolverVersion);
    // FNV-1a 64-bit
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("kernel-") + buf;
}

std::string KernelTable::cache_key() const {
    return cache_key(grid_.horizon(), grid_.n_steps(), hurst_, tolerance_);
}

}  // namespace mixedsde
