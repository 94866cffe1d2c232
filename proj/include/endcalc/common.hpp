#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace endcalc {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Evaluation hit a pole, a log of a nonpositive real, or similar.
struct EvalError : Error {
    std::string where;  // textual form of the offending node or sample location
    EvalError(const std::string& msg, std::string where_)
        : Error(msg + " at " + where_), where(std::move(where_)) {}
};

struct DiffError : Error {
    using Error::Error;
};

struct GridError : Error {
    using Error::Error;
};

struct EllipticityError : Error {
    using Error::Error;
};

struct SeriesError : Error {
    int achieved_n = -1;
    SeriesError(const std::string& msg, int achieved) : Error(msg), achieved_n(achieved) {}
};

// ---------------------------------------------------------------------------
// Threading

/// Number of worker threads; capped by the ENDCALC_THREADS environment variable.
int thread_count();

/// Runs fn(i) for i in [0, n) split over worker threads. fn must be safe to
/// call concurrently for distinct i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Small numerics

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // RMS of fit residuals
};

/// Least-squares line through (x_i, y_i).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Splitmix-style deterministic RNG; identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
    std::uint64_t next_u64() {
        std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ull);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }
    /// uniform in [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
    /// uniform in [-1, 1)
    double next_sym() { return 2.0 * next_double() - 1.0; }
    Complex next_complex() { return Complex(next_sym(), next_sym()); }

  private:
    std::uint64_t state_;
};

std::string format_double(double v);   // shortest round-trippable decimal
std::string format_complex(Complex v);

}  // namespace endcalc
