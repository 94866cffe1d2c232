#include "endcalc/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace endcalc {

int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("ENDCALC_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? int(hc) : 1;
    }();
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const int workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit out;
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) {
        out.intercept = n == 1 ? y[0] : 0.0;
        return out;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double d = double(n) * sxx - sx * sx;
    out.slope = (double(n) * sxy - sx * sy) / d;
    out.intercept = (sy - out.slope * sx) / double(n);
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (out.slope * x[i] + out.intercept);
        rss += e * e;
    }
    out.residual = std::sqrt(rss / double(n));
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = std::strtod(buf, nullptr);
    if (back == v) {
        // try shorter representations
        for (int prec = 1; prec <= 16; ++prec) {
            char b2[64];
            std::snprintf(b2, sizeof b2, "%.*g", prec, v);
            if (std::strtod(b2, nullptr) == v) return b2;
        }
    }
    return buf;
}

std::string format_complex(Complex v) {
    if (v.imag() == 0.0) return format_double(v.real());
    return format_double(v.real()) + (v.imag() < 0 ? "-" : "+") +
           format_double(std::abs(v.imag())) + "i";
}

}  // namespace endcalc
