#include "endcalc/grid.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace endcalc {

namespace {
bool power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }
}  // namespace

std::shared_ptr<const Grid> Grid::make(double r_origin, double L_r, int n_r, int n_theta,
                                       double hbar, double eta_need) {
    if (!power_of_two(n_r) || !power_of_two(n_theta) || n_r < 8 || n_theta < 8)
        throw GridError("grid sizes must be powers of two, at least 8");
    if (!(L_r > 0.0) || !(hbar > 0.0)) throw GridError("grid needs L_r > 0 and hbar > 0");
    if (hbar * n_theta / 2.0 < eta_need - 1e-12)
        throw GridError("eta lattice too short: hbar*n_theta/2 = " +
                        format_double(hbar * n_theta / 2.0) + " < required " +
                        format_double(eta_need));
    Grid g;
    g.r_origin = r_origin;
    g.L_r = L_r;
    g.n_r = n_r;
    g.n_theta = n_theta;
    g.hbar = hbar;
    return std::make_shared<const Grid>(g);
}

double l2_norm(const HalfDensityField& u) {
    double s = 0.0;
    for (const Complex& c : u.v) s += std::norm(c);
    return std::sqrt(s * u.grid->cell());
}

Complex inner(const HalfDensityField& u, const HalfDensityField& w) {
    if (u.grid.get() != w.grid.get() &&
        (u.grid->n_r != w.grid->n_r || u.grid->n_theta != w.grid->n_theta ||
         u.grid->hbar != w.grid->hbar))
        throw GridError("inner: grid mismatch");
    Complex s(0.0, 0.0);
    for (std::size_t i = 0; i < u.v.size(); ++i) s += u.v[i] * std::conj(w.v[i]);
    return s * u.grid->cell();
}

HalfDensityField operator+(const HalfDensityField& a, const HalfDensityField& b) {
    HalfDensityField out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

HalfDensityField operator-(const HalfDensityField& a, const HalfDensityField& b) {
    HalfDensityField out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

HalfDensityField operator*(Complex c, const HalfDensityField& a) {
    HalfDensityField out = a;
    for (auto& x : out.v) x *= c;
    return out;
}

Dft::Dft(const Grid& g) : n_r_(g.n_r), n_theta_(g.n_theta) {
    wr_.assign(n_r_, std::vector<Complex>(n_r_));
    wt_.assign(n_theta_, std::vector<Complex>(n_theta_));
    for (int k = 0; k < n_r_; ++k) {
        const int f = Grid::signed_freq(k, n_r_);
        for (int i = 0; i < n_r_; ++i) {
            const double phase = -2.0 * kPi * f * (g.r_origin + i * g.dr()) / g.L_r;
            wr_[k][i] = Complex(std::cos(phase), std::sin(phase));
        }
    }
    for (int l = 0; l < n_theta_; ++l) {
        const int f = Grid::signed_freq(l, n_theta_);
        for (int j = 0; j < n_theta_; ++j) {
            const double phase = -2.0 * kPi * f * j / n_theta_;
            wt_[l][j] = Complex(std::cos(phase), std::sin(phase));
        }
    }
}

void Dft::forward(const std::vector<Complex>& in, std::vector<Complex>& out) const {
    // rows: theta transform; then columns: r transform
    std::vector<Complex> mid(in.size());
    for (int i = 0; i < n_r_; ++i) {
        const Complex* row = in.data() + std::size_t(i) * n_theta_;
        for (int l = 0; l < n_theta_; ++l) {
            Complex acc(0.0, 0.0);
            const auto& w = wt_[l];
            for (int j = 0; j < n_theta_; ++j) acc += row[j] * w[j];
            mid[std::size_t(i) * n_theta_ + l] = acc;
        }
    }
    out.assign(in.size(), Complex(0.0, 0.0));
    for (int k = 0; k < n_r_; ++k) {
        const auto& w = wr_[k];
        for (int i = 0; i < n_r_; ++i) {
            const Complex wi = w[i];
            const Complex* src = mid.data() + std::size_t(i) * n_theta_;
            Complex* dst = out.data() + std::size_t(k) * n_theta_;
            for (int l = 0; l < n_theta_; ++l) dst[l] += wi * src[l];
        }
    }
}

void Dft::inverse(const std::vector<Complex>& in, std::vector<Complex>& out) const {
    std::vector<Complex> mid(in.size(), Complex(0.0, 0.0));
    for (int i = 0; i < n_r_; ++i) {
        for (int k = 0; k < n_r_; ++k) {
            const Complex wi = std::conj(wr_[k][i]);
            const Complex* src = in.data() + std::size_t(k) * n_theta_;
            Complex* dst = mid.data() + std::size_t(i) * n_theta_;
            for (int l = 0; l < n_theta_; ++l) dst[l] += wi * src[l];
        }
    }
    out.assign(in.size(), Complex(0.0, 0.0));
    const double scale = 1.0 / (double(n_r_) * double(n_theta_));
    for (int i = 0; i < n_r_; ++i) {
        Complex* dst = out.data() + std::size_t(i) * n_theta_;
        const Complex* src = mid.data() + std::size_t(i) * n_theta_;
        for (int j = 0; j < n_theta_; ++j) {
            Complex acc(0.0, 0.0);
            for (int l = 0; l < n_theta_; ++l) acc += src[l] * std::conj(wt_[l][j]);
            dst[j] = acc * scale;
        }
    }
}

namespace {
// nonnegative trig envelope ((1 + cos)/2)^K; at the full degree K = 12 it is
// below 1e-12 within the 10% margins. Coarse grids (n_r < 42) get a lower
// degree so the whole field stays inside the band-limited lower third.
int envelope_degree(const Grid& g) { return std::min(12, std::max(4, g.n_r / 3 - 2)); }

double envelope(double r, const Grid& g) {
    const double arg = 2.0 * kPi * (r - g.r_origin - 0.5 * g.L_r) / g.L_r;
    const double base = 0.5 * (1.0 + std::cos(arg));
    double p = 1.0;
    const int deg = envelope_degree(g);
    for (int i = 0; i < deg; ++i) p *= base;
    return p;
}
}  // namespace

HalfDensityField random_band_limited_field(std::shared_ptr<const Grid> grid, std::uint64_t seed,
                                           int extra_r_modes) {
    const Grid& g = *grid;
    Rng rng(seed);
    int mr = std::max(1, g.n_r / 3 - envelope_degree(g));
    if (extra_r_modes >= 1) mr = std::min(mr, extra_r_modes);
    const int mt = std::max(1, g.n_theta / 3);
    // random trig polynomial, low modes only
    std::vector<Complex> coef_r(2 * mr + 1), coef_t(2 * mt + 1);
    HalfDensityField u(grid);
    std::vector<std::vector<Complex>> modes_r(2 * mr + 1, std::vector<Complex>(g.n_r));
    std::vector<std::vector<Complex>> modes_t(2 * mt + 1, std::vector<Complex>(g.n_theta));
    for (int m = -mr; m <= mr; ++m)
        for (int i = 0; i < g.n_r; ++i) {
            const double ph = 2.0 * kPi * m * (g.r(i) - g.r_origin) / g.L_r;
            modes_r[m + mr][i] = Complex(std::cos(ph), std::sin(ph));
        }
    for (int m = -mt; m <= mt; ++m)
        for (int j = 0; j < g.n_theta; ++j) {
            const double ph = m * g.theta(j);
            modes_t[m + mt][j] = Complex(std::cos(ph), std::sin(ph));
        }
    // low-rank random combination keeps the construction cheap and seeded
    const int rank = 6;
    std::vector<Complex> cr(2 * mr + 1), ct(2 * mt + 1);
    for (int t = 0; t < rank; ++t) {
        for (auto& c : cr) c = rng.next_complex();
        for (auto& c : ct) c = rng.next_complex();
        for (int i = 0; i < g.n_r; ++i) {
            Complex fr(0.0, 0.0);
            for (int m = 0; m < 2 * mr + 1; ++m) fr += cr[m] * modes_r[m][i];
            for (int j = 0; j < g.n_theta; ++j) {
                Complex ft(0.0, 0.0);
                for (int m = 0; m < 2 * mt + 1; ++m) ft += ct[m] * modes_t[m][j];
                u.v[std::size_t(i) * g.n_theta + j] += fr * ft;
            }
        }
    }
    for (int i = 0; i < g.n_r; ++i) {
        const double env = envelope(g.r(i), g);
        for (int j = 0; j < g.n_theta; ++j) u.v[std::size_t(i) * g.n_theta + j] *= env;
    }
    const double nrm = l2_norm(u);
    if (nrm > 0.0)
        for (auto& c : u.v) c /= nrm;
    return u;
}

double margin_max(const HalfDensityField& u) {
    const Grid& g = *u.grid;
    double best = 0.0;
    for (int i = 0; i < g.n_r; ++i) {
        const double frac = double(i) / g.n_r;
        if (frac >= 0.1 && frac < 0.9) continue;
        for (int j = 0; j < g.n_theta; ++j)
            best = std::max(best, std::abs(u.v[std::size_t(i) * g.n_theta + j]));
    }
    return best;
}

void band_limit(HalfDensityField& u) {
    const Grid& g = *u.grid;
    Dft dft(g);
    std::vector<Complex> hat;
    dft.forward(u.v, hat);
    for (int k = 0; k < g.n_r; ++k)
        for (int l = 0; l < g.n_theta; ++l) {
            const bool cut = std::abs(Grid::signed_freq(k, g.n_r)) > g.n_r / 3 ||
                             std::abs(Grid::signed_freq(l, g.n_theta)) > g.n_theta / 3;
            if (cut) hat[std::size_t(k) * g.n_theta + l] = Complex(0.0, 0.0);
        }
    dft.inverse(hat, u.v);
}

// ---------------------------------------------------------------------------
// field I/O

void write_field(const std::string& path, const HalfDensityField& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("write_field: cannot open " + path);
    const Grid& g = *u.grid;
    char header[32] = {};
    std::memcpy(header, "HDF1", 4);
    const std::uint32_t nr = g.n_r, nt = g.n_theta;
    std::memcpy(header + 4, &nr, 4);
    std::memcpy(header + 8, &nt, 4);
    const float lr = float(g.L_r), ro = float(g.r_origin), hb = float(g.hbar);
    std::memcpy(header + 12, &lr, 4);
    std::memcpy(header + 16, &ro, 4);
    std::memcpy(header + 20, &hb, 4);
    os.write(header, 32);
    std::vector<float> data(2 * u.v.size());
    for (std::size_t i = 0; i < u.v.size(); ++i) {
        data[2 * i] = float(u.v[i].real());
        data[2 * i + 1] = float(u.v[i].imag());
    }
    os.write(reinterpret_cast<const char*>(data.data()),
             std::streamsize(data.size() * sizeof(float)));
}

HalfDensityField read_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_field: cannot open " + path);
    char header[32];
    is.read(header, 32);
    if (is.gcount() != 32 || std::memcmp(header, "HDF1", 4) != 0)
        throw Error("read_field: bad header in " + path);
    std::uint32_t nr, nt;
    float lr, ro, hb;
    std::memcpy(&nr, header + 4, 4);
    std::memcpy(&nt, header + 8, 4);
    std::memcpy(&lr, header + 12, 4);
    std::memcpy(&ro, header + 16, 4);
    std::memcpy(&hb, header + 20, 4);
    auto grid = Grid::make(ro, lr, int(nr), int(nt), hb);
    HalfDensityField u(grid);
    std::vector<float> data(2 * u.v.size());
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
    if (std::size_t(is.gcount()) != data.size() * sizeof(float))
        throw Error("read_field: truncated data in " + path);
    for (std::size_t i = 0; i < u.v.size(); ++i)
        u.v[i] = Complex(data[2 * i], data[2 * i + 1]);
    return u;
}

// ---------------------------------------------------------------------------
// partition of unity

PartitionOfUnity::PartitionOfUnity() {
    // exp(-1 / (1 - r^2)) on (-1, 1)
    base_ = exp_e(constant(-1.0) * ipow(constant(1.0) - var(Var::R) * var(Var::R), -1));
}

double PartitionOfUnity::bump(double x) {
    if (std::abs(x) >= 1.0 - 1e-14) return 0.0;
    return std::exp(-1.0 / (1.0 - x * x));
}

double PartitionOfUnity::member(int j, double r) const {
    const double num = bump(r - j);
    if (num == 0.0) return 0.0;
    // at most two lattice bumps overlap any point
    const int j0 = int(std::floor(r));
    double s = 0.0;
    for (int k = j0 - 1; k <= j0 + 2; ++k) s += bump(r - k);
    return num / s;
}

std::vector<double> PartitionOfUnity::member_on_grid(int j, const Grid& g) const {
    std::vector<double> out(g.size());
    for (int i = 0; i < g.n_r; ++i) {
        const double val = member(j, g.r(i));
        for (int t = 0; t < g.n_theta; ++t) out[std::size_t(i) * g.n_theta + t] = val;
    }
    return out;
}

}  // namespace endcalc
