#include "endcalc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "endcalc/parametrix.hpp"

namespace endcalc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config plumbing

namespace {

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::string join_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "experiment")
        experiment = value;
    else if (key == "weight")
        weight = value;
    else if (key == "n_r")
        n_r = std::stoi(value);
    else if (key == "n_theta")
        n_theta = std::stoi(value);
    else if (key == "L_r")
        L_r = std::stod(value);
    else if (key == "r_origin")
        r_origin = std::stod(value);
    else if (key == "hbars")
        hbars = parse_list(value);
    else if (key == "z") {
        auto parts = parse_list(value);
        z = Complex(parts.empty() ? 0.0 : parts[0], parts.size() > 1 ? parts[1] : 0.0);
    } else if (key == "N")
        n = std::stoi(value);
    else if (key == "seed")
        seed = std::stoull(value);
    else if (key == "out_dir")
        out_dir = value;
    else
        extras[key] = value;
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os << "experiment = " << experiment << "\n";
    os << "weight = " << weight << "\n";
    os << "n_r = " << n_r << "\n";
    os << "n_theta = " << n_theta << "\n";
    os << "L_r = " << format_double(L_r) << "\n";
    os << "r_origin = " << format_double(r_origin) << "\n";
    os << "hbars = " << join_list(hbars) << "\n";
    os << "z = " << format_double(z.real()) << "," << format_double(z.imag()) << "\n";
    os << "N = " << n << "\n";
    os << "seed = " << seed << "\n";
    os << "out_dir = " << out_dir << "\n";
    for (const auto& [k, v] : extras) os << k << " = " << v << "\n";
    return os.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) cfg.set(key, value);
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_text(ss.str());
}

std::string ExperimentConfig::extra(const std::string& key, const std::string& fallback) const {
    auto it = extras.find(key);
    return it == extras.end() ? fallback : it->second;
}

double ExperimentConfig::extra_num(const std::string& key, double fallback) const {
    auto it = extras.find(key);
    return it == extras.end() ? fallback : std::stod(it->second);
}

// ---------------------------------------------------------------------------
// output helpers

namespace {

void write_file(const std::string& dir, const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir + "/" + name, std::ios::binary);
    if (!os) throw Error("cannot write " + dir + "/" + name);
    os << content;
}

// minimal log-log polyline plot
std::string svg_loglog(const std::vector<double>& x,
                       const std::vector<std::vector<double>>& series,
                       const std::vector<std::string>& labels) {
    const int w = 560, h = 400, m = 56;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (double v : x) {
        xmin = std::min(xmin, std::log10(v));
        xmax = std::max(xmax, std::log10(v));
    }
    for (const auto& s : series)
        for (double v : s) {
            if (v <= 0) continue;
            ymin = std::min(ymin, std::log10(v));
            ymax = std::max(ymax, std::log10(v));
        }
    if (ymin > ymax) {
        ymin = -1;
        ymax = 1;
    }
    auto px = [&](double lx) { return m + (lx - xmin) / std::max(1e-12, xmax - xmin) * (w - 2 * m); };
    auto py = [&](double ly) { return h - m - (ly - ymin) / std::max(1e-12, ymax - ymin) * (h - 2 * m); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << m << "' y1='" << h - m << "' x2='" << w - m << "' y2='" << h - m
       << "' stroke='black'/>\n";
    os << "<line x1='" << m << "' y1='" << m << "' x2='" << m << "' y2='" << h - m
       << "' stroke='black'/>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill='none' stroke='" << colors[s % 5] << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < x.size() && i < series[s].size(); ++i) {
            if (series[s][i] <= 0) continue;
            os << px(std::log10(x[i])) << "," << py(std::log10(series[s][i])) << " ";
        }
        os << "'/>\n";
        if (s < labels.size())
            os << "<text x='" << w - m + 4 << "' y='" << m + 16 * s << "' font-size='11' fill='"
               << colors[s % 5] << "'>" << labels[s] << "</text>\n";
    }
    os << "<text x='" << w / 2 << "' y='" << h - 12
       << "' font-size='11' text-anchor='middle'>log10 hbar</text>\n";
    os << "</svg>\n";
    return os.str();
}

Expr vr() { return var(Var::R); }
Expr vth() { return var(Var::Theta); }
Expr vrho() { return var(Var::Rho); }
Expr veta() { return var(Var::Eta); }

WeightFunction make_weight(const ExperimentConfig& cfg) {
    return WeightFunction::by_name(cfg.weight, cfg.L_r, cfg.r_origin + 0.5 * cfg.L_r);
}

SampleWindow window_for(const ExperimentConfig& cfg) {
    SampleWindow w;
    w.r_lo = cfg.r_origin + 0.05 * cfg.L_r;
    w.r_hi = cfg.r_origin + 0.95 * cfg.L_r;
    return w;
}

DiffOp operator_by_name(const std::string& name, const WeightFunction& f,
                        const SampleWindow& win) {
    if (name == "constant") return flat_laplacian();
    if (name == "potential") {
        DiffOp p(2, WeightFunction::one());
        p.set_coeff(2, 0, 0, constant(1.0));
        p.set_coeff(0, 2, 0, constant(1.0));
        p.set_coeff(0, 0, 0, 0.4 * exp_e(constant(-0.25) * vr() * vr()));
        return p;
    }
    if (name == "warped") return warped_laplacian(f, constant(1.0), win);
    throw Error("unknown operator '" + name + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// experiments

namespace {

// criterion thresholds, pinned
constexpr double kBaselineResidual = 1e-9;        // criterion 1
constexpr double kSlopeMargin = 0.8;              // criterion 2: slope >= N + 0.8
constexpr double kSymmetryTol = 1e-8;             // criterion 4
constexpr double kNeumannTol = 1e-3;              // criterion 4
constexpr double kCommutatorSlope = 0.8;          // criterion 5
constexpr double kBlockDecayExponent = 2.0;       // criterion 6
constexpr double kBlockZeroTol = 1e-12;           // criterion 6
constexpr double kScalingTol = 1e-6;              // criterion 7
constexpr double kRelationTol = 1e-8;             // criterion 8
constexpr double kHalvingLo = 0.35, kHalvingHi = 0.65;  // criterion 9
constexpr double kFdTol = 1e-6;                   // criterion 10
constexpr double kMixedPartialTol = 1e-10;        // criterion 10

ExperimentResult finish(const ExperimentConfig& cfg, json summary, std::string csv,
                        const std::string& svg = "") {
    ExperimentResult out;
    out.pass = summary.at("pass").get<bool>();
    out.summary_json = summary.dump(2) + "\n";
    out.results_csv = std::move(csv);
    write_file(cfg.out_dir, "summary.json", out.summary_json);
    write_file(cfg.out_dir, "results.csv", out.results_csv);
    if (!svg.empty()) write_file(cfg.out_dir, "plot.svg", svg);
    return out;
}

// ---- residual-scaling: criteria 1 (baseline), 2 (slopes), 3 (cancellation)

ExperimentResult run_residual_scaling(const ExperimentConfig& cfg) {
    json summary;
    std::ostringstream csv;
    csv << "operator,N,hbar,field,residual\n";
    bool pass = true;

    // criterion 1: constant-coefficient exact baseline on a 64x64 grid
    {
        DiffOp flat = flat_laplacian();
        SampleWindow win;
        Parametrix par = build_parametrix(flat, Complex(-1.0, 0.0), 0, win);
        ResidualConfig rc;
        rc.r_origin = -8.0;
        rc.L_r = 16.0;
        rc.n_r = 64;
        rc.n_theta = 64;
        rc.n_fields = 3;
        rc.seed = cfg.seed;
        ResidualReport rep =
            residual_report(flat, par.series, Complex(-1.0, 0.0), {0.125}, rc);
        double worst = 0.0;
        for (std::size_t fi = 0; fi < rep.residuals[0].size(); ++fi) {
            worst = std::max(worst, rep.residuals[0][fi]);
            csv << "constant,0,0.125," << fi << "," << format_double(rep.residuals[0][fi])
                << "\n";
        }
        summary["baseline_max_residual"] = worst;
        summary["baseline_threshold"] = kBaselineResidual;
        summary["baseline_pass"] = worst <= kBaselineResidual;
        pass = pass && worst <= kBaselineResidual;
    }

    // criterion 2: warped Laplacian slopes for N = 0, 1, 2
    std::vector<double> slopes;
    std::vector<std::vector<double>> mean_residuals;
    {
        auto f = make_weight(cfg);
        SampleWindow win = window_for(cfg);
        DiffOp lap = warped_laplacian(f, constant(1.0), win);
        ResidualConfig rc;
        rc.r_origin = cfg.r_origin;
        rc.L_r = cfg.L_r;
        rc.n_r = std::max(cfg.n_r, 256);  // wide band for the rho0 modulation
        rc.n_theta = cfg.n_theta;
        rc.n_fields = 3;
        rc.seed = cfg.seed;
        rc.rho0 = cfg.extra_num("rho0", 0.25);
        rc.field_modes = 1;
        const double quant_t = cfg.extra_num("t", 1.0);
        for (int nn = 0; nn <= 2; ++nn) {
            Parametrix par = build_parametrix(lap, cfg.z, nn, win);
            par.series.t = quant_t;  // exploratory; the recursion itself is built for t = 1
            ResidualReport rep = residual_report(lap, par.series, cfg.z, cfg.hbars, rc);
            slopes.push_back(rep.slope);
            std::vector<double> means;
            for (std::size_t hi = 0; hi < cfg.hbars.size(); ++hi) {
                double mean = 0.0;
                for (std::size_t fi = 0; fi < rep.residuals[hi].size(); ++fi) {
                    csv << "warped," << nn << "," << format_double(cfg.hbars[hi]) << "," << fi
                        << "," << format_double(rep.residuals[hi][fi]) << "\n";
                    mean += rep.residuals[hi][fi];
                }
                means.push_back(mean / double(rep.residuals[hi].size()));
            }
            mean_residuals.push_back(means);
            const bool ok = rep.slope >= double(nn) + kSlopeMargin;
            summary["slope_N" + std::to_string(nn)] = rep.slope;
            summary["slope_N" + std::to_string(nn) + "_fit_residual"] = rep.fit_residual;
            summary["slope_N" + std::to_string(nn) + "_pass"] = ok;
            pass = pass && ok;
        }
        summary["slope_threshold"] = "N + 0.8";
    }

    // criterion 3: symbolic cancellation over the operator corpus
    {
        auto f = WeightFunction::sqrt1pr2();
        SampleWindow win = window_for(cfg);
        bool all_zero = true;
        for (const std::string& name : {"constant", "potential", "warped"}) {
            DiffOp p = operator_by_name(name, f, win);
            Parametrix par = build_parametrix(p, cfg.z, 2, win);
            std::vector<Expr> defect = defect_coefficients(p, par.series, 2);
            for (int g = 1; g <= 2; ++g) {
                const bool zero = is_zero_expr(defect[std::size_t(g)]);
                summary["cancellation_" + name + "_grade" + std::to_string(g)] = zero;
                all_zero = all_zero && zero;
            }
        }
        summary["cancellation_pass"] = all_zero;
        pass = pass && all_zero;
    }

    summary["pass"] = pass;
    std::vector<std::string> labels{"N=0", "N=1", "N=2"};
    return finish(cfg, summary, csv.str(),
                  svg_loglog(cfg.hbars, mean_residuals, labels));
}

// ---- l2-bound: Calderon-Vaillancourt-type calibration across a corpus

ExperimentResult run_l2_bound(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, Expr>> corpus;
    corpus.emplace_back("one", constant(1.0));
    corpus.emplace_back("sin_theta", sin_e(vth()));
    corpus.emplace_back("gauss_rho", exp_e(constant(-1.0) * vrho() * vrho()));
    corpus.emplace_back("gauss_p",
                        exp_e(constant(-0.5) * (vrho() * vrho() + veta() * veta())));
    corpus.emplace_back("resolvent",
                        ipow(constant(1.0) + vrho() * vrho() + veta() * veta(), -1));
    corpus.emplace_back("shifted_resolvent",
                        constant(-1.0) * ipow(constant(-1.0) - vrho() * vrho() - veta() * veta(), -1));
    corpus.emplace_back("mixed", sin_e(vth()) * exp_e(constant(-1.0) * vrho() * vrho()));
    corpus.emplace_back("radial_cut", cos_e(vth()) * ipow(constant(1.0) + veta() * veta(), -1));
    corpus.emplace_back("oscillating", cos_e(vr()) * exp_e(constant(-0.25) * vrho() * vrho()));
    corpus.emplace_back("rational_r",
                        ipow(constant(1.0) + vr() * vr(), -1) *
                            ipow(constant(1.0) + vrho() * vrho(), -1));

    auto f = WeightFunction::one();
    SampleWindow win;
    win.r_lo = -6.0;
    win.r_hi = 6.0;
    win.n_p = 17;

    auto measure = [&](const Expr& a, int n_r, int n_theta, double hbar) {
        auto grid = Grid::make(-8.0, 16.0, n_r, n_theta, hbar);
        auto op = std::make_shared<QuantizedOp>(a, grid, 1.0);
        FieldOp fwd = [op](const HalfDensityField& u) { return op->apply(u); };
        FieldOp adj = [op](const HalfDensityField& u) { return op->apply_adjoint(u); };
        return op_norm_estimate(fwd, adj, grid, 2, 12, cfg.seed);
    };

    json summary;
    std::ostringstream csv;
    csv << "symbol,seminorm,norm_cal,ratio_cal,norm_check1,norm_check2\n";
    double c_cal = 0.0;
    std::vector<double> seminorms, cal_norms;
    for (const auto& [name, a] : corpus) {
        Symbol s{a, 0.0, f};
        const double sn = seminorm_estimate(s, 4, win, 0.125);
        const double nrm = measure(a, 32, 16, 0.125);
        seminorms.push_back(sn);
        cal_norms.push_back(nrm);
        c_cal = std::max(c_cal, nrm / sn);
    }
    const double c_pinned = 1.5 * c_cal;
    bool pass = true;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& [name, a] = corpus[i];
        const double n1 = measure(a, 64, 16, 0.125);
        const double n2 = measure(a, 32, 16, 0.0625);
        const bool ok = n1 <= c_pinned * seminorms[i] && n2 <= c_pinned * seminorms[i];
        pass = pass && ok;
        csv << name << "," << format_double(seminorms[i]) << "," << format_double(cal_norms[i])
            << "," << format_double(cal_norms[i] / seminorms[i]) << "," << format_double(n1)
            << "," << format_double(n2) << "\n";
    }
    summary["calibrated_constant"] = c_pinned;
    summary["pass"] = pass;
    return finish(cfg, summary, csv.str());
}

// ---- block-decay: criterion 6

ExperimentResult run_block_decay(const ExperimentConfig& cfg) {
    const double hbar = cfg.hbars.empty() ? 0.125 : cfg.hbars.front();
    auto grid = Grid::make(-8.0, 16.0, 128, 16, hbar);
    PartitionOfUnity pou;
    const std::vector<int> js = {-3, -2, -1, 0, 1, 2};

    // smooth compactly supported symbol: the standard bump in each variable,
    // clamped to zero outside (-1, 1) by the registered evaluator. Support
    // half-widths stay off the lattice so no sample hits the support edge.
    const FuncDef* bump01 = register_function(FuncDef{
        "bump01",
        [](Complex x) {
            const double t = x.real();
            if (std::abs(t) >= 1.0 - 1e-12) return Complex(0.0, 0.0);
            return Complex(std::exp(-1.0 / (1.0 - t * t)), 0.0);
        },
        [](const Expr& u) {
            return func(find_function("bump01"), u) * (-2.0) * u *
                   ipow(constant(1.0) - u * u, -2);
        },
    });
    Expr a = func(bump01, (1.0 / 4.3) * vr()) * func(bump01, (1.0 / 3.3) * vrho()) *
             func(bump01, (1.0 / 3.3) * veta());

    json summary;
    std::ostringstream csv;
    csv << "j,k,sep,norm\n";
    BlockNormTable tab =
        block_norm_table(a, 1.0, Complex(0.0, 0.0), grid, pou, js, js, 1, 14, cfg.seed);
    std::map<int, double> by_sep;
    for (std::size_t ji = 0; ji < js.size(); ++ji)
        for (std::size_t ki = 0; ki < js.size(); ++ki) {
            const int d = std::abs(js[ji] - js[ki]);
            by_sep[d] = std::max(by_sep[d], tab.norms[ji][ki]);
            csv << js[ji] << "," << js[ki] << "," << d << ","
                << format_double(tab.norms[ji][ki]) << "\n";
        }
    LineFit fit = block_decay_fit(tab);
    summary["decay_exponent"] = fit.slope;
    const bool decay_ok = fit.slope >= kBlockDecayExponent;

    // identity symbol: exact zeros off the tridiagonal
    BlockNormTable id_tab = block_norm_table(constant(1.0), 1.0, Complex(0.0, 0.0), grid, pou,
                                             js, js, 1, 8, cfg.seed + 1);
    double worst_far = 0.0;
    for (std::size_t ji = 0; ji < js.size(); ++ji)
        for (std::size_t ki = 0; ki < js.size(); ++ki)
            if (std::abs(js[ji] - js[ki]) >= 2)
                worst_far = std::max(worst_far, id_tab.norms[ji][ki]);
    summary["identity_far_block_max"] = worst_far;
    const bool zeros_ok = worst_far <= kBlockZeroTol;

    summary["pass"] = decay_ok && zeros_ok;
    return finish(cfg, summary, csv.str());
}

// ---- scaling-identity: criteria 7 and 8

ExperimentResult run_scaling_identity(const ExperimentConfig& cfg) {
    json summary;
    std::ostringstream csv;
    csv << "check,value\n";
    bool pass = true;

    // criterion 7: conjugation identity at three (j, k, t) triples
    {
        auto f = WeightFunction::exp_windowed(8.0, 2.0);
        PartitionOfUnity pou;
        SeparableSymbol a;
        a.radial = exp_e(constant(-0.5) * vrho() * vrho()) *
                   exp_e(constant(-0.25) * (vr() - 2.5) * (vr() - 2.5));
        a.angular = exp_e(constant(-0.5) * veta() * veta()) *
                    exp_e(constant(-1.0) * vth() * vth());
        QuadratureSpec quad;
        quad.r_lo = -1.5;
        quad.r_hi = 6.5;
        quad.n_r = 112;
        quad.theta_half_width = 2.5;
        quad.n_theta = 72;
        quad.n_rho = 56;
        quad.n_eta = 64;
        const double hbar = 0.25;
        struct Triple {
            int j, k;
            double t;
        };
        for (const Triple& tr : {Triple{2, 2, 1.0}, Triple{1, 3, 0.0}, Triple{2, 3, 0.5}}) {
            auto u = [&](double r, double th) {
                const double c = 0.5 * (tr.j + tr.k);
                return Complex(std::exp(-2.0 * (r - c) * (r - c) - 2.0 * th * th), 0.0);
            };
            ScalingMap map = ScalingMap::make(f, tr.j, tr.k, tr.t);
            ScalingCheck chk = scaling_conjugate(a, map, pou, hbar, quad, u);
            const std::string tag = "scaling_" + std::to_string(tr.j) + "_" +
                                    std::to_string(tr.k) + "_t" + format_double(tr.t);
            summary[tag] = chk.diff_rel;
            summary[tag + "_factor"] = map.factor;
            csv << tag << "," << format_double(chk.diff_rel) << "\n";
            pass = pass && chk.diff_rel <= kScalingTol && chk.unitarity_defect <= 1e-10;
        }
        summary["scaling_threshold"] = kScalingTol;
    }

    // criterion 8: quantization-parameter relations
    {
        auto g = Grid::make(-8.0, 16.0, 64, 8, 0.125);
        HalfDensityField u = random_band_limited_field(g, cfg.seed + 11);
        HalfDensityField v = random_band_limited_field(g, cfg.seed + 12);
        Expr rrho = vr() * vrho();
        HalfDensityField w1 = apply_op(rrho, 1.0, u);
        HalfDensityField w0 = apply_op(rrho, 0.0, u);
        HalfDensityField expected = Complex(0.0, g->hbar) * u;
        const double rel_comm = l2_norm((w1 - w0) - expected) / l2_norm(u);
        summary["commutation_defect"] = rel_comm;
        csv << "commutation_defect," << format_double(rel_comm) << "\n";
        pass = pass && rel_comm <= kRelationTol;

        // adjoint relation with a real symbol: Op^t(a)* = Op^{1-t}(a)
        auto gs = Grid::make(-4.0, 8.0, 16, 8, 0.25);
        HalfDensityField us = random_band_limited_field(gs, cfg.seed + 13);
        HalfDensityField vs = random_band_limited_field(gs, cfg.seed + 14);
        Expr real_sym = sin_e(vth()) * vrho() + cos_e(vr()) * veta() + vr() * vrho() * vrho();
        const double t = 0.25;
        QuantizedOp op_t(real_sym, gs, t);
        QuantizedOp op_1mt(real_sym, gs, 1.0 - t);
        const Complex lhs = inner(op_t.apply(us), vs);
        const Complex rhs = inner(us, op_1mt.apply(vs));
        const double adj_defect = std::abs(lhs - rhs) / (l2_norm(us) * l2_norm(vs));
        summary["adjoint_defect"] = adj_defect;
        csv << "adjoint_defect," << format_double(adj_defect) << "\n";
        pass = pass && adj_defect <= kRelationTol;

        QuantizedOp weyl(real_sym, gs, 0.5);
        const Complex s1 = inner(weyl.apply(us), vs);
        const Complex s2 = inner(us, weyl.apply(vs));
        const double weyl_defect = std::abs(s1 - s2) / (l2_norm(us) * l2_norm(vs));
        summary["weyl_symmetry_defect"] = weyl_defect;
        csv << "weyl_symmetry_defect," << format_double(weyl_defect) << "\n";
        pass = pass && weyl_defect <= kRelationTol;
        summary["relation_threshold"] = kRelationTol;
    }

    summary["pass"] = pass;
    return finish(cfg, summary, csv.str());
}

// ---- chart-transfer: criterion 9 plus the two-chart assembly discrepancy

ExperimentResult run_chart_transfer(const ExperimentConfig& cfg) {
    json summary;
    std::ostringstream csv;
    csv << "quantity,hbar,value\n";

    AngularMap mo = moebius_arc_map(cfg.extra_num("moebius_a", 0.3));
    auto f = WeightFunction::one();
    Symbol a{exp_e(constant(-1.25) * vth() * vth()) * exp_e(constant(-0.5) * veta() * veta()),
             0.0, f};
    Symbol moved = chart_transfer_leading(a, mo);

    // quadrature grids: chart-1 arc and its Moebius image
    const int n_th = 192;
    std::vector<double> th1(n_th);
    for (int i = 0; i < n_th; ++i) th1[i] = -2.9 + 5.8 * double(i) / double(n_th - 1);
    const double wq = 5.8 / double(n_th - 1);
    std::vector<double> th2(n_th);
    for (int i = 0; i < n_th; ++i) th2[i] = mo.apply(th1[i]);

    // fields carry a fixed angular frequency so the O(hbar) transfer
    // correction (which vanishes at eta = 0) is what the halving test sees
    auto field = [&](int which, double hbar) {
        const double centers[] = {-0.4, 0.2, 0.7};
        const double c = centers[which];
        const double eta0 = cfg.extra_num("eta0", 1.0);
        return [c, eta0, hbar](double th) {
            return std::exp(-2.0 * (th - c) * (th - c)) *
                   std::exp(Complex(0.0, eta0 * th / hbar));
        };
    };

    auto measure = [&](double hbar) {
        double worst = 0.0;
        for (int fi = 0; fi < 3; ++fi) {
            auto u = field(fi, hbar);
            // pullback of u to chart 1: (phi^* u)(th) = |phi'|^(1/2) u(phi(th))
            auto pb_u = [&](double th) {
                return std::sqrt(mo.deriv(th)) * u(mo.apply(th));
            };
            std::vector<Complex> lhs =
                apply_theta_op(a.expr, 1.0, hbar, th1, -2.9, 2.9, 288, 5.0, 96, pb_u);
            // rhs: Op^1(transferred symbol) u on chart 2, pulled back to chart 1
            std::vector<Complex> w2 =
                apply_theta_op(moved.expr, 1.0, hbar, th2, th2.front(), th2.back(), 384, 9.0,
                               128, [&](double th) { return u(th); });
            double num = 0.0, den = 0.0;
            for (int i = 0; i < n_th; ++i) {
                const Complex rhs_i = std::sqrt(mo.deriv(th1[i])) * w2[i];
                const double cell = (i == 0 || i == n_th - 1) ? 0.5 * wq : wq;
                num += std::norm(lhs[i] - rhs_i) * cell;
                den += std::norm(u(th1[i])) * cell;
            }
            worst = std::max(worst, std::sqrt(num / den));
        }
        return worst;
    };

    const double d8 = measure(0.125);
    const double d16 = measure(0.0625);
    const double ratio = d16 / d8;
    const double c_measured = d8 / 0.125;
    csv << "transfer_defect,0.125," << format_double(d8) << "\n";
    csv << "transfer_defect,0.0625," << format_double(d16) << "\n";
    summary["transfer_defect_h8"] = d8;
    summary["transfer_defect_h16"] = d16;
    summary["transfer_constant"] = c_measured;
    summary["halving_ratio"] = ratio;
    bool pass = ratio >= kHalvingLo && ratio <= kHalvingHi && std::isfinite(c_measured);

    // two-chart assembly against the global quantization (reported bound):
    // kappa_1 + kappa_2 = 1 with cos-power partition; the second chart is the
    // Moebius reparametrization; chi cutoffs are wider plateaus.
    {
        Expr b1 = ipow(0.5 * (constant(1.0) + cos_e(vth())), 6);
        Expr b2 = ipow(0.5 * (constant(1.0) - cos_e(vth())), 6);
        Expr kappa1 = b1 * ipow(b1 + b2, -1);
        Symbol a1{normalize(kappa1 * a.expr), 0.0, f};
        Symbol a2_chart1{normalize((constant(1.0) - kappa1) * a.expr), 0.0, f};
        Symbol a2 = chart_transfer_leading(a2_chart1, mo);
        auto chi = [](double th) {  // plateau, 1 on [-2.6, 2.6], 0 outside [-2.95, 2.95]
            const double x = (2.95 - std::abs(th)) / 0.35;
            if (x >= 1.0) return 1.0;
            if (x <= 0.0) return 0.0;
            auto gexp = [](double t2) { return t2 > 0.0 ? std::exp(-1.0 / t2) : 0.0; };
            return gexp(x) / (gexp(x) + gexp(1.0 - x));
        };
        auto assembly_defect = [&](double hbar) {
            double worst = 0.0;
            for (int fi = 0; fi < 3; ++fi) {
                auto u = field(fi, hbar);
                // global reference Op^1(a) u on chart 1
                std::vector<Complex> ref = apply_theta_op(
                    a.expr, 1.0, hbar, th1, -2.9, 2.9, 288, 5.0, 96,
                    [&](double th) { return u(th); });
                // chart-1 block: chi Op(kappa1 a) chi u
                std::vector<Complex> blk1 = apply_theta_op(
                    a1.expr, 1.0, hbar, th1, -2.9, 2.9, 288, 5.0, 96,
                    [&](double th) { return chi(th) * u(th); });
                // chart-2 block: chi phi^* Op(a2) phi_* chi u
                std::vector<Complex> w2 = apply_theta_op(
                    a2.expr, 1.0, hbar, th2, th2.front(), th2.back(), 384, 9.0, 128,
                    [&](double th) {
                        const double src = mo.apply_inverse(th);
                        return chi(src) * u(src) / std::sqrt(mo.deriv(src));
                    });
                double num = 0.0, den = 0.0;
                for (int i = 0; i < n_th; ++i) {
                    const Complex assembled =
                        chi(th1[i]) * blk1[i] +
                        chi(th1[i]) * std::sqrt(mo.deriv(th1[i])) * w2[i];
                    const double cell = (i == 0 || i == n_th - 1) ? 0.5 * wq : wq;
                    num += std::norm(assembled - ref[i]) * cell;
                    den += std::norm(u(th1[i])) * cell;
                }
                worst = std::max(worst, std::sqrt(num / den));
            }
            return worst;
        };
        const double a8 = assembly_defect(0.125);
        const double a16 = assembly_defect(0.0625);
        csv << "assembly_defect,0.125," << format_double(a8) << "\n";
        csv << "assembly_defect,0.0625," << format_double(a16) << "\n";
        summary["assembly_defect_h8"] = a8;
        summary["assembly_defect_h16"] = a16;
        summary["assembly_constant"] = a8 / 0.125;
        summary["assembly_ratio"] = a16 / a8;
        pass = pass && a16 <= a8;  // discrepancy shrinks with hbar
    }

    summary["halving_band"] = {kHalvingLo, kHalvingHi};
    summary["pass"] = pass;
    return finish(cfg, summary, csv.str());
}

// ---- selfadjoint: criteria 4 and 5

ExperimentResult run_selfadjoint(const ExperimentConfig& cfg) {
    json summary;
    std::ostringstream csv;
    csv << "quantity,x,value\n";
    bool pass = true;

    auto f = make_weight(cfg);
    SampleWindow win = window_for(cfg);
    DiffOp lap = warped_laplacian(f, constant(1.0), win);

    ResidualConfig rc;
    rc.r_origin = cfg.r_origin;
    rc.L_r = cfg.L_r;
    rc.n_r = cfg.n_r;
    rc.n_theta = cfg.n_theta;
    rc.seed = cfg.seed;
    SelfAdjointReport rep = selfadjoint_pipeline(lap, cfg.hbars, std::min(cfg.n, 2), rc, 20, win);

    summary["symmetry_defect"] = rep.symmetry_defect;
    pass = pass && rep.symmetry_defect <= kSymmetryTol;
    const double smallest = *std::min_element(cfg.hbars.begin(), cfg.hbars.end());
    double norm_small_p = 0.0, norm_small_m = 0.0;
    for (std::size_t i = 0; i < rep.hbars.size(); ++i) {
        csv << "norm_plus," << format_double(rep.hbars[i]) << ","
            << format_double(rep.norm_plus[i]) << "\n";
        csv << "norm_minus," << format_double(rep.hbars[i]) << ","
            << format_double(rep.norm_minus[i]) << "\n";
        if (rep.hbars[i] == smallest) {
            norm_small_p = rep.norm_plus[i];
            norm_small_m = rep.norm_minus[i];
        }
    }
    summary["defect_norm_plus_at_smallest"] = norm_small_p;
    summary["defect_norm_minus_at_smallest"] = norm_small_m;
    summary["hbar0"] = rep.hbar0_found ? rep.hbar0 : 0.0;
    pass = pass && norm_small_p < 1.0 && norm_small_m < 1.0;
    for (std::size_t k = 0; k < rep.neumann_residuals.size(); ++k)
        csv << "neumann," << k + 1 << "," << format_double(rep.neumann_residuals[k]) << "\n";
    summary["neumann_residual"] = rep.neumann_final;
    summary["neumann_hbar"] = rep.hbar_neumann;
    pass = pass && rep.neumann_final <= kNeumannTol;

    // criterion 5: cutoff commutator on a positive-radial window
    {
        SampleWindow cw;
        cw.r_lo = 0.5;
        cw.r_hi = 15.5;
        DiffOp lap_pos = warped_laplacian(f, constant(1.0), cw);
        Parametrix par = build_parametrix(lap_pos, Complex(0.0, 1.0), 1, cw);
        ResidualConfig cc;
        cc.r_origin = 0.0;
        cc.L_r = 16.0;
        cc.n_r = 64;
        cc.n_theta = 8;
        cc.seed = cfg.seed;
        CommutatorReport com = cutoff_commutator(lap_pos, par.series, {0.4, 0.2, 0.1},
                                                 cfg.hbars.front(), cc);
        for (std::size_t i = 0; i < com.deltas.size(); ++i)
            csv << "commutator," << format_double(com.deltas[i]) << ","
                << format_double(com.norms[i]) << "\n";
        summary["commutator_slope"] = com.slope;
        pass = pass && com.slope >= kCommutatorSlope;
    }

    summary["pass"] = pass;
    std::vector<std::vector<double>> series{rep.norm_plus, rep.norm_minus};
    return finish(cfg, summary, csv.str(),
                  svg_loglog(rep.hbars, series, {"||R(+i)||", "||R(-i)||"}));
}

// ---- expr-selftest: criterion 10

ExperimentResult run_expr_selftest(const ExperimentConfig& cfg) {
    const FuncDef* jbrf = find_function("jbr");
    if (!jbrf) {
        WeightFunction::sqrt1pr2();  // registers jbr
        jbrf = find_function("jbr");
    }
    Expr vz = var(Var::Z);
    std::vector<Expr> corpus;
    corpus.push_back(ipow(vrho(), 3));
    corpus.push_back(vrho() * vrho() + veta() * veta());
    corpus.push_back(sin_e(vth()));
    corpus.push_back(cos_e(vth()) * sin_e(vr()));
    corpus.push_back(exp_e(vr()) * vrho());
    corpus.push_back(log_e(constant(1.0) + vr() * vr()));
    corpus.push_back(ipow(vz - vrho() * vrho(), -1));
    corpus.push_back(ipow(vz - vrho() * vrho(), -2));
    corpus.push_back(ipow(constant(1.0) + vrho() * vrho() + veta() * veta(), -1));
    corpus.push_back(func(jbrf, vr()));
    corpus.push_back(log_e(func(jbrf, vr())));
    corpus.push_back(ipow(func(jbrf, vr()), -2) * veta());
    corpus.push_back(exp_e(constant(-1.0) * vrho() * vrho()));
    corpus.push_back(sin_e(vth()) * ipow(constant(2.0) + cos_e(vth()), -1));
    corpus.push_back(vr() * vth() * vrho() * veta());
    corpus.push_back(ipow(vr() + constant(2.0), 2) * ipow(veta() + constant(3.0), -1));
    corpus.push_back(exp_e(sin_e(vth())));
    corpus.push_back(constant(Complex(0.0, 1.0)) * vrho() + vr());
    corpus.push_back(log_e(constant(2.0) + sin_e(vr())));
    corpus.push_back((vz - vrho() * vrho()) * ipow(constant(1.0) + vr() * vr(), -1));

    json summary;
    std::ostringstream csv;
    csv << "index,variable,rel_err\n";
    Rng rng(cfg.seed);
    auto sample = [&]() {
        Point p;
        p.r = 0.3 + rng.next_double();
        p.theta = 0.2 + 2.0 * rng.next_double();
        p.rho = rng.next_sym();
        p.eta = rng.next_sym();
        p.hbar = 0.25 + 0.5 * rng.next_double();
        p.z = Complex(-1.0 - rng.next_double(), 0.3);
        return p;
    };

    int fd_passes = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        double worst = 0.0;
        for (Var v : {Var::R, Var::Theta, Var::Rho, Var::Eta}) {
            if (!free_vars(corpus[i]).count(v)) continue;
            FdReport rep = fd_check(corpus[i], v, sample(), 1e-5);
            worst = std::max(worst, rep.rel_err);
            csv << i << "," << var_name(v) << "," << format_double(rep.rel_err) << "\n";
        }
        if (worst <= kFdTol) ++fd_passes;
    }
    summary["fd_passes"] = fd_passes;
    summary["fd_total"] = corpus.size();

    double worst_mixed = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Expr& e = corpus[trial % corpus.size()];
        auto vars = free_vars(e);
        std::vector<Var> vs(vars.begin(), vars.end());
        std::erase_if(vs, [](Var v) { return v == Var::Hbar || v == Var::Z; });
        if (vs.size() < 2) continue;
        Var u = vs[trial % vs.size()];
        Var v = vs[(trial + 1) % vs.size()];
        Point p = sample();
        const Complex duv = eval(diff(diff(e, u), v), p);
        const Complex dvu = eval(diff(diff(e, v), u), p);
        worst_mixed =
            std::max(worst_mixed, std::abs(duv - dvu) / std::max(1.0, std::abs(duv)));
    }
    summary["mixed_partial_defect"] = worst_mixed;
    const bool pass = fd_passes == int(corpus.size()) && worst_mixed <= kMixedPartialTol;
    summary["pass"] = pass;
    return finish(cfg, summary, csv.str());
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{
        "residual-scaling", "l2-bound",       "block-decay", "scaling-identity",
        "chart-transfer",   "selfadjoint",    "expr-selftest"};
    return names;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.experiment == "residual-scaling") return run_residual_scaling(cfg);
    if (cfg.experiment == "l2-bound") return run_l2_bound(cfg);
    if (cfg.experiment == "block-decay") return run_block_decay(cfg);
    if (cfg.experiment == "scaling-identity") return run_scaling_identity(cfg);
    if (cfg.experiment == "chart-transfer") return run_chart_transfer(cfg);
    if (cfg.experiment == "selfadjoint") return run_selfadjoint(cfg);
    if (cfg.experiment == "expr-selftest") return run_expr_selftest(cfg);
    throw Error("unknown experiment '" + cfg.experiment + "'");
}

std::string list_experiments_text(bool as_json) {
    struct Row {
        const char* name;
        const char* what;
        const char* claim;
    };
    static const Row rows[] = {
        {"residual-scaling",
         "parametrix residual versus hbar for the model operators",
         "resolvent defect is O(hbar^(N+1)) after N recursion steps"},
        {"l2-bound", "operator norms against symbol seminorm estimates",
         "quantized bounded symbols give uniformly bounded L2 operators"},
        {"block-decay", "norms of cutoff blocks psi_j Op psi_k",
         "off-diagonal blocks decay faster than any power of <j-k>"},
        {"scaling-identity", "angular dilation conjugation and t-parameter relations",
         "Theta-conjugation moves Op^t(a) to Op^t of the rescaled symbol"},
        {"chart-transfer", "angular reparametrization of quantized symbols",
         "chart change preserves Op^1 up to O(hbar) with the pushforward symbol"},
        {"selfadjoint", "resolvent-defect norms at z = +-i and Neumann inversion",
         "symmetric elliptic operators are essentially self-adjoint for small hbar"},
        {"expr-selftest", "symbolic derivative engine against finite differences",
         "exact derivatives match central differences on the closed algebra"},
    };
    if (as_json) {
        json out = json::array();
        for (const Row& r : rows)
            out.push_back({{"name", r.name}, {"measures", r.what}, {"claim", r.claim}});
        return out.dump(2) + "\n";
    }
    std::ostringstream os;
    for (const Row& r : rows) {
        os << r.name << "\n    measures: " << r.what << "\n    claim:    " << r.claim << "\n";
    }
    return os.str();
}

}  // namespace endcalc
