#include "vicnet/battery_sim.hpp"

#include <algorithm>
#include <cmath>

namespace vicnet {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ShiftedShape {
    const OcvShape& shape;
    double shift;

    double raw(double v) const {
        double r = shape.slope * (v - shape.v_soc0);
        for (const OcvComponent& c : shape.components) r += c.amplitude * logistic((v - c.center_v - shift) / c.width_v);
        return r;
    }
    double raw_deriv(double v) const {
        double r = shape.slope;
        for (const OcvComponent& c : shape.components) {
            double s = logistic((v - c.center_v - shift) / c.width_v);
            r += c.amplitude / c.width_v * s * (1.0 - s);
        }
        return r;
    }
};

} // namespace

double ModuleModel::soc_of_v(double v) const {
    ShiftedShape s{ocv_shape, peak_shift_v * (1.0 - soh)};
    double r0 = s.raw(ocv_shape.v_soc0);
    double r1 = s.raw(ocv_shape.v_soc1);
    return (s.raw(v) - r0) / (r1 - r0);
}

double ModuleModel::dsoc_dv(double v) const {
    ShiftedShape s{ocv_shape, peak_shift_v * (1.0 - soh)};
    double r0 = s.raw(ocv_shape.v_soc0);
    double r1 = s.raw(ocv_shape.v_soc1);
    return s.raw_deriv(v) / (r1 - r0);
}

double ModuleModel::ocv(double soc) const {
    // safeguarded Newton on soc_of_v(v) = soc: fall back to bisection whenever
    // the Newton step leaves the bracket or converges slower than halving
    double xl = ocv_shape.v_soc0 - 0.5;
    double xh = ocv_shape.v_soc1 + 0.5;
    double v = ocv_shape.v_soc0 + (ocv_shape.v_soc1 - ocv_shape.v_soc0) * std::clamp(soc, 0.0, 1.0);
    double dx_old = xh - xl;
    double dx = dx_old;
    double f = soc_of_v(v) - soc;
    double df = dsoc_dv(v);
    for (int it = 0; it < 200 && std::abs(f) > 1e-14; ++it) {
        bool newton_ok = (((v - xh) * df - f) * ((v - xl) * df - f) < 0.0) && std::abs(2.0 * f) < std::abs(dx_old * df);
        dx_old = dx;
        if (newton_ok) {
            dx = f / df;
            v -= dx;
        } else {
            dx = 0.5 * (xh - xl);
            v = xl + dx;
        }
        if (dx == 0.0) break;
        f = soc_of_v(v) - soc;
        df = dsoc_dv(v);
        if (f < 0.0)
            xl = v;
        else
            xh = v;
    }
    return v;
}

double Protocol::current_at(double soc, double c_fresh_ah) const {
    for (const ProtocolStage& s : stages)
        if (soc < s.until_soc) return s.c_rate * c_fresh_ah;
    return stages.back().c_rate * c_fresh_ah; // hold the last stage to the end
}

void Protocol::validate() const {
    if (stages.empty()) throw ConfigError("protocol '" + id + "' has no stages");
    double prev = 0.0;
    for (const ProtocolStage& s : stages) {
        if (s.c_rate <= 0.0) throw ConfigError("protocol '" + id + "': stage currents must be positive");
        if (s.until_soc <= prev) throw ConfigError("protocol '" + id + "': stage boundaries must increase");
        prev = s.until_soc;
    }
}

Protocol ref_cc_protocol() { return {"ref_cc", {{0.4, 1.0}}}; }

std::vector<Protocol> standard_fast_protocols() {
    return {
        {"fast_a", {{1.0, 0.40}, {0.7, 0.60}, {0.5, 0.80}, {0.3, 1.0}}},
        {"fast_b", {{1.2, 0.25}, {1.0, 0.40}, {0.8, 0.55}, {0.6, 0.70}, {0.4, 0.85}, {0.25, 1.0}}},
        {"fast_c", {{0.9, 0.60}, {0.35, 1.0}}},
    };
}

std::vector<Protocol> alternate_fast_protocols() {
    return {
        {"alt_a", {{1.1, 0.30}, {0.55, 0.65}, {0.35, 1.0}}},
        {"alt_b", {{0.8, 0.20}, {1.3, 0.45}, {0.6, 0.62}, {0.45, 0.78}, {0.3, 1.0}}},
        {"alt_c", {{0.5, 0.50}, {1.0, 0.75}, {0.25, 1.0}}},
    };
}

SimulatedRun simulate_run(const ModuleModel& model, const Protocol& protocol, double soc_start, double soc_end,
                          double dt_s, const SimNoise& noise, Rng& rng) {
    protocol.validate();
    if (!(soc_start >= 0.0 && soc_start < soc_end && soc_end <= 1.0))
        throw DataError("simulate: need 0 <= soc_start < soc_end <= 1");
    if (dt_s <= 0.0) throw ConfigError("simulate: dt must be positive");

    SimulatedRun run;
    run.profile.protocol = protocol.id;
    run.profile.soc_initial = soc_start;
    run.profile.soc_final = soc_end;

    double c_ah = model.capacity_ah();
    double soc = soc_start;
    double t = 0.0;
    while (true) {
        double current = protocol.current_at(soc, model.c_fresh_ah);
        double v = model.terminal_v(soc, current);
        if (v > model.v_max)
            throw SimError("protocol '" + protocol.id + "' infeasible: " + std::to_string(v) + " V exceeds limit");
        run.profile.t_s.push_back(t);
        run.profile.current_a.push_back(std::max(1e-6, current + (noise.sigma_i_a > 0.0 ? rng.normal(0.0, noise.sigma_i_a) : 0.0)));
        run.profile.voltage_v.push_back(v + (noise.sigma_v_v > 0.0 ? rng.normal(0.0, noise.sigma_v_v) : 0.0));
        run.soc.push_back(soc);
        if (soc >= soc_end) break;

        double dsoc = current * dt_s / (3600.0 * c_ah);
        if (soc + dsoc >= soc_end) {
            // truncate the final step so the run lands exactly on soc_end
            double frac = (soc_end - soc) / dsoc;
            t += dt_s * frac;
            soc = soc_end;
        } else {
            t += dt_s;
            soc += dsoc;
        }
    }
    return run;
}

ChargingProfile simulate_charge(const ModuleModel& model, const Protocol& protocol, double soc_start, double soc_end,
                                double dt_s, const SimNoise& noise, Rng& rng) {
    return simulate_run(model, protocol, soc_start, soc_end, dt_s, noise, rng).profile;
}

CurveTriple analytic_ic(const ModuleModel& model, double ref_current_a, const OutputGridConfig& grid) {
    if (grid.n_points < 2 || grid.soc_final <= grid.soc_initial) throw ConfigError("analytic_ic: bad output grid");
    CurveTriple out;
    out.soc_initial = grid.soc_initial;
    out.soc_final = grid.soc_final;
    out.q_ah.resize(grid.n_points);
    out.v_v.resize(grid.n_points);
    out.ic_ah_per_v.resize(grid.n_points);
    double c_ah = model.capacity_ah();
    double ir = ref_current_a * model.r_internal();
    double soc_step = (grid.soc_final - grid.soc_initial) / static_cast<double>(grid.n_points - 1);
    for (int k = 0; k < grid.n_points; ++k) {
        double soc = grid.soc_initial + soc_step * static_cast<double>(k);
        double v_ocv = model.ocv(soc);
        out.q_ah[k] = soc_step * c_ah * static_cast<double>(k);
        out.v_v[k] = v_ocv + ir;
        out.ic_ah_per_v[k] = c_ah * model.dsoc_dv(v_ocv);
    }
    return out;
}

std::pair<double, double> sample_truncation(const TruncationSampler& sampler, Rng& rng) {
    double total = sampler.soc_high - sampler.soc_low;
    if (sampler.min_span > total + 1e-12) throw ConfigError("truncation sampler: min_span exceeds the SOC window");
    double slack = std::max(0.0, total - sampler.min_span);
    if (slack == 0.0) return {sampler.soc_low, sampler.soc_high};
    // Dirichlet(1,1,1) via normalized exponentials: uniform over the simplex
    double e1 = -std::log(1.0 - rng.uniform());
    double e2 = -std::log(1.0 - rng.uniform());
    double e3 = -std::log(1.0 - rng.uniform());
    double sum = e1 + e2 + e3;
    if (sum <= 0.0) { e1 = e2 = e3 = 1.0; sum = 3.0; }
    double left = e1 / sum * slack;
    double excess = e2 / sum * slack;
    double s_i = sampler.soc_low + left;
    double s_f = s_i + sampler.min_span + excess;
    return {s_i, std::min(s_f, sampler.soc_high)};
}

ChargingProfile truncate_run(const SimulatedRun& run, double soc_initial, double soc_final) {
    std::size_t n = run.soc.size();
    std::size_t begin = 0;
    while (begin < n && run.soc[begin] < soc_initial) ++begin;
    std::size_t end = n;
    while (end > begin && run.soc[end - 1] > soc_final) --end;
    if (end - begin < 2) throw WindowError("truncation window keeps fewer than 2 samples");

    ChargingProfile out;
    out.protocol = run.profile.protocol;
    out.soc_initial = run.soc[begin];
    out.soc_final = run.soc[end - 1];
    double t0 = run.profile.t_s[begin];
    for (std::size_t i = begin; i < end; ++i) {
        out.t_s.push_back(run.profile.t_s[i] - t0);
        out.current_a.push_back(run.profile.current_a[i]);
        out.voltage_v.push_back(run.profile.voltage_v[i]);
    }
    return out;
}

std::vector<std::string> split_modules(int n_modules, double train_frac, double val_frac, double test_frac, Rng rng) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split: fractions must sum to 1");
    std::vector<int> order(n_modules);
    for (int i = 0; i < n_modules; ++i) order[i] = i;
    rng.shuffle(order);
    int n_train = static_cast<int>(std::floor(train_frac * n_modules));
    int n_val = static_cast<int>(std::floor(val_frac * n_modules));
    int n_test = n_modules - n_train - n_val;
    if ((train_frac > 0 && n_train == 0) || (val_frac > 0 && n_val == 0) || (test_frac > 0 && n_test == 0))
        throw DataError("split: too few modules for nonempty splits");
    std::vector<std::string> split(n_modules);
    for (int i = 0; i < n_modules; ++i) {
        if (i < n_train)
            split[order[i]] = "train";
        else if (i < n_train + n_val)
            split[order[i]] = "val";
        else
            split[order[i]] = "test";
    }
    return split;
}

} // namespace vicnet
