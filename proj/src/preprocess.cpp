#include "vicnet/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vicnet {

void ChargingProfile::validate() const {
    if (t_s.size() < 2) throw DataError("charging profile needs at least 2 samples");
    if (current_a.size() != t_s.size() || voltage_v.size() != t_s.size())
        throw DataError("charging profile column lengths differ");
    for (std::size_t i = 1; i < t_s.size(); ++i)
        if (t_s[i] < t_s[i - 1]) throw DataError("charging profile time not monotone nondecreasing");
    for (double i : current_a)
        if (i <= 0.0) throw DataError("charging profile has non-positive current (charging only)");
}

ChargeDomainProfile coulomb_count(const ChargingProfile& p) {
    p.validate();
    ChargeDomainProfile q;
    q.dq_ah.resize(p.t_s.size());
    q.current_a = p.current_a;
    q.voltage_v = p.voltage_v;
    q.dq_ah[0] = 0.0;
    for (std::size_t i = 1; i < p.t_s.size(); ++i) {
        double dt_h = (p.t_s[i] - p.t_s[i - 1]) / 3600.0;
        q.dq_ah[i] = q.dq_ah[i - 1] + 0.5 * (p.current_a[i] + p.current_a[i - 1]) * dt_h;
    }
    q.total_charge_ah = q.dq_ah.back();
    return q;
}

double compute_increment(double max_soc_span, double c_fresh_ah, int n_nn) {
    if (max_soc_span <= 0.0 || c_fresh_ah <= 0.0 || n_nn <= 0)
        throw ConfigError("compute_increment: arguments must be positive");
    return max_soc_span * c_fresh_ah / static_cast<double>(n_nn);
}

namespace {

double interp_on_grid(const std::vector<double>& grid, const std::vector<double>& y, double x, std::size_t& hint) {
    // grid is nondecreasing; advance the hint cursor (queries come in order)
    while (hint + 1 < grid.size() && grid[hint + 1] < x) ++hint;
    std::size_t i = hint;
    if (grid[i + 1] <= grid[i]) return y[i]; // repeated charge value (zero-dt rows)
    double w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    w = std::clamp(w, 0.0, 1.0);
    return y[i] + w * (y[i + 1] - y[i]);
}

} // namespace

Downsampled downsample(const ChargeDomainProfile& q, double delta_q) {
    if (delta_q <= 0.0) throw ConfigError("downsample: delta_q must be positive");
    if (q.total_charge_ah < delta_q)
        throw WindowError("profile too small: total charge " + std::to_string(q.total_charge_ah) +
                          " Ah < increment " + std::to_string(delta_q) + " Ah");
    // floor with a round-off guard so an exact multiple keeps its last sample
    int n_whole = static_cast<int>(std::floor(q.total_charge_ah / delta_q + 1e-9));
    int n_point = n_whole + 1;
    Downsampled out;
    out.current_a.resize(n_point);
    out.voltage_v.resize(n_point);
    std::size_t hint_i = 0, hint_v = 0;
    for (int k = 0; k < n_point; ++k) {
        double x = std::min(static_cast<double>(k) * delta_q, q.total_charge_ah);
        out.current_a[k] = interp_on_grid(q.dq_ah, q.current_a, x, hint_i);
        out.voltage_v[k] = interp_on_grid(q.dq_ah, q.voltage_v, x, hint_v);
    }
    return out;
}

std::vector<double> pad_symmetric(const std::vector<double>& x, int n_nn) {
    int n = static_cast<int>(x.size());
    if (n < 1) throw WindowError("pad_symmetric: empty sequence");
    if (n > n_nn)
        throw WindowError("pad_symmetric: sequence length " + std::to_string(n) + " exceeds target " +
                          std::to_string(n_nn));
    std::vector<double> out(n_nn);
    std::copy(x.begin(), x.end(), out.begin());
    // mirror back and forth: alternating reversed and forward copies, so
    // [a,b,c] to length 8 gives [a,b,c,c,b,a,a,b]
    for (int j = n; j < n_nn; ++j) {
        int p = j - n;
        int block = p / n;
        int pos = p % n;
        out[j] = block % 2 == 0 ? x[n - 1 - pos] : x[pos];
    }
    return out;
}

nn::NormEntry fit_norm_stats(const std::vector<std::vector<double>>& training_sequences) {
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& seq : training_sequences) {
        n += seq.size();
        for (double v : seq) sum += v;
    }
    if (training_sequences.size() < 2 || n == 0) throw DataError("fit_norm_stats: need at least 2 training samples");
    double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& seq : training_sequences)
        for (double v : seq) sq += (v - mean) * (v - mean);
    double stddev = std::sqrt(sq / static_cast<double>(n)); // population std
    if (stddev <= 0.0) throw DataError("fit_norm_stats: degenerate (constant) signal");
    return {mean, stddev};
}

std::vector<double> standardize(const std::vector<double>& x, const nn::NormEntry& stats) {
    if (stats.stddev <= 0.0) throw DataError("standardize: sigma must be positive");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - stats.mean) / stats.stddev;
    return out;
}

std::vector<double> destandardize(const std::vector<double>& x, const nn::NormEntry& stats) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * stats.stddev + stats.mean;
    return out;
}

bool check_window(double total_charge_ah, double soc_min_span, double c_fresh_ah, double soh_floor) {
    return total_charge_ah >= soc_min_span * c_fresh_ah * soh_floor;
}

PreprocessedInput preprocess_profile(const ChargingProfile& p, const PreprocessConfig& cfg,
                                     const nn::NormEntry& i_stats, const nn::NormEntry& v_stats) {
    ChargeDomainProfile q = coulomb_count(p);
    double dq = cfg.delta_q();
    Downsampled ds = downsample(q, dq);
    PreprocessedInput out;
    out.n_point = static_cast<int>(ds.current_a.size());
    out.delta_q = dq;
    out.current = standardize(pad_symmetric(ds.current_a, cfg.n_nn), i_stats);
    out.voltage = standardize(pad_symmetric(ds.voltage_v, cfg.n_nn), v_stats);
    return out;
}

ChargingProfile read_profile_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open profile '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty profile file '" + path + "'");
    if (line != "t_s,current_a,voltage_v")
        throw DataError("profile '" + path + "': unexpected header '" + line + "'");
    ChargingProfile p;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        double col[3];
        const char* ptr = line.data();
        const char* end = line.data() + line.size();
        for (int c = 0; c < 3; ++c) {
            auto [next, ec] = std::from_chars(ptr, end, col[c]);
            if (ec != std::errc()) throw DataError("profile '" + path + "': bad row '" + line + "'");
            ptr = next;
            if (c < 2) {
                if (ptr == end || *ptr != ',') throw DataError("profile '" + path + "': bad row '" + line + "'");
                ++ptr;
            }
        }
        p.t_s.push_back(col[0]);
        p.current_a.push_back(col[1]);
        p.voltage_v.push_back(col[2]);
    }
    return p;
}

void write_profile_csv(const ChargingProfile& p, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write profile '" + path + "'");
    std::fputs("t_s,current_a,voltage_v\n", f);
    for (std::size_t i = 0; i < p.t_s.size(); ++i)
        std::fprintf(f, "%.17g,%.17g,%.17g\n", p.t_s[i], p.current_a[i], p.voltage_v[i]);
    std::fclose(f);
}

} // namespace vicnet
