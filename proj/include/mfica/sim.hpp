#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "mfica/basis.hpp"
#include "mfica/eval.hpp"
#include "mfica/fpca.hpp"
#include "mfica/ica.hpp"
#include "mfica/matalg.hpp"

namespace mfica {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Independent stream seed for replication `index` of a study seeded with `master`.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    return mix64(master ^ mix64((index + 1) * golden_gamma));
}

/**
 * Counter-based SplitMix64: draw k is mix64(seed + (k + 1) * gamma), so a
 * stream is fully determined by its seed and position.
 *
 * Every distribution below is a fixed transform of this stream, never a
 * std:: distribution, so draws are identical across standard libraries.
 * Uniforms use the top 53 bits; normals use Box-Muller with the sine branch
 * cached; exponentials invert the CDF; integer-shape gammas and chi-squares
 * are sums of exponentials and squared normals.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * golden_gamma); }

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal()
    {
        if (cached_) {
            const double v = *cached_;
            cached_.reset();
            return v;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * std::numbers::pi * uniform();
        cached_ = r * std::sin(theta);
        return r * std::cos(theta);
    }

    double exponential() { return -std::log(uniform()); }

    /// Gamma with integer shape and the given rate.
    double gamma_int(int shape, double rate)
    {
        double s = 0.0;
        for (int i = 0; i < shape; ++i) s += exponential();
        return s / rate;
    }

    double chi_squared(int dof)
    {
        double s = 0.0;
        for (int i = 0; i < dof; ++i) {
            const double z = normal();
            s += z * z;
        }
        return s;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::optional<double> cached_;
};

// ---------------------------------------------------------------------------
// Simulation design
// ---------------------------------------------------------------------------

enum class Setting { S1, S2 };

inline const char* to_string(Setting s) { return s == Setting::S1 ? "S1" : "S2"; }

inline Setting parse_setting(const std::string& s)
{
    if (s == "S1" || s == "s1" || s == "1") return Setting::S1;
    if (s == "S2" || s == "s2" || s == "2") return Setting::S2;
    throw InputError("unknown setting '" + s + "' (expected S1 or S2)");
}

inline constexpr int sim_p = 4;
inline constexpr int sim_K = 11;

struct SimConfig {
    Setting setting = Setting::S1;
    int n = 1000;
    double lambda_mix = 2.0;
    int d = sim_p;
    std::vector<Method> methods{Method::PCA, Method::FOBI, Method::JADE};
    std::uint64_t seed = 1;
    int replications = 100;
};

inline void validate(const SimConfig& cfg)
{
    detail::require(cfg.lambda_mix > 0.0 && std::isfinite(cfg.lambda_mix), "simulation: lambda must be positive");
    detail::require(cfg.d == sim_p, "simulation: d must equal p = 4 so the collapsed gain is square");
    detail::require(cfg.n >= cfg.d + 1, "simulation: need n >= d + 1");
    detail::require(cfg.replications >= 0, "simulation: replications must be non-negative");
    detail::require(!cfg.methods.empty(), "simulation: no methods selected");
}

/// Position of the leading coefficient of component j in the component-major layout.
inline constexpr int leading_index(int j) { return j * sim_K; }

/**
 * n x 44 latent coefficients. Leading coefficient of each component follows
 * the setting (standardized analytically); the other 40 are standard normal.
 *   S1: Uniform(0,1), Gamma(shape 3, rate sqrt 3), chi^2_3, Exp(1)
 *   S2: four Uniform(0,1)
 */
inline Eigen::MatrixXd gen_sources(Setting setting, int n, Rng& rng)
{
    detail::require(n >= 1, "gen_sources: n must be positive");
    const double sqrt3 = std::sqrt(3.0);
    const double sqrt12 = std::sqrt(12.0);
    auto std_uniform = [&] { return (rng.uniform() - 0.5) * sqrt12; };

    Eigen::MatrixXd Z(n, sim_p * sim_K);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < sim_p; ++j) {
            for (int k = 0; k < sim_K; ++k) {
                double v;
                if (k != 0) {
                    v = rng.normal();
                } else if (setting == Setting::S2) {
                    v = std_uniform();
                } else {
                    switch (j) {
                    case 0: v = std_uniform(); break;
                    case 1: v = rng.gamma_int(3, sqrt3) - sqrt3; break;
                    case 2: v = (rng.chi_squared(3) - 3.0) / std::sqrt(6.0); break;
                    default: v = rng.exponential() - 1.0; break;
                    }
                }
                Z(i, j * sim_K + k) = v;
            }
        }
    }
    return Z;
}

struct MixingSpec {
    Eigen::MatrixXd omega;
    Eigen::MatrixXd a;
    Eigen::MatrixXd b_sqrt;
    std::array<int, sim_p> leading_indices{};
    double lambda_mix = 0.0;
};

/// Omega mixes only the leading coefficients through the symmetric root of
/// B = A A^T + lambda I and is the identity elsewhere.
inline MixingSpec gen_mixing(double lambda_mix, Rng& rng)
{
    detail::require(lambda_mix > 0.0, "gen_mixing: lambda must be positive");
    MixingSpec m;
    m.lambda_mix = lambda_mix;
    m.a.resize(sim_p, sim_p);
    for (int r = 0; r < sim_p; ++r)
        for (int c = 0; c < sim_p; ++c) m.a(r, c) = rng.normal();
    const Eigen::MatrixXd B = m.a * m.a.transpose() + lambda_mix * Eigen::MatrixXd::Identity(sim_p, sim_p);
    m.b_sqrt = sym_sqrt(B);

    const int dim = sim_p * sim_K;
    m.omega = Eigen::MatrixXd::Identity(dim, dim);
    for (int r = 0; r < sim_p; ++r) m.leading_indices[r] = leading_index(r);
    for (int r = 0; r < sim_p; ++r)
        for (int c = 0; c < sim_p; ++c)
            m.omega(m.leading_indices[r], m.leading_indices[c]) = m.b_sqrt(r, c);
    return m;
}

struct ReplicationRecord {
    Setting setting = Setting::S1;
    double lambda_mix = 0.0;
    int n = 0;
    Method method = Method::JADE;
    int replication = 0;
    std::uint64_t seed = 0;
    std::optional<double> mdi;
    std::string error;
};

/// Simulated coefficient data for one replication, before analysis.
struct ReplicationData {
    MixingSpec mixing;
    Eigen::MatrixXd sources;
    CoefMatrix observed;
};

inline ReplicationData simulate_replication_data(const SimConfig& cfg, std::uint64_t rep_seed)
{
    Rng rng(rep_seed);
    ReplicationData out;
    out.mixing = gen_mixing(cfg.lambda_mix, rng);
    out.sources = gen_sources(cfg.setting, cfg.n, rng);
    out.observed = make_coef_matrix(out.sources * out.mixing.omega.transpose(), sim_p, sim_K);
    return out;
}

/// One replication: mixed data, FPCA + whitening, each method's unmixing,
/// gain W * Omega, block collapse and minimum distance index. Failures are
/// captured per record, never thrown.
inline std::vector<ReplicationRecord> run_replication(const SimConfig& cfg, int rep_index)
{
    const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep_index));
    std::vector<ReplicationRecord> out;
    for (Method m : cfg.methods) {
        ReplicationRecord r;
        r.setting = cfg.setting;
        r.lambda_mix = cfg.lambda_mix;
        r.n = cfg.n;
        r.method = m;
        r.replication = rep_index;
        r.seed = rep_seed;
        out.push_back(r);
    }
    try {
        validate(cfg);
        const ReplicationData data = simulate_replication_data(cfg, rep_seed);
        const CoefMatrix centered = center_coefficients(data.observed);
        const FpcaModel fpca = fpca_reduce(centered, Eigen::MatrixXd::Identity(sim_K, sim_K), cfg.d);
        const WhitenedScores w = whiten(centered, fpca);
        for (auto& rec : out) {
            try {
                const UnmixingModel u = fit_method(w, rec.method);
                rec.mdi = summarize_gain(u.loadings, data.mixing.omega, sim_p, sim_K).mdi;
            } catch (const std::exception& e) {
                rec.error = e.what();
            }
        }
    } catch (const std::exception& e) {
        for (auto& rec : out) rec.error = e.what();
    }
    return out;
}

struct StudyResult {
    std::vector<ReplicationRecord> records;
    int failures = 0;
};

namespace detail {

inline auto record_key(const ReplicationRecord& r)
{
    return std::make_tuple(static_cast<int>(r.setting), r.lambda_mix, r.n, static_cast<int>(r.method),
                           r.replication);
}

} // namespace detail

/**
 * Runs every replication of every config. Records are sorted by
 * (setting, lambda, n, method, replication), so the output does not depend
 * on `parallelism` or completion order.
 */
inline StudyResult run_study(const std::vector<SimConfig>& grid, int parallelism = 1)
{
    struct Task {
        const SimConfig* cfg;
        int rep;
    };
    std::vector<Task> tasks;
    for (const auto& cfg : grid)
        for (int r = 0; r < cfg.replications; ++r) tasks.push_back({&cfg, r});

    std::vector<std::vector<ReplicationRecord>> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++)
            slots[t] = run_replication(*tasks[t].cfg, tasks[t].rep);
    };
    const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(tasks.size())));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    }

    StudyResult res;
    for (auto& s : slots)
        for (auto& r : s) {
            if (!r.mdi) ++res.failures;
            res.records.push_back(std::move(r));
        }
    std::stable_sort(res.records.begin(), res.records.end(), [](const auto& a, const auto& b) {
        return detail::record_key(a) < detail::record_key(b);
    });
    return res;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double v)
{
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

/// Per-replication CSV: setting,lambda,n,method,replication,mdi,seed.
/// Failed replications leave the mdi field empty.
inline std::string study_csv(const StudyResult& res)
{
    std::string out = "setting,lambda,n,method,replication,mdi,seed\n";
    for (const auto& r : res.records) {
        out += to_string(r.setting);
        out += ',' + format_double(r.lambda_mix) + ',' + std::to_string(r.n) + ',' + to_string(r.method) + ','
               + std::to_string(r.replication) + ',' + (r.mdi ? format_double(*r.mdi) : std::string()) + ','
               + std::to_string(r.seed) + '\n';
    }
    return out;
}

struct SummaryRow {
    Setting setting;
    double lambda_mix;
    int n;
    Method method;
    int count;
    int failed;
    double mean_mdi;
};

/// Mean index per (setting, lambda, n, method) over successful replications.
inline std::vector<SummaryRow> summarize_study(const StudyResult& res)
{
    std::vector<SummaryRow> rows;
    for (const auto& r : res.records) {
        if (rows.empty() || rows.back().setting != r.setting || rows.back().lambda_mix != r.lambda_mix
            || rows.back().n != r.n || rows.back().method != r.method) {
            rows.push_back({r.setting, r.lambda_mix, r.n, r.method, 0, 0, 0.0});
        }
        auto& row = rows.back();
        if (r.mdi) {
            ++row.count;
            row.mean_mdi += *r.mdi;
        } else {
            ++row.failed;
        }
    }
    for (auto& row : rows)
        row.mean_mdi = row.count > 0 ? row.mean_mdi / row.count : std::nan("");
    return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows)
{
    std::string out = "setting,lambda,n,method,replications,failed,mean_mdi\n";
    for (const auto& r : rows) {
        out += to_string(r.setting);
        out += ',' + format_double(r.lambda_mix) + ',' + std::to_string(r.n) + ',' + to_string(r.method) + ','
               + std::to_string(r.count) + ',' + std::to_string(r.failed) + ','
               + (r.count > 0 ? format_double(r.mean_mdi) : std::string()) + '\n';
    }
    return out;
}

/// Full study grid: both settings, lambda in {0.5, ..., 2.5}, n in {1000, ..., 64000}.
inline std::vector<SimConfig> full_grid(std::uint64_t seed, int replications)
{
    std::vector<SimConfig> grid;
    for (Setting s : {Setting::S1, Setting::S2})
        for (double lam : {0.5, 1.0, 1.5, 2.0, 2.5})
            for (int n : {1000, 2000, 4000, 8000, 16000, 32000, 64000}) {
                SimConfig c;
                c.setting = s;
                c.lambda_mix = lam;
                c.n = n;
                c.seed = seed;
                c.replications = replications;
                grid.push_back(c);
            }
    return grid;
}

} // namespace mfica
