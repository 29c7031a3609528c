// mfica: independent component analysis of multivariate functional data.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfica/commands.hpp"

namespace {

using namespace mfica;

std::optional<Interval> parse_interval(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw InputError("--interval must look like a,b");
    const double lo = io::parse_double(std::string(io::trim(s.substr(0, comma))), 0, "interval start");
    const double hi = io::parse_double(std::string(io::trim(s.substr(comma + 1))), 0, "interval end");
    if (!(hi > lo)) throw InputError("--interval needs a < b");
    return Interval{lo, hi};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Independent component analysis for multivariate functional data"};
    app.require_subcommand(1);

    cli::FitArgs fit;
    std::string interval;
    auto* fit_cmd = app.add_subcommand("fit", "Fit Fourier basis coefficients to sampled curves");
    fit_cmd->add_option("--input", fit.input, "Curves CSV (obs_id,component,t,value)")->required();
    fit_cmd->add_option("--output-dir", fit.output_dir, "Directory for coefficients.csv and basis.json");
    fit_cmd->add_option("--basis-k", fit.basis_k, "Number of Fourier basis functions (odd)")->capture_default_str();
    fit_cmd->add_option("--interval", interval, "Basis interval a,b (default: observed time range)");
    fit_cmd->add_option("--ridge", fit.ridge, "Optional ridge penalty for underdetermined curves")->capture_default_str();

    cli::IcaArgs ica;
    std::optional<int> ica_d;
    std::string ica_method = "jade";
    auto* ica_cmd = app.add_subcommand("ica", "Estimate the unmixing model from coefficients");
    ica_cmd->add_option("--input", ica.input, "coefficients.csv")->required();
    ica_cmd->add_option("--basis", ica.basis, "basis.json (default: next to the input)");
    ica_cmd->add_option("--output-dir", ica.output_dir, "Directory for model, loadings and scores");
    ica_cmd->add_option("--d", ica_d, "Reduced dimension (default: p)");
    ica_cmd->add_option("--method", ica_method, "pca, fobi or jade")->capture_default_str();

    cli::ScoresArgs scores;
    auto* scores_cmd = app.add_subcommand("scores", "Apply a saved model to coefficients");
    scores_cmd->add_option("--input", scores.input, "coefficients.csv")->required();
    scores_cmd->add_option("--model", scores.model, "model.json from 'ica'")->required();
    scores_cmd->add_option("--output-dir", scores.output_dir, "Directory for scores.csv");

    cli::SimulateArgs sim;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps, par;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the Monte-Carlo separation study");
    sim_cmd->add_option("--config", sim.config, "Study config JSON (default: full grid)");
    sim_cmd->add_option("--output-dir", sim.output_dir, "Directory for mdi_results.csv and mdi_summary.csv");
    sim_cmd->add_option("--seed", seed, "Master seed (overrides config)");
    sim_cmd->add_option("--replications", reps, "Replications per grid cell (overrides config)");
    sim_cmd->add_option("--parallelism", par, "Worker threads (overrides config)");

    cli::MdiArgs mdi;
    std::optional<int> mdi_k;
    auto* mdi_cmd = app.add_subcommand("mdi", "Minimum distance index of a matrix CSV");
    mdi_cmd->add_option("--input", mdi.input, "Headerless numeric CSV")->required();
    mdi_cmd->add_option("--basis-k", mdi_k, "Treat input as a d x pK gain and collapse blocks of K");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::ok : cli::input_error;
    }

    try {
        if (*fit_cmd) {
            fit.interval = parse_interval(interval);
            cli::cmd_fit(fit);
        } else if (*ica_cmd) {
            ica.d = ica_d;
            ica.method = parse_method(ica_method);
            const auto r = cli::cmd_ica(ica);
            for (const auto& w : r.model.warnings) std::cerr << "warning: " << w << '\n';
        } else if (*scores_cmd) {
            cli::cmd_scores(scores);
        } else if (*sim_cmd) {
            sim.seed = seed;
            sim.replications = reps;
            sim.parallelism = par;
            const auto outcome = cli::cmd_simulate(sim);
            if (outcome.failures > 0) return cli::numerical_failure;
        } else if (*mdi_cmd) {
            mdi.basis_k = mdi_k;
            std::cout << format_double(cli::cmd_mdi(mdi)) << '\n';
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::input_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return cli::numerical_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::input_error;
    }
    return cli::ok;
}
