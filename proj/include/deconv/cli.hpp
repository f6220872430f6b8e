#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adjoint.hpp"
#include "errors.hpp"
#include "functionals.hpp"
#include "io.hpp"
#include "laplace_location.hpp"
#include "model.hpp"
#include "montecarlo.hpp"
#include "npmle.hpp"

namespace deconv {

// Command-line front end.  Exit codes: 0 success, 1 usage error, 2 model or
// runtime error (with a one-line machine-parsable JSON record on stderr).

namespace detail {

inline std::vector<std::size_t> parse_grid_list(const std::string& text) {
    std::vector<std::size_t> sizes;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string tok = text.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(tok, &pos);
            if (pos != tok.size() || v < 2) throw ParseError("x");
            sizes.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ParseError("bad grid list entry: " + tok);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (sizes.empty()) throw ParseError("empty grid list");
    return sizes;
}

} // namespace detail

/// Entry point shared by the binary and the tests.  `args` excludes the
/// program name.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"Nonparametric deconvolution toolkit: NPMLE fitting, "
                 "functional estimation, adjoint probes and Monte Carlo studies"};
    app.require_subcommand(1);

    // ----- simulate -----
    std::string sim_mixing, sim_kernel, sim_out;
    double sim_param = 1.0;
    std::size_t sim_n = 0;
    std::uint64_t sim_seed = 0;
    CLI::App* sim = app.add_subcommand("simulate", "Draw a seeded sample X = Y + Z");
    sim->add_option("--mixing", sim_mixing, "mixing distribution JSON file")->required();
    sim->add_option("--kernel", sim_kernel, "noise kernel: exp | laplace")->required();
    sim->add_option("--param", sim_param, "kernel parameter (rate or scale)")->required();
    sim->add_option("--n", sim_n, "sample size")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", sim_seed, "64-bit master seed")->required();
    sim->add_option("--out", sim_out, "output CSV path")->required();
    sim->callback([&] {
        const DiscreteDistribution mixing = io::read_mixing_json(sim_mixing);
        const NoiseKernel kernel = io::kernel_from_name(sim_kernel, sim_param);
        const Sample xs = simulate(mixing, kernel, sim_n, sim_seed);
        io::write_sample_csv(sim_out, xs.data());
    });

    // ----- fit -----
    std::string fit_data, fit_kernel, fit_out;
    double fit_param = 1.0, fit_tol = 1e-8;
    std::size_t fit_max_iter = 100000;
    CLI::App* fit = app.add_subcommand("fit", "Compute the discrete NPMLE by EM");
    fit->add_option("--data", fit_data, "sample CSV file")->required();
    fit->add_option("--kernel", fit_kernel, "noise kernel: exp | laplace")->required();
    fit->add_option("--param", fit_param, "kernel parameter")->required();
    fit->add_option("--tol", fit_tol, "gradient certificate tolerance");
    fit->add_option("--max-iter", fit_max_iter, "EM iteration cap");
    fit->add_option("--out", fit_out, "output JSON path")->required();
    fit->callback([&] {
        const Sample xs(io::read_sample_csv(fit_data));
        const NoiseKernel kernel = io::kernel_from_name(fit_kernel, fit_param);
        NpmleConfig cfg;
        cfg.tol_gradient = fit_tol;
        cfg.max_iterations = fit_max_iter;
        io::write_text_file(fit_out, io::to_json(fit_npmle(xs, kernel, cfg)));
    });

    // ----- estimate -----
    std::string est_data, est_functional, est_method = "naive", est_kernel, est_out;
    double est_param = 1.0, est_level = 0.95;
    CLI::App* est = app.add_subcommand(
        "estimate", "Point estimate and confidence interval for psi(F)");
    est->add_option("--data", est_data, "sample CSV file")->required();
    est->add_option("--functional", est_functional,
                    "mean | moment:r | mgf:t | cdf:y1 | interval:y1,y2")
        ->required();
    est->add_option("--method", est_method, "naive | plugin")
        ->check(CLI::IsMember({"naive", "plugin"}));
    est->add_option("--level", est_level, "confidence level in (0,1)");
    est->add_option("--kernel", est_kernel, "noise kernel: exp | laplace")->required();
    est->add_option("--param", est_param, "kernel parameter");
    est->add_option("--out", est_out, "output JSON path")->required();
    est->callback([&] {
        const Sample xs(io::read_sample_csv(est_data));
        const FunctionalSpec spec = io::parse_functional(est_functional);
        const NoiseKernel kernel = io::kernel_from_name(est_kernel, est_param);
        if (est_method == "naive") {
            io::write_text_file(est_out,
                                io::to_json(confidence_interval(spec, xs, est_level)));
            return;
        }
        const NpmleResult fit_res = fit_npmle(xs, kernel, NpmleConfig{});
        const double psi = plug_in_estimate(spec, fit_res);
        if (spec.regular() && xs.n() >= 2) {
            EstimateReport rep = confidence_interval(spec, xs, est_level);
            const double z = normal_quantile(0.5 + 0.5 * est_level);
            rep.method = "plug_in_npmle";
            rep.psi_hat = psi;
            rep.ci_lo = psi - z * rep.std_error;
            rep.ci_hi = psi + z * rep.std_error;
            io::write_text_file(est_out, io::to_json(rep));
        } else {
            // Indicator functionals admit a point value but no normal interval.
            std::string out = "{";
            out += "\"method\":\"plug_in_npmle\"";
            out += ",\"psi_hat\":" + io::fmt(psi);
            out += ",\"std_error\":null,\"ci_level\":null,\"ci_lo\":null,\"ci_hi\":null";
            out += ",\"n\":" + io::fmt(xs.n());
            out += ",\"functional\":" + io::quote(spec.name());
            out += "}\n";
            io::write_text_file(est_out, out);
        }
    });

    // ----- median -----
    std::string med_data, med_out;
    double med_scale = 1.0;
    CLI::App* med =
        app.add_subcommand("median", "Sample-median MLE for the Laplace location model");
    med->add_option("--data", med_data, "sample CSV file")->required();
    med->add_option("--scale", med_scale, "known Laplace scale s")->required();
    med->add_option("--out", med_out, "output JSON path")->required();
    med->callback([&] {
        const Sample xs(io::read_sample_csv(med_data));
        io::write_text_file(med_out, io::to_json(median_mle(xs, med_scale)));
    });

    // ----- adjoint -----
    std::string adj_functional, adj_kernel, adj_mixing, adj_grids = "129,257,513",
                adj_out;
    double adj_param = 1.0;
    CLI::App* adj = app.add_subcommand(
        "adjoint", "Least-squares probe of the adjoint (differentiability) equation");
    adj->add_option("--functional", adj_functional, "functional spec")->required();
    adj->add_option("--kernel", adj_kernel, "noise kernel: exp | laplace")->required();
    adj->add_option("--param", adj_param, "kernel parameter");
    adj->add_option("--mixing", adj_mixing, "mixing distribution JSON file")->required();
    adj->add_option("--grids", adj_grids, "comma-separated x-grid sizes");
    adj->add_option("--out", adj_out, "output JSON path")->required();
    adj->callback([&] {
        const FunctionalSpec spec = io::parse_functional(adj_functional);
        const NoiseKernel kernel = io::kernel_from_name(adj_kernel, adj_param);
        const DiscreteDistribution mixing = io::read_mixing_json(adj_mixing);
        const double pad = 40.0 * kernel.scale();
        const double lo = kernel.variant == KernelVariant::exponential
                              ? mixing.min_support()
                              : mixing.min_support() - pad;
        const std::pair<double, double> window{lo, mixing.max_support() + pad};
        const AdjointSolveReport rep = solve_adjoint(
            spec, kernel, mixing, window, detail::parse_grid_list(adj_grids));
        io::write_text_file(adj_out, io::to_json(rep));
    });

    // ----- study -----
    std::string study_config, study_out_dir;
    CLI::App* study =
        app.add_subcommand("study", "Seeded Monte Carlo replication study");
    study->add_option("--config", study_config, "study configuration JSON")->required();
    study->add_option("--out-dir", study_out_dir, "output directory")->required();
    study->callback([&] {
        const StudyConfig cfg = io::read_study_config(study_config);
        const StudyReport rep = run_study(cfg);
        std::error_code ec;
        std::filesystem::create_directories(study_out_dir, ec);
        if (ec) throw IoError("cannot create directory: " + study_out_dir);
        const std::filesystem::path dir(study_out_dir);
        io::write_text_file((dir / "report.json").string(), io::to_json(rep));
        io::write_text_file((dir / "report.csv").string(), io::to_csv(rep));
    });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const Error& e) {
        std::cerr << "{\"error\":" << io::quote(e.name())
                  << ",\"detail\":" << io::quote(e.what()) << "}" << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"InternalError\",\"detail\":" << io::quote(e.what())
                  << "}" << std::endl;
        return 2;
    }
    return 0;
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(std::move(args));
}

} // namespace deconv
