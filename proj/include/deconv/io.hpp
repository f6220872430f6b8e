#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adjoint.hpp"
#include "errors.hpp"
#include "functionals.hpp"
#include "laplace_location.hpp"
#include "model.hpp"
#include "montecarlo.hpp"
#include "npmle.hpp"

namespace deconv {

// All structured artifacts are emitted through a hand-rolled writer with a
// frozen key order and %.17g number formatting, so identical inputs produce
// byte-identical files.  Parsing, in contrast, goes through a tolerant JSON
// library.

namespace io {

inline std::string fmt(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt(unsigned long long v) { return std::to_string(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out + "\"";
}

inline std::string array(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ",";
        out += fmt(v[i]);
    }
    return out + "]";
}

inline std::string array(const std::vector<std::size_t>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ",";
        out += fmt(v[i]);
    }
    return out + "]";
}

// -------------------------------- files ----------------------------------

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

// ------------------------------ sample CSV --------------------------------

/// One decimal float per line, optional single header line "x".
inline std::vector<double> read_sample_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<double> xs;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        if (line.empty()) continue;
        if (first && line == "x") {
            first = false;
            continue;
        }
        first = false;
        try {
            std::size_t pos = 0;
            const double v = std::stod(line, &pos);
            if (pos != line.size()) throw ParseError("trailing characters");
            xs.push_back(v);
        } catch (const ParseError&) {
            throw ParseError("bad CSV line in " + path + ": " + line);
        } catch (const std::exception&) {
            throw ParseError("bad CSV line in " + path + ": " + line);
        }
    }
    if (xs.empty()) throw ParseError("no data in " + path);
    return xs;
}

inline void write_sample_csv(const std::string& path, const std::vector<double>& xs) {
    std::string out = "x\n";
    for (double v : xs) {
        out += fmt(v);
        out += "\n";
    }
    write_text_file(path, out);
}

// ------------------------------ JSON writers ------------------------------

inline std::string to_json(const NpmleResult& r) {
    std::string out = "{";
    out += "\"support\":" + array(r.estimate.support());
    out += ",\"weights\":" + array(r.estimate.weights());
    out += ",\"loglik\":" + fmt(r.final_log_likelihood);
    out += ",\"gradient_sup\":" + fmt(r.gradient_sup);
    out += ",\"iterations\":" + fmt(r.iterations);
    out += ",\"converged\":" + fmt(r.converged);
    return out + "}\n";
}

inline std::string to_json(const EstimateReport& r) {
    std::string out = "{";
    out += "\"method\":" + quote(r.method);
    out += ",\"psi_hat\":" + fmt(r.psi_hat);
    out += ",\"std_error\":" + fmt(r.std_error);
    out += ",\"ci_level\":" + fmt(r.ci_level);
    out += ",\"ci_lo\":" + fmt(r.ci_lo);
    out += ",\"ci_hi\":" + fmt(r.ci_hi);
    out += ",\"n\":" + fmt(r.n);
    out += ",\"functional\":" + quote(r.functional);
    return out + "}\n";
}

inline std::string to_json(const MedianMleReport& r) {
    std::string out = "{";
    out += "\"theta_hat\":" + fmt(r.theta_hat);
    out += ",\"n\":" + fmt(r.n);
    out += ",\"parity\":" + quote(r.parity);
    if (r.exact_var_odd) out += ",\"exact_var_odd\":" + fmt(*r.exact_var_odd);
    out += ",\"asympt_var\":" + fmt(r.asympt_var);
    out += ",\"s\":" + fmt(r.s);
    return out + "}\n";
}

inline std::string to_json(const AdjointSolveReport& r) {
    std::string out = "{";
    out += "\"kernel\":" + quote(r.kernel);
    out += ",\"functional\":" + quote(r.functional);
    out += ",\"grid_sizes\":" + array(r.grid_sizes);
    out += ",\"residuals\":" + array(r.residuals);
    out += ",\"b_grid\":" + array(r.solution_b.grid());
    out += ",\"b_values\":" + array(r.solution_b.values());
    out += ",\"b_norm\":" + fmt(r.b_l2_p0_norm);
    return out + "}\n";
}

inline std::string to_json(const StudyReport& r) {
    std::string out = "{";
    out += "\"scenario\":" + quote(r.scenario_name);
    out += ",\"master_seed\":" + fmt(r.master_seed);
    out += ",\"ci_level\":" + fmt(r.ci_level);
    out += ",\"cells\":[";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const StudyCell& c = r.cells[i];
        if (i > 0) out += ",";
        out += "{";
        out += "\"n\":" + fmt(c.n);
        out += ",\"estimator\":" + quote(c.estimator);
        out += ",\"coverage\":" + fmt(c.empirical_coverage);
        out += ",\"var_root_n_error\":" + fmt(c.empirical_variance_of_root_n_error);
        out += ",\"theoretical_variance\":" +
               (c.theoretical_variance ? fmt(*c.theoretical_variance)
                                       : std::string("null"));
        out += ",\"ks\":" + (c.ks_distance_to_normal ? fmt(*c.ks_distance_to_normal)
                                                     : std::string("null"));
        out += ",\"ks_standardization\":" + quote(c.ks_standardization);
        out += ",\"ks_studentized\":" +
               (c.ks_studentized ? fmt(*c.ks_studentized) : std::string("null"));
        out += ",\"bias\":" + fmt(c.bias);
        out += ",\"rmse\":" + fmt(c.rmse);
        out += ",\"failures\":" + fmt(c.failures);
        out += ",\"replications_used\":" + fmt(c.replications_used);
        out += "}";
    }
    out += "]";
    if (r.rate_slope) {
        out += ",\"rate_slope\":" + fmt(*r.rate_slope);
        out += ",\"rate_slope_se\":" + fmt(*r.rate_slope_se);
        out += ",\"rate_estimator\":" + quote(r.rate_estimator);
    }
    return out + "}\n";
}

inline std::string to_csv(const StudyReport& r) {
    std::string out =
        "n,estimator,coverage,var_root_n_error,theoretical_variance,ks,"
        "ks_standardization,ks_studentized,bias,rmse,failures,replications_used\n";
    for (const StudyCell& c : r.cells) {
        out += fmt(c.n) + "," + c.estimator + "," + fmt(c.empirical_coverage) + "," +
               fmt(c.empirical_variance_of_root_n_error) + ",";
        out += c.theoretical_variance ? fmt(*c.theoretical_variance) : std::string();
        out += ",";
        out += c.ks_distance_to_normal ? fmt(*c.ks_distance_to_normal) : std::string();
        out += "," + c.ks_standardization + ",";
        out += c.ks_studentized ? fmt(*c.ks_studentized) : std::string();
        out += "," + fmt(c.bias) + "," + fmt(c.rmse) + "," + fmt(c.failures) + "," +
               fmt(c.replications_used) + "\n";
    }
    return out;
}

// ------------------------------ JSON parsers ------------------------------

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("invalid JSON in " + what);
    return j;
}

inline DiscreteDistribution mixing_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("support") || !j.contains("weights"))
        throw ParseError("mixing JSON needs \"support\" and \"weights\" arrays");
    try {
        return DiscreteDistribution(j.at("support").get<std::vector<double>>(),
                                    j.at("weights").get<std::vector<double>>());
    } catch (const nlohmann::json::exception&) {
        throw ParseError("mixing JSON arrays must be numeric");
    }
}

inline DiscreteDistribution read_mixing_json(const std::string& path) {
    return mixing_from_json(parse_json_text(read_text_file(path), path));
}

/// Functional micro-grammar: mean | moment:<r> | mgf:<t> | cdf:<y1> |
/// interval:<y1>,<y2>
inline FunctionalSpec parse_functional(const std::string& text) {
    const std::size_t colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail =
        colon == std::string::npos ? std::string() : text.substr(colon + 1);
    auto num = [&](const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw ParseError("x");
            return v;
        } catch (const std::exception&) {
            throw ParseError("bad numeric parameter in functional: " + text);
        }
    };
    if (head == "mean") {
        if (!tail.empty()) throw ParseError("mean takes no parameter");
        return FunctionalSpec::mean();
    }
    if (head == "moment") {
        const double r = num(tail);
        if (r < 1.0 || r != std::floor(r))
            throw ParseError("moment order must be a positive integer");
        return FunctionalSpec::moment(static_cast<unsigned>(r));
    }
    if (head == "mgf") return FunctionalSpec::mgf(num(tail));
    if (head == "cdf") return FunctionalSpec::cdf_at(num(tail));
    if (head == "interval") {
        const std::size_t comma = tail.find(',');
        if (comma == std::string::npos)
            throw ParseError("interval needs two comma-separated bounds");
        return FunctionalSpec::interval_prob(num(tail.substr(0, comma)),
                                             num(tail.substr(comma + 1)));
    }
    throw ParseError("unknown functional: " + text);
}

inline NoiseKernel kernel_from_name(const std::string& name, double param) {
    if (name == "exp" || name == "exponential") return NoiseKernel::exponential(param);
    if (name == "laplace") return NoiseKernel::laplace(param);
    throw ParseError("unknown kernel: " + name + " (use exp or laplace)");
}

/// Study configuration schema (JSON object):
///   scenario_name: string
///   mixing: {support: [..], weights: [..]}
///   kernel: {variant: "exp"|"exponential"|"laplace", param: number}
///   functional: string (micro-grammar above), optional
///   sample_sizes: [ints], replications: int, ci_level: number,
///   master_seed: unsigned int, estimator_set: [strings]
///   npmle: {tol_gradient, max_iterations, weight_prune_threshold}, optional
inline StudyConfig study_config_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw ParseError("study config must be a JSON object");
        for (const char* key :
             {"scenario_name", "mixing", "kernel", "sample_sizes", "replications",
              "ci_level", "master_seed", "estimator_set"})
            if (!j.contains(key))
                throw ParseError(std::string("study config missing key: ") + key);

        const nlohmann::json& jk = j.at("kernel");
        StudyConfig cfg{j.at("scenario_name").get<std::string>(),
                        mixing_from_json(j.at("mixing")),
                        kernel_from_name(jk.at("variant").get<std::string>(),
                                         jk.at("param").get<double>()),
                        std::nullopt,
                        j.at("sample_sizes").get<std::vector<std::size_t>>(),
                        j.at("replications").get<std::size_t>(),
                        j.at("ci_level").get<double>(),
                        j.at("master_seed").get<std::uint64_t>(),
                        j.at("estimator_set").get<std::vector<std::string>>(),
                        NpmleConfig{}};
        if (j.contains("functional"))
            cfg.functional = parse_functional(j.at("functional").get<std::string>());
        if (j.contains("npmle")) {
            const nlohmann::json& jn = j.at("npmle");
            if (jn.contains("tol_gradient"))
                cfg.npmle_config.tol_gradient = jn.at("tol_gradient").get<double>();
            if (jn.contains("max_iterations"))
                cfg.npmle_config.max_iterations =
                    jn.at("max_iterations").get<std::size_t>();
            if (jn.contains("weight_prune_threshold"))
                cfg.npmle_config.weight_prune_threshold =
                    jn.at("weight_prune_threshold").get<double>();
        }
        return cfg;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad study config: ") + ex.what());
    }
}

inline StudyConfig read_study_config(const std::string& path) {
    return study_config_from_json(parse_json_text(read_text_file(path), path));
}

} // namespace io
} // namespace deconv
