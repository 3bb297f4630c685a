// Command-line front end: run experiment batches, check small instances
// against the exhaustive reachability oracle, calibrate the phase clock
// constant, and fit scaling coefficients from result tables.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "popsim/calibration.hpp"
#include "popsim/experiment.hpp"
#include "popsim/oracle.hpp"
#include "popsim/scaling.hpp"

using namespace popsim;

namespace {

std::string default_output_path(const ExperimentSpec& spec, const std::string& format) {
    const char* dir = std::getenv("POPSIM_OUT_DIR");
    if (!dir) return {};
    std::ostringstream name;
    name << dir << "/" << spec.protocol << "-n" << spec.n << "-seed" << spec.seed << "."
         << (format == "json" ? "json" : "csv");
    return name.str();
}

int cmd_run(ExperimentSpec spec, const std::string& spec_file, std::string format, std::string out_path,
            const std::string& calibration_file, const std::string& probes_path) {
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) {
            std::cerr << "cannot read spec file: " << spec_file << "\n";
            return 2;
        }
        nlohmann::json j;
        in >> j;
        spec = spec_from_json(j);
    }
    if (spec.m == 0 && !calibration_file.empty()) {
        auto entries = load_calibration(calibration_file);
        if (!entries.empty()) spec.m = entries.back().m;
    }
    spec.keep_probes = !probes_path.empty();
    auto rows = run_experiment(spec);
    if (!probes_path.empty()) {
        std::ofstream pf(probes_path, std::ios::binary);
        if (!pf) {
            std::cerr << "cannot write: " << probes_path << "\n";
            return 2;
        }
        write_probes_csv(pf, rows);
    }

    if (out_path.empty()) out_path = default_output_path(spec, format);
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::binary);
        if (!file) {
            std::cerr << "cannot write: " << out_path << "\n";
            return 2;
        }
        os = &file;
    }
    if (format == "json") write_json(*os, rows);
    else write_csv(*os, rows);

    int failures = 0;
    for (const auto& r : rows)
        if (r.failed) {
            ++failures;
            std::cerr << "trial " << r.trial_id << " failed: " << r.failure << "\n";
        }
    return failures == 0 ? 0 : 1;
}

int cmd_oracle(const std::string& protocol, std::uint32_t n, std::uint32_t alpha, std::int32_t s,
               std::uint32_t m, std::uint32_t r, std::uint16_t counter_max, std::uint32_t level_cap,
               std::uint64_t max_configs) {
    OracleOptions opt;
    opt.max_configs = max_configs;
    OracleVerdict verdict;
    try {
        if (protocol == "backup4") {
            auto cfg = FourStateMajority::init(n, alpha);
            verdict = reachability_oracle(FourStateMajority{}, cfg.states, all_outputs(+1), opt);
        } else if (protocol == "backup2") {
            auto cfg = TwoStateLeader::init(n);
            verdict = reachability_oracle(TwoStateLeader{}, cfg.states, exactly_one_output(1, 0), opt);
        } else if (protocol == "stable-majority" || protocol == "convergent-majority") {
            MajorityParams p;
            p.s = s;
            p.clock = ClockParams{m ? m : 1, r ? r : (protocol == "convergent-majority"
                                                          ? 3
                                                          : StableMajority::rounds_for(n, s))};
            p.junta = JuntaParams{JuntaKind::Threshold, 1, static_cast<std::uint8_t>(level_cap ? level_cap : 2)};
            p.load_policy = LoadPolicy::ClampCap;
            p.counter_max = counter_max;
            if (protocol == "stable-majority") {
                auto cfg = StableMajority::init(n, alpha);
                verdict = reachability_oracle(StableMajority{p}, cfg.states, all_outputs(+1), opt);
            } else {
                auto cfg = ConvergentMajority::init(n, alpha);
                verdict = reachability_oracle(ConvergentMajority{p}, cfg.states, all_outputs(+1), opt);
            }
        } else {
            std::cerr << "oracle: unknown protocol " << protocol << "\n";
            return 2;
        }
    } catch (const OracleTooLarge& e) {
        std::cerr << "oracle-too-large: " << e.what() << "\n";
        return 3;
    }
    std::cout << "verdict: " << (verdict.exact_and_correct ? "exact-and-correct" : "NOT exact")
              << "\nconfigurations: " << verdict.configs << "\nedges: " << verdict.edges
              << "\nstable: " << verdict.stable_configs
              << "\nstable-correct: " << verdict.stable_correct_configs
              << "\nstable-incorrect-reachable: " << (verdict.stable_incorrect_reachable ? "yes" : "no")
              << "\n";
    return verdict.exact_and_correct ? 0 : 1;
}

int cmd_calibrate(std::uint32_t n, double d1, std::uint64_t seed, const std::string& out) {
    try {
        const std::uint32_t m = calibrate_m(n, d1, seed);
        std::cout << "m = " << m << "\n";
        if (!out.empty()) {
            auto entries = load_calibration(out);
            entries.push_back({d1, m, n, seed});
            save_calibration(out, entries);
        }
        return 0;
    } catch (const CalibrationFailure& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}

// Minimal CSV reader for our own schema.
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int cmd_fit(const std::string& input, const std::string& model_name, const std::string& column) {
    std::ifstream in(input);
    if (!in) {
        std::cerr << "cannot read: " << input << "\n";
        return 2;
    }
    std::string header;
    std::getline(in, header);
    auto cols = split_csv_line(header);
    auto col_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_n = col_of("n"), c_s = col_of("s"), c_alpha = col_of("alpha"), c_t = col_of(column);
    if (c_n < 0 || c_s < 0 || c_alpha < 0 || c_t < 0) {
        std::cerr << "fit: missing column (need n, s, alpha, " << column << ")\n";
        return 2;
    }
    std::vector<FitSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        FitSample sample;
        sample.n = static_cast<std::uint32_t>(std::stoul(f[c_n]));
        sample.s = std::stoi(f[c_s]);
        sample.alpha = static_cast<std::uint32_t>(std::stoul(f[c_alpha]));
        if (!f[c_t].empty()) sample.t = std::stoull(f[c_t]);
        samples.push_back(sample);
    }
    try {
        auto fit = scaling_fit(samples, fit_model_from_name(model_name));
        std::cout << "n,coefficient,samples\n";
        for (const auto& row : fit.rows)
            std::cout << row.n << "," << row.coefficient << "," << row.samples << "\n";
        std::cout << "flatness," << fit.flatness << ",\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fit: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"population protocol simulation bench"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run an experiment batch");
    ExperimentSpec spec;
    std::string spec_file, format = "csv", out_path, calibration_file;
    run->add_option("--protocol", spec.protocol, "protocol name");
    run->add_option("--n", spec.n, "population size");
    run->add_option("--s", spec.s, "trade-off parameter");
    run->add_option("--r", spec.r, "rounds per clock ring (0 = default)");
    run->add_option("--alpha", spec.alpha, "initial absolute bias");
    run->add_option("--m", spec.m, "phases per round (0 = from calibration file)");
    run->add_option("--trials", spec.trials, "trial count");
    run->add_option("--seed", spec.seed, "master seed");
    run->add_option("--budget", spec.budget, "interaction budget (0 = default)");
    run->add_option("--cadence", spec.cadence, "probe cadence (0 = n)");
    run->add_option("--delta", spec.delta, "initial discrepancy (load balancing)");
    run->add_option("--slow-m", spec.slow_m, "decelerated clock round length (leader)");
    run->add_option("--lstar", spec.junta_level, "junta threshold level override");
    run->add_option("--counter-max", spec.counter_max, "convergent counter limit");
    run->add_flag("--census", spec.census, "track distinct states per agent");
    run->add_flag("--clamp", spec.clamp, "clamp loads at the cap instead of asserting");
    run->add_option("--threads", spec.threads, "worker threads (0 = hardware)");
    run->add_option("--spec", spec_file, "read the experiment spec from a JSON file");
    run->add_option("--format", format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    run->add_option("--out", out_path, "output path (default: $POPSIM_OUT_DIR or stdout)");
    run->add_option("--calibration", calibration_file, "calibration JSON for m lookup");
    std::string probes_path;
    run->add_option("--probes", probes_path, "also write per-trial probe records (CSV)");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "exhaustive reachability check at small n");
    std::string o_protocol = "backup4";
    std::uint32_t o_n = 3, o_alpha = 1, o_m = 1, o_r = 0, o_levelcap = 2;
    std::int32_t o_s = 2;
    std::uint16_t o_cmax = 2;
    std::uint64_t o_maxcfg = 10'000'000;
    oracle->add_option("--protocol", o_protocol, "backup4 | backup2 | stable-majority | convergent-majority");
    oracle->add_option("--n", o_n, "population size");
    oracle->add_option("--alpha", o_alpha, "initial absolute bias");
    oracle->add_option("--s", o_s, "trade-off parameter");
    oracle->add_option("--m", o_m, "phases per round");
    oracle->add_option("--r", o_r, "rounds per ring (0 = default)");
    oracle->add_option("--counter-max", o_cmax, "reduced counter limit");
    oracle->add_option("--level-cap", o_levelcap, "junta level saturation");
    oracle->add_option("--max-configs", o_maxcfg, "configuration guard");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "search the phase clock constant m");
    std::uint32_t c_n = 8192;
    double c_d1 = 6.0;
    std::uint64_t c_seed = 1;
    std::string c_out;
    cal->add_option("--n", c_n, "population size");
    cal->add_option("--d1", c_d1, "round length coefficient target (x n ln n)");
    cal->add_option("--seed", c_seed, "master seed");
    cal->add_option("--out", c_out, "calibration JSON file to update");

    // fit
    auto* fit = app.add_subcommand("fit", "scaling coefficients from a CSV result table");
    std::string f_input, f_model = "nlnn", f_column = "t_stabilization";
    fit->add_option("--input", f_input, "CSV produced by run")->required();
    fit->add_option("--model", f_model, "nlnn | nlnn-log2-5n | nlnn-logs-na");
    fit->add_option("--column", f_column, "t_stabilization | t_convergence");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(spec, spec_file, format, out_path, calibration_file, probes_path);
        if (oracle->parsed())
            return cmd_oracle(o_protocol, o_n, o_alpha, o_s, o_m, o_r, o_cmax, o_levelcap, o_maxcfg);
        if (cal->parsed()) return cmd_calibrate(c_n, c_d1, c_seed, c_out);
        if (fit->parsed()) return cmd_fit(f_input, f_model, f_column);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
