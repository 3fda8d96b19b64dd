#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mcisac/csv.hpp"
#include "mcisac/eval.hpp"

namespace mcisac {

struct ExperimentSpec {
    std::string command;  // design | sweep | beampattern | validate-crb | baseline-gap
    std::string config_path;
    std::string output_dir = ".";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int parallel = 4;
    std::optional<std::string> mode;            // cbf | comp | baseline
    std::optional<std::string> sweep_gamma_db;  // "START:STOP:STEP"
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline DesignMode design_mode_from_string(const std::string& s) {
    if (s == "cbf") return DesignMode::Cbf;
    if (s == "comp") return DesignMode::Comp;
    if (s == "baseline") return DesignMode::BaselineNoIc;
    throw ConfigError("mode", "unknown design mode '" + s + "' (cbf|comp|baseline)");
}

struct GammaGrid {
    std::vector<double> values_db;
};

inline GammaGrid parse_gamma_grid(const std::string& spec) {
    GammaGrid g;
    double start, stop, step;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0.0)
        throw ConfigError("sweep_gamma_db", "expected START:STOP:STEP with positive STEP");
    for (double v = start; v <= stop + 1e-9; v += step) g.values_db.push_back(v);
    return g;
}

inline AlternateOptions options_from_config(const ConfigDoc& doc) {
    AlternateOptions opt;
    auto get = [&](const char* key, double dflt) {
        return doc.has("optimizer", key) ? doc.get_double("optimizer", key) : dflt;
    };
    opt.max_outer_iters = static_cast<int>(get("max_outer_iters", 50));
    opt.rel_tol = get("rel_tol", 1e-4);
    opt.sdp.eps_primal = get("sdp_tol", 1e-8);
    opt.sdp.eps_dual = opt.sdp.eps_primal;
    opt.sdp.eps_gap = get("sdp_gap_tol", 1e-8);
    opt.sdp.max_iterations = static_cast<int>(get("sdp_max_iters", 500));
    if (doc.has("optimizer", "gamma_floor_db"))
        opt.gamma_floor = db_to_linear(doc.get_double("optimizer", "gamma_floor_db"));
    return opt;
}

inline McConfig mc_from_config(const ConfigDoc& doc, int parallelism, std::uint64_t seed) {
    McConfig mc;
    if (doc.has("mc", "trials")) mc.trials = static_cast<int>(doc.get_int("mc", "trials"));
    if (doc.has("mc", "noise_radar_dbm_sweep"))
        mc.noise_radar_dbm = doc.get_list("mc", "noise_radar_dbm_sweep");
    if (doc.has("mc", "coarse_grid_deg")) mc.grid_res_deg = doc.get_double("mc", "coarse_grid_deg");
    mc.parallelism = parallelism;
    mc.seed = seed;
    return mc;
}

inline ConfigDoc design_result_to_doc(const Scenario& s, const DesignResult& r) {
    ConfigDoc doc;
    doc.set("result", "mode", to_string(r.mode));
    doc.set("result", "converged", r.converged ? "true" : "false");
    doc.set("result", "gamma_linear", fmt_double(r.gamma));
    doc.set("result", "gamma_db", fmt_double(linear_to_db(r.gamma)));
    doc.set("result", "i_max", fmt_double(r.i_max));
    doc.set("result", "i_prime_max", fmt_double(r.i_prime_max));
    doc.set("result", "rank1_gap_max", fmt_double(r.rank1_gap_max));
    doc.set("result", "used_randomization", r.used_randomization ? "true" : "false");
    doc.set("result", "sinr_extraction_ratio", fmt_double(r.sinr_extraction_ratio));
    doc.set("result", "iterations", std::to_string(r.trace.size()));
    if (!r.diagnostic.empty()) doc.set("result", "diagnostic", r.diagnostic);
    for (int m = 0; m < r.fim_per_bs.size(); ++m) {
        doc.set("fim", "fim_" + std::to_string(m + 1), fmt_double(r.fim_per_bs(m)));
        double rcrb = r.fim_per_bs(m) > 0 ? 1.0 / std::sqrt(r.fim_per_bs(m))
                                          : std::numeric_limits<double>::infinity();
        doc.set("fim", "rcrb_deg_" + std::to_string(m + 1), fmt_double(rad2deg(rcrb)));
    }
    auto vec_to_string = [](const VecC& v) {
        std::string out = "[";
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            out += fmt_double(v(i).real()) + ", " + fmt_double(v(i).imag());
            if (i + 1 < v.size()) out += ", ";
        }
        return out + "]";
    };
    for (size_t i = 0; i < r.beamformers.size(); ++i)
        doc.set("beamformers", "w_" + std::to_string(i + 1), vec_to_string(r.beamformers[i]));
    for (size_t i = 0; i < r.precoder_covariances.w.size(); ++i) {
        const MatC& w = r.precoder_covariances.w[i];
        std::string out = "[";
        for (Eigen::Index a = 0; a < w.rows(); ++a)
            for (Eigen::Index b = 0; b < w.cols(); ++b) {
                out += fmt_double(w(a, b).real()) + ", " + fmt_double(w(a, b).imag());
                if (a + 1 < w.rows() || b + 1 < w.cols()) out += ", ";
            }
        doc.set("covariances", "cov_" + std::to_string(i + 1), out + "]");
    }
    (void)s;
    return doc;
}

inline void write_trace_csv(const std::string& path, const DesignResult& r, int j_cells) {
    std::vector<std::string> cols = {"iter", "objective", "gamma"};
    for (int m = 0; m < j_cells; ++m) cols.push_back("fim_" + std::to_string(m + 1));
    for (const char* c : {"i_max", "i_prime_max", "solver_iters", "wall_ms"}) cols.push_back(c);
    CsvWriter csv(path, "trace", cols);
    for (const auto& rec : r.trace) {
        std::vector<std::string> cells = {CsvWriter::cell(rec.iter),
                                          CsvWriter::cell(rec.objective),
                                          CsvWriter::cell(rec.gamma)};
        for (int m = 0; m < j_cells; ++m)
            cells.push_back(CsvWriter::cell(m < rec.fim.size() ? rec.fim(m) : 0.0));
        cells.push_back(CsvWriter::cell(rec.i_max));
        cells.push_back(CsvWriter::cell(rec.i_prime_max));
        cells.push_back(CsvWriter::cell(rec.solver_iters));
        cells.push_back(CsvWriter::cell(rec.wall_ms));
        csv.row(cells);
    }
}

inline void write_eval_csvs(const std::filesystem::path& dir, const Scenario& s,
                            const EvalReport& rep, const std::string& suffix = "") {
    {
        CsvWriter csv((dir / ("sinr" + suffix + ".csv")).string(), "sinr",
                      {"cell", "user", "sinr_linear", "sinr_db"});
        for (const auto& u : rep.sinrs)
            csv.row({CsvWriter::cell(u.cell + 1), CsvWriter::cell(u.user + 1),
                     CsvWriter::cell(u.linear), CsvWriter::cell(u.db)});
    }
    {
        CsvWriter csv((dir / ("rcrb" + suffix + ".csv")).string(), "rcrb",
                      {"bs", "expected_deg", "actual_deg"});
        for (size_t m = 0; m < rep.rcrb.size(); ++m)
            csv.row({CsvWriter::cell(static_cast<int>(m + 1)),
                     CsvWriter::cell(rad2deg(rep.rcrb[m].expected)),
                     CsvWriter::cell(rad2deg(rep.rcrb[m].actual))});
    }
    for (int m = 0; m < s.j_cells; ++m) {
        CsvWriter csv(
            (dir / ("beampattern" + suffix + "_bs" + std::to_string(m + 1) + ".csv")).string(),
            "beampattern", {"theta_deg", "power_db"});
        for (const auto& pt : rep.patterns[m])
            csv.row({CsvWriter::cell(pt.theta_deg),
                     CsvWriter::cell(linear_to_db(std::max(pt.power, 1e-12)))});
    }
}

class Manifest {
public:
    Manifest(const ExperimentSpec& spec, const Scenario& s) {
        j_["command"] = spec.command;
        j_["config_path"] = spec.config_path;
        j_["overrides"] = spec.overrides;
        j_["seed"] = spec.seed ? nlohmann::json(*spec.seed) : nlohmann::json();
        j_["mode"] = spec.mode ? nlohmann::json(*spec.mode) : nlohmann::json();
        j_["parallel"] = spec.parallel;
        j_["version"] = "0.1.0";
        std::string resolved = serialize(s).serialize();
        j_["resolved_config"] = resolved;
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(resolved)));
        j_["config_hash"] = std::string(hex);
        t0_ = std::chrono::steady_clock::now();
    }

    void add_output(const std::string& name) { j_["outputs"].push_back(name); }
    void note(const std::string& text) { j_["notes"].push_back(text); }
    void set(const std::string& key, const nlohmann::json& v) { j_[key] = v; }

    void write(const std::filesystem::path& dir) {
        j_["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        std::ofstream f(dir / "manifest.json");
        f << j_.dump(2) << "\n";
    }

private:
    nlohmann::json j_;
    std::chrono::steady_clock::time_point t0_;
};

struct RunContext {
    Scenario scenario;
    ConfigDoc doc;
    AlternateOptions options;
    std::filesystem::path outdir;
};

inline RunContext prepare(const ExperimentSpec& spec) {
    RunContext ctx;
    ctx.doc = ConfigDoc::parse_file(spec.config_path);
    for (const auto& ov : spec.overrides) ctx.doc.apply_override(ov);
    if (spec.seed) ctx.doc.set("channels", "seed", std::to_string(*spec.seed));
    ctx.scenario = from_config(ctx.doc);
    ctx.options = options_from_config(ctx.doc);
    if (spec.seed) ctx.options.extraction_seed = *spec.seed;
    ctx.outdir = spec.output_dir;
    std::filesystem::create_directories(ctx.outdir);
    return ctx;
}

inline int run_design(const ExperimentSpec& spec, RunContext& ctx, Manifest& man) {
    DesignMode dm = spec.mode ? design_mode_from_string(*spec.mode)
                              : (ctx.scenario.mode == Mode::Cbf ? DesignMode::Cbf
                                                                : DesignMode::Comp);
    DesignResult res = alternate(ctx.scenario, dm, ctx.options);
    EvalReport rep = evaluate(ctx.scenario, res);
    design_result_to_doc(ctx.scenario, res).write_file((ctx.outdir / "result.ini").string());
    write_trace_csv((ctx.outdir / "trace.csv").string(), res, ctx.scenario.j_cells);
    write_eval_csvs(ctx.outdir, ctx.scenario, rep);
    for (const char* f : {"result.ini", "trace.csv", "sinr.csv", "rcrb.csv"}) man.add_output(f);
    for (int m = 0; m < ctx.scenario.j_cells; ++m)
        man.add_output("beampattern_bs" + std::to_string(m + 1) + ".csv");
    man.set("converged", res.converged);
    if (!res.converged) {
        man.note("design did not converge: " + res.diagnostic);
        return 3;
    }
    return 0;
}

inline int run_sweep(const ExperimentSpec& spec, RunContext& ctx, Manifest& man) {
    GammaGrid grid = parse_gamma_grid(spec.sweep_gamma_db.value_or("4:20:4"));
    std::vector<DesignMode> modes;
    if (spec.mode) modes = {design_mode_from_string(*spec.mode)};
    else modes = {DesignMode::Cbf, DesignMode::Comp};

    struct Row {
        double gamma_db;
        std::string mode;
        int bs;
        double rcrb_deg;
        double min_sinr_db;
        bool ok;
        std::string note;
    };
    std::vector<std::vector<Row>> results(modes.size() * grid.values_db.size());
    std::counting_semaphore<64> slots(std::max(1, spec.parallel));
    std::vector<std::future<void>> futs;
    for (size_t mi = 0; mi < modes.size(); ++mi)
        for (size_t gi = 0; gi < grid.values_db.size(); ++gi) {
            size_t idx = mi * grid.values_db.size() + gi;
            futs.push_back(std::async(std::launch::async, [&, mi, gi, idx] {
                slots.acquire();
                Scenario s = ctx.scenario;
                s.weight_u = 1.0;
                AlternateOptions opt = ctx.options;
                opt.gamma_floor = db_to_linear(grid.values_db[gi]);
                std::vector<Row> rows;
                try {
                    DesignResult res = alternate(s, modes[mi], opt);
                    double min_sinr = res.gamma;
                    for (int m = 0; m < s.j_cells; ++m) {
                        double rcrb = res.fim_per_bs(m) > 0
                                          ? rad2deg(1.0 / std::sqrt(res.fim_per_bs(m)))
                                          : std::numeric_limits<double>::infinity();
                        rows.push_back({grid.values_db[gi], to_string(modes[mi]), m + 1, rcrb,
                                        linear_to_db(min_sinr), res.converged, res.diagnostic});
                    }
                } catch (const std::exception& e) {
                    rows.push_back({grid.values_db[gi], to_string(modes[mi]), 0, 0.0, 0.0, false,
                                    e.what()});
                }
                results[idx] = std::move(rows);
                slots.release();
            }));
        }
    for (auto& f : futs) f.get();

    CsvWriter csv((ctx.outdir / "rcrb_vs_sinr.csv").string(), "rcrb_vs_sinr",
                  {"gamma_db", "mode", "n_tx", "bs", "rcrb_deg", "min_sinr_db"});
    bool any_fail = false;
    for (const auto& rows : results)
        for (const auto& r : rows) {
            if (!r.ok || r.bs == 0) {
                any_fail = any_fail || r.bs == 0;
                if (r.bs == 0) {
                    man.note("sweep point failed: mode " + r.mode + " gamma " +
                             fmt_double(r.gamma_db) + " dB: " + r.note);
                    continue;
                }
                man.note("sweep point not fully converged: mode " + r.mode + " gamma " +
                         fmt_double(r.gamma_db) + " dB: " + r.note);
            }
            csv.row({CsvWriter::cell(r.gamma_db), r.mode,
                     CsvWriter::cell(ctx.scenario.geometry.n_tx), CsvWriter::cell(r.bs),
                     CsvWriter::cell(r.rcrb_deg), CsvWriter::cell(r.min_sinr_db)});
        }
    man.add_output("rcrb_vs_sinr.csv");
    man.set("partial", any_fail);
    return any_fail ? 3 : 0;
}

inline int run_beampattern(const ExperimentSpec& spec, RunContext& ctx, Manifest& man) {
    double gamma_db = ctx.doc.has("optimizer", "gamma_floor_db")
                          ? ctx.doc.get_double("optimizer", "gamma_floor_db")
                          : 30.0;
    std::vector<DesignMode> modes;
    if (spec.mode) modes = {design_mode_from_string(*spec.mode)};
    else modes = {DesignMode::Cbf, DesignMode::Comp};
    for (DesignMode dm : modes) {
        Scenario s = ctx.scenario;
        s.weight_u = 1.0;
        AlternateOptions opt = ctx.options;
        opt.gamma_floor = db_to_linear(gamma_db);
        DesignResult res = alternate(s, dm, opt);
        EvalReport rep = evaluate(s, res);
        write_eval_csvs(ctx.outdir, s, rep, "_" + to_string(dm));
        for (int m = 0; m < s.j_cells; ++m)
            man.add_output("beampattern_" + to_string(dm) + "_bs" + std::to_string(m + 1) +
                           ".csv");
        if (!res.converged) man.note(to_string(dm) + " design not converged: " + res.diagnostic);
    }
    man.set("gamma_target_db", gamma_db);
    return 0;
}

inline int run_baseline_gap(const ExperimentSpec& spec, RunContext& ctx, Manifest& man) {
    GammaGrid grid = parse_gamma_grid(spec.sweep_gamma_db.value_or("4:20:4"));
    CsvWriter csv((ctx.outdir / "baseline_gap.csv").string(), "baseline_gap",
                  {"gamma_db", "bs", "expected_deg", "actual_deg"});
    bool any_fail = false;
    for (double gdb : grid.values_db) {
        Scenario s = ctx.scenario;
        s.weight_u = 1.0;
        AlternateOptions opt = ctx.options;
        opt.gamma_floor = db_to_linear(gdb);
        try {
            DesignResult res = baseline_no_ic(s, opt);
            auto pairs = rcrb_pair(s, res);
            for (int m = 0; m < s.j_cells; ++m)
                csv.row({CsvWriter::cell(gdb), CsvWriter::cell(m + 1),
                         CsvWriter::cell(rad2deg(pairs[m].expected)),
                         CsvWriter::cell(rad2deg(pairs[m].actual))});
        } catch (const std::exception& e) {
            man.note("baseline point failed at gamma " + fmt_double(gdb) + " dB: " + e.what());
            any_fail = true;
        }
    }
    man.add_output("baseline_gap.csv");
    man.set("partial", any_fail);
    return any_fail ? 3 : 0;
}

inline int run_validate_crb(const ExperimentSpec& spec, RunContext& ctx, Manifest& man) {
    Scenario s = ctx.scenario;
    DesignMode dm = spec.mode ? design_mode_from_string(*spec.mode) : DesignMode::Comp;
    DesignResult res = alternate(s, dm, ctx.options);
    McConfig mc = mc_from_config(ctx.doc, spec.parallel, spec.seed.value_or(1));
    for (int m = 0; m < s.j_cells; ++m) {
        auto points = monte_carlo_rmse(s, res, m, mc);
        std::string name = m == 0 ? "mc.csv" : "mc_bs" + std::to_string(m + 1) + ".csv";
        CsvWriter csv((ctx.outdir / name).string(), "mc",
                      {"snr_db", "trials", "rmse_deg", "rcrb_deg", "outlier_rate"});
        for (const auto& pt : points)
            csv.row({CsvWriter::cell(pt.snr_db), CsvWriter::cell(pt.trials),
                     CsvWriter::cell(rad2deg(pt.rmse_rad)), CsvWriter::cell(rad2deg(pt.rcrb_rad)),
                     CsvWriter::cell(pt.outlier_rate)});
        man.add_output(name);
    }
    return 0;
}

} // namespace detail

/// Experiment dispatch: exit code 0 on success, 2 on configuration
/// errors, 3 on solver failure, 4 on internal invariant violations.
inline int run(const ExperimentSpec& spec) {
    try {
        detail::RunContext ctx = detail::prepare(spec);
        detail::Manifest man(spec, ctx.scenario);
        int rc = 0;
        if (spec.command == "design") rc = detail::run_design(spec, ctx, man);
        else if (spec.command == "sweep") rc = detail::run_sweep(spec, ctx, man);
        else if (spec.command == "beampattern") rc = detail::run_beampattern(spec, ctx, man);
        else if (spec.command == "baseline-gap") rc = detail::run_baseline_gap(spec, ctx, man);
        else if (spec.command == "validate-crb") rc = detail::run_validate_crb(spec, ctx, man);
        else throw ConfigError("command", "unknown command '" + spec.command + "'");
        man.write(ctx.outdir);
        return rc;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const SolverError& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 3;
    } catch (const InvariantError& e) {
        std::fprintf(stderr, "internal invariant violation: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}

} // namespace mcisac
