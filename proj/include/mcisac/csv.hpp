#pragma once

#include <fstream>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "mcisac/errors.hpp"
#include "mcisac/linalg.hpp"

namespace mcisac {

/// Known CSV schemas, versioned; "..." marks a run of numbered columns
/// (fim_1..fim_J in the trace). Writers validate their header against
/// this registry so output files cannot silently drift.
inline const std::map<std::string, std::pair<int, std::vector<std::string>>>& csv_schemas() {
    static const std::map<std::string, std::pair<int, std::vector<std::string>>> reg = {
        {"sinr", {1, {"cell", "user", "sinr_linear", "sinr_db"}}},
        {"beampattern", {1, {"theta_deg", "power_db"}}},
        {"rcrb", {1, {"bs", "expected_deg", "actual_deg"}}},
        {"mc", {1, {"snr_db", "trials", "rmse_deg", "rcrb_deg", "outlier_rate"}}},
        {"rcrb_vs_sinr", {1, {"gamma_db", "mode", "n_tx", "bs", "rcrb_deg", "min_sinr_db"}}},
        {"baseline_gap", {1, {"gamma_db", "bs", "expected_deg", "actual_deg"}}},
        {"trace",
         {1,
          {"iter", "objective", "gamma", "...", "i_max", "i_prime_max", "solver_iters",
           "wall_ms"}}},
    };
    return reg;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& schema,
              const std::vector<std::string>& columns)
        : out_(path), columns_(columns.size()) {
        if (!out_) throw ConfigError("", "cannot write " + path);
        auto it = csv_schemas().find(schema);
        if (it == csv_schemas().end()) throw InvariantError("unknown csv schema " + schema);
        validate(columns, it->second.second, schema);
        out_ << "# schema: " << schema << " v" << it->second.first << "\n";
        for (size_t i = 0; i < columns.size(); ++i)
            out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw InvariantError("csv row width mismatch");
        for (size_t i = 0; i < cells.size(); ++i)
            out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
    }

    static std::string cell(double v) { return fmt_double(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }

private:
    static void validate(const std::vector<std::string>& cols,
                         const std::vector<std::string>& expect, const std::string& schema) {
        size_t ci = 0;
        for (size_t e = 0; e < expect.size(); ++e) {
            if (expect[e] == "...") {
                // any run of columns sharing a numbered prefix
                while (ci < cols.size() && cols[ci].find_last_of("0123456789") ==
                                               cols[ci].size() - 1)
                    ++ci;
                continue;
            }
            if (ci >= cols.size() || cols[ci] != expect[e])
                throw InvariantError("csv header mismatch for schema " + schema + " at column " +
                                     std::to_string(ci));
            ++ci;
        }
        if (ci != cols.size())
            throw InvariantError("csv header has extra columns for schema " + schema);
    }

    std::ofstream out_;
    size_t columns_;
};

} // namespace mcisac
