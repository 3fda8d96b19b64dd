#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mcisac/array_model.hpp"
#include "mcisac/config.hpp"
#include "mcisac/rng.hpp"

namespace mcisac {

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

enum class Mode { Cbf, Comp };

inline std::string to_string(Mode m) { return m == Mode::Cbf ? "cbf" : "comp"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "cbf") return Mode::Cbf;
    if (s == "comp") return Mode::Comp;
    throw ConfigError("system.mode", "unknown mode '" + s + "' (expected cbf|comp)");
}

enum class ChannelModel { Rayleigh, Los, Explicit };

inline ChannelModel channel_model_from_string(const std::string& s) {
    if (s == "rayleigh") return ChannelModel::Rayleigh;
    if (s == "los") return ChannelModel::Los;
    if (s == "explicit") return ChannelModel::Explicit;
    throw ConfigError("channels.model", "unknown channel model '" + s + "'");
}

/// Map (n, m, k) -> channel from BS n to user k of cell m. Total by
/// construction: storage is a dense [J][J][K] table of length-n_tx vectors.
class ChannelMap {
public:
    ChannelMap() = default;
    ChannelMap(int j_cells, int k_users, int n_tx)
        : j_(j_cells), k_(k_users), data_(static_cast<size_t>(j_cells) * j_cells * k_users,
                                          VecC::Zero(n_tx)) {}

    VecC& at(int n, int m, int k) { return data_[index(n, m, k)]; }
    const VecC& at(int n, int m, int k) const { return data_[index(n, m, k)]; }

    bool operator==(const ChannelMap& o) const {
        if (j_ != o.j_ || k_ != o.k_ || data_.size() != o.data_.size()) return false;
        for (size_t i = 0; i < data_.size(); ++i)
            if (data_[i] != o.data_[i]) return false;
        return true;
    }

private:
    size_t index(int n, int m, int k) const {
        return (static_cast<size_t>(n) * j_ + m) * k_ + k;
    }
    int j_ = 0, k_ = 0;
    std::vector<VecC> data_;
};

struct ChannelGenParams {
    int j_cells = 0;
    int k_users = 0;
    ArrayGeometry geometry;
    MatR gain_db;                       // J x J, BS n -> users of cell m
    std::optional<MatR> user_angles;    // radians, J x K (row m, col k); required for LoS
};

/// Deterministic channel synthesis. Rayleigh entries are i.i.d. CN(0, g)
/// per antenna; LoS channels point along the user's steering vector. Draw
/// order is fixed (n, then m, then k) so a seed pins the whole map.
inline ChannelMap generate_channels(ChannelModel model, std::uint64_t seed,
                                    const ChannelGenParams& p) {
    const int J = p.j_cells, K = p.k_users, Nt = p.geometry.n_tx;
    ChannelMap map(J, K, Nt);
    Rng rng(seed);
    if (model == ChannelModel::Los && !p.user_angles)
        throw ConfigError("channels.user_angles_deg", "required for the los channel model");
    for (int n = 0; n < J; ++n)
        for (int m = 0; m < J; ++m)
            for (int k = 0; k < K; ++k) {
                double g = db_to_linear(p.gain_db(n, m));
                if (model == ChannelModel::Rayleigh) {
                    map.at(n, m, k) = std::sqrt(g) * rng.complex_normal_vector(Nt);
                } else if (model == ChannelModel::Los) {
                    map.at(n, m, k) =
                        std::sqrt(g) * steering_tx((*p.user_angles)(m, k), Nt);
                } else {
                    throw ConfigError("channels.model", "explicit model has no generator");
                }
            }
    return map;
}

/// Full problem instance. Immutable after from_config construction; all
/// angles in radians and powers in watts.
struct Scenario {
    int j_cells = 2;
    int k_users = 3;
    ArrayGeometry geometry{6, 4};
    int frame_len = 30;
    MatR target_angles;  // J x J; (n, m) = angle of BS m's target seen from BS n
    MatC path_gains;     // J x J; (n, m) = alpha_nm
    ChannelMap channels;
    double power_budget_w = 10.0;
    double noise_radar_w = 1e-3;
    double noise_comm_w = 1e-3;
    double weight_u = 0.5;
    Mode mode = Mode::Cbf;
    bool paper_literal_covariance = false;

    int n_comp() const { return j_cells * geometry.n_tx; }
    int total_users() const { return j_cells * k_users; }

    const VecC& channel(int n, int m, int k) const { return channels.at(n, m, k); }

    /// CoMP stacked channel from all BSs to user k of cell m (length J*n_tx).
    VecC stacked_channel(int m, int k) const {
        VecC h(n_comp());
        for (int n = 0; n < j_cells; ++n)
            h.segment(n * geometry.n_tx, geometry.n_tx) = channel(n, m, k);
        return h;
    }

    void validate() const {
        geometry.validate();
        if (j_cells < 1) throw ConfigError("system.cells", "must be >= 1");
        if (k_users < 1) throw ConfigError("system.users_per_cell", "must be >= 1");
        if (frame_len <= geometry.n_tx)
            throw ConfigError("system.frame_len",
                              "must exceed n_tx (got " + std::to_string(frame_len) + " with n_tx " +
                                  std::to_string(geometry.n_tx) + ")");
        if (!(power_budget_w > 0.0)) throw ConfigError("power.p_t_dbm", "power must be positive");
        if (!(noise_radar_w > 0.0)) throw ConfigError("power.noise_radar_dbm", "must be positive");
        if (!(noise_comm_w > 0.0)) throw ConfigError("power.noise_comm_dbm", "must be positive");
        if (!(weight_u >= 0.0 && weight_u <= 1.0))
            throw ConfigError("optimizer.weight_u", "must lie in [0, 1]");
        if (target_angles.rows() != j_cells || target_angles.cols() != j_cells)
            throw ConfigError("targets.theta_deg", "must be a JxJ matrix");
        if (path_gains.rows() != j_cells || path_gains.cols() != j_cells)
            throw ConfigError("gains.alpha", "must be a JxJ matrix");
        for (int n = 0; n < j_cells; ++n)
            for (int m = 0; m < j_cells; ++m)
                if (!(std::abs(target_angles(n, m)) < kPi / 2.0))
                    throw ConfigError("targets.theta_deg", "angles must lie in (-90, 90) degrees");
    }

    bool operator==(const Scenario& o) const {
        return j_cells == o.j_cells && k_users == o.k_users && geometry.n_tx == o.geometry.n_tx &&
               geometry.n_rx == o.geometry.n_rx && frame_len == o.frame_len &&
               target_angles == o.target_angles && path_gains == o.path_gains &&
               channels == o.channels && power_budget_w == o.power_budget_w &&
               noise_radar_w == o.noise_radar_w && noise_comm_w == o.noise_comm_w &&
               weight_u == o.weight_u && mode == o.mode &&
               paper_literal_covariance == o.paper_literal_covariance;
    }
};

namespace detail {

inline MatC default_path_gains(int j_cells) {
    MatC a = MatC::Constant(j_cells, j_cells, cxd(0.5, 0.0));
    a.diagonal().setConstant(cxd(1.0, 0.0));
    return a;
}

inline MatR read_gain_db(const ConfigDoc& doc, int j_cells) {
    if (!doc.has("channels", "gain_db")) return MatR::Zero(j_cells, j_cells);
    // scalar or J x J matrix
    std::string raw = doc.raw("channels", "gain_db");
    if (raw.find('[') == std::string::npos)
        return MatR::Constant(j_cells, j_cells, doc.get_double("channels", "gain_db"));
    MatR g = doc.get_matrix("channels", "gain_db");
    if (g.rows() != j_cells || g.cols() != j_cells)
        throw ConfigError("channels.gain_db", "must be scalar or JxJ");
    return g;
}

} // namespace detail

/// Builds a validated Scenario from a parsed document. dBm and degree
/// fields are converted at this boundary; snapshot keys (theta_rad, *_w,
/// explicit channels) take precedence so serialized scenarios reload
/// bit-for-bit.
inline Scenario from_config(const ConfigDoc& doc) {
    Scenario s;
    s.j_cells = static_cast<int>(doc.get_int("system", "cells"));
    s.k_users = static_cast<int>(doc.get_int("system", "users_per_cell"));
    s.geometry.n_tx = static_cast<int>(doc.get_int("system", "n_tx"));
    s.geometry.n_rx = static_cast<int>(doc.get_int("system", "n_rx"));
    s.frame_len = static_cast<int>(doc.get_int("system", "frame_len"));
    s.mode = doc.has("system", "mode") ? mode_from_string(doc.get_string("system", "mode"))
                                       : Mode::Cbf;
    s.paper_literal_covariance = doc.has("system", "paper_literal_covariance") &&
                                 doc.get_bool("system", "paper_literal_covariance");

    if (doc.has("targets", "theta_rad")) {
        s.target_angles = doc.get_matrix("targets", "theta_rad");
    } else {
        s.target_angles = doc.get_matrix("targets", "theta_deg");
        s.target_angles = s.target_angles.unaryExpr([](double d) { return deg2rad(d); });
    }

    s.path_gains = doc.has("gains", "alpha") ? doc.get_complex_matrix("gains", "alpha")
                                             : detail::default_path_gains(s.j_cells);

    auto power = [&](const char* w_key, const char* dbm_key) {
        if (doc.has("power", w_key)) return doc.get_double("power", w_key);
        return dbm_to_watts(doc.get_double("power", dbm_key));
    };
    s.power_budget_w = power("p_t_w", "p_t_dbm");
    s.noise_radar_w = power("noise_radar_w", "noise_radar_dbm");
    s.noise_comm_w = power("noise_comm_w", "noise_comm_dbm");

    if (doc.has("optimizer", "weight_u")) s.weight_u = doc.get_double("optimizer", "weight_u");

    ChannelModel model = channel_model_from_string(doc.get_string("channels", "model"));
    if (model == ChannelModel::Explicit) {
        s.channels = ChannelMap(s.j_cells, s.k_users, s.geometry.n_tx);
        for (int n = 0; n < s.j_cells; ++n)
            for (int m = 0; m < s.j_cells; ++m)
                for (int k = 0; k < s.k_users; ++k) {
                    std::string key = "h_" + std::to_string(n + 1) + "_" + std::to_string(m + 1) +
                                      "_" + std::to_string(k + 1);
                    auto vals = doc.get_list("channels", key);
                    if (vals.size() != static_cast<size_t>(2 * s.geometry.n_tx))
                        throw ConfigError("channels." + key,
                                          "expected " + std::to_string(2 * s.geometry.n_tx) +
                                              " interleaved re/im values");
                    VecC h(s.geometry.n_tx);
                    for (int i = 0; i < s.geometry.n_tx; ++i)
                        h(i) = cxd(vals[2 * i], vals[2 * i + 1]);
                    s.channels.at(n, m, k) = h;
                }
    } else {
        ChannelGenParams p;
        p.j_cells = s.j_cells;
        p.k_users = s.k_users;
        p.geometry = s.geometry;
        p.gain_db = detail::read_gain_db(doc, s.j_cells);
        if (doc.has("channels", "user_angles_deg")) {
            MatR ang = doc.get_matrix("channels", "user_angles_deg");
            if (ang.rows() != s.j_cells || ang.cols() != s.k_users)
                throw ConfigError("channels.user_angles_deg", "must be a JxK matrix");
            p.user_angles = ang.unaryExpr([](double d) { return deg2rad(d); });
        }
        auto seed = static_cast<std::uint64_t>(doc.get_int("channels", "seed"));
        s.channels = generate_channels(model, seed, p);
    }

    s.validate();
    return s;
}

inline Scenario scenario_from_file(const std::string& path) {
    return from_config(ConfigDoc::parse_file(path));
}

/// Snapshot serialization: exact radian/watt keys plus explicit channels,
/// so from_config(serialize(s)) == s including every channel bit.
inline ConfigDoc serialize(const Scenario& s) {
    ConfigDoc doc;
    doc.set("system", "cells", std::to_string(s.j_cells));
    doc.set("system", "users_per_cell", std::to_string(s.k_users));
    doc.set("system", "n_tx", std::to_string(s.geometry.n_tx));
    doc.set("system", "n_rx", std::to_string(s.geometry.n_rx));
    doc.set("system", "frame_len", std::to_string(s.frame_len));
    doc.set("system", "mode", to_string(s.mode));
    doc.set("system", "paper_literal_covariance", s.paper_literal_covariance ? "true" : "false");

    auto real_matrix = [](const MatR& m) {
        std::string out = "[";
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out += "[";
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                out += fmt_double(m(i, j)) + (j + 1 < m.cols() ? ", " : "");
            out += std::string("]") + (i + 1 < m.rows() ? ", " : "");
        }
        return out + "]";
    };
    auto complex_matrix = [](const MatC& m) {
        std::string out = "[";
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out += "[";
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                out += fmt_complex(m(i, j)) + (j + 1 < m.cols() ? ", " : "");
            out += std::string("]") + (i + 1 < m.rows() ? ", " : "");
        }
        return out + "]";
    };

    doc.set("targets", "theta_rad", real_matrix(s.target_angles));
    doc.set("gains", "alpha", complex_matrix(s.path_gains));

    doc.set("channels", "model", "explicit");
    for (int n = 0; n < s.j_cells; ++n)
        for (int m = 0; m < s.j_cells; ++m)
            for (int k = 0; k < s.k_users; ++k) {
                const VecC& h = s.channel(n, m, k);
                std::string v = "[";
                for (Eigen::Index i = 0; i < h.size(); ++i) {
                    v += fmt_double(h(i).real()) + ", " + fmt_double(h(i).imag());
                    if (i + 1 < h.size()) v += ", ";
                }
                v += "]";
                doc.set("channels",
                        "h_" + std::to_string(n + 1) + "_" + std::to_string(m + 1) + "_" +
                            std::to_string(k + 1),
                        v);
            }

    doc.set("power", "p_t_w", fmt_double(s.power_budget_w));
    doc.set("power", "noise_radar_w", fmt_double(s.noise_radar_w));
    doc.set("power", "noise_comm_w", fmt_double(s.noise_comm_w));
    doc.set("optimizer", "weight_u", fmt_double(s.weight_u));
    return doc;
}

} // namespace mcisac
