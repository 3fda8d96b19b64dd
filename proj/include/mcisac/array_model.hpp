#pragma once

#include <cmath>

#include "mcisac/linalg.hpp"

namespace mcisac {

/// Uniform-linear-array geometry. Transmit elements sit at n*(lambda/2);
/// the receive array is sparse with elements at n*(n_tx*lambda/2), which
/// widens the effective aperture by a factor n_tx.
struct ArrayGeometry {
    int n_tx = 1;
    int n_rx = 1;

    void validate() const {
        if (n_tx < 1) throw ConfigError("system.n_tx", "must be >= 1");
        if (n_rx < 1) throw ConfigError("system.n_rx", "must be >= 1");
    }
};

enum class ArraySide { Tx, Rx };

namespace detail {

/// Steering phases without the angle-domain check; spacing_factor is the
/// element pitch in half-wavelength units (1 for tx, n_tx for rx).
inline VecC steering_unchecked(double theta, int n_elems, double spacing_factor) {
    VecC v(n_elems);
    const double step = kPi * spacing_factor * std::sin(theta);
    for (int n = 0; n < n_elems; ++n) v(n) = std::polar(1.0, step * n);
    return v;
}

inline void check_angle(double theta) {
    if (!(std::abs(theta) < kPi / 2.0))
        throw std::domain_error("steering angle must lie in (-pi/2, pi/2)");
}

} // namespace detail

/// Transmit steering vector, phase-referenced to element 0:
/// [exp(j*pi*n*sin(theta))]_{n=0..n_tx-1}.
inline VecC steering_tx(double theta, int n_tx) {
    detail::check_angle(theta);
    return detail::steering_unchecked(theta, n_tx, 1.0);
}

/// Receive steering vector over the sparse array:
/// [exp(j*pi*n_tx*n*sin(theta))]_{n=0..n_rx-1}.
inline VecC steering_rx(double theta, int n_tx, int n_rx) {
    detail::check_angle(theta);
    return detail::steering_unchecked(theta, n_rx, static_cast<double>(n_tx));
}

inline VecC steering_rx(double theta, const ArrayGeometry& geom) {
    return steering_rx(theta, geom.n_tx, geom.n_rx);
}

/// Element-wise d/dtheta of the chosen steering vector:
/// entry n is j*pi*s*n*cos(theta)*exp(j*pi*s*n*sin(theta)),
/// with s = 1 (tx) or s = n_tx (rx).
inline VecC steering_derivative(double theta, ArraySide side, const ArrayGeometry& geom) {
    detail::check_angle(theta);
    const double s = (side == ArraySide::Tx) ? 1.0 : static_cast<double>(geom.n_tx);
    const int n_elems = (side == ArraySide::Tx) ? geom.n_tx : geom.n_rx;
    const double c = kPi * s * std::cos(theta);
    VecC v = detail::steering_unchecked(theta, n_elems, s);
    for (int n = 0; n < n_elems; ++n) v(n) *= cxd(0.0, c * n);
    return v;
}

/// Rank-one response G = alpha * a(theta_rx) * v(theta_tx)^T of a target
/// illuminated from theta_tx and observed from theta_rx.
struct TargetResponse {
    cxd alpha{};
    double theta_rx = 0.0;
    double theta_tx = 0.0;
    MatC matrix; // n_rx x n_tx
};

inline TargetResponse target_response(cxd alpha, double theta_rx, double theta_tx,
                                      const ArrayGeometry& geom) {
    TargetResponse r;
    r.alpha = alpha;
    r.theta_rx = theta_rx;
    r.theta_tx = theta_tx;
    r.matrix = alpha * (steering_rx(theta_rx, geom) *
                        steering_tx(theta_tx, geom.n_tx).transpose());
    return r;
}

} // namespace mcisac
