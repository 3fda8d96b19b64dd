#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <complex>
#include <string>

#include "mcisac/errors.hpp"

namespace mcisac {

using cxd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

inline double hermitian_asymmetry(const MatC& a) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const MatC& a, double tol = 1e-12) {
    if (a.rows() != a.cols()) return false;
    double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return hermitian_asymmetry(a) <= tol * scale;
}

inline MatC hermitize(const MatC& a) { return 0.5 * (a + a.adjoint()); }

inline double min_eigenvalue(const MatC& a) {
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// PSD within the PrecoderSet tolerance: lambda_min >= -tol * trace.
inline bool is_psd(const MatC& a, double tol = 1e-8) {
    double tr = std::abs(a.trace().real());
    return min_eigenvalue(a) >= -tol * std::max(1.0, tr);
}

/// Shortest decimal string that parses back to exactly the same double.
inline std::string fmt_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline std::string fmt_complex(cxd z) {
    std::string s = fmt_double(z.real());
    if (z.imag() >= 0.0 || std::isnan(z.imag())) s += "+";
    s += fmt_double(z.imag()) + "i";
    return s;
}

} // namespace mcisac
