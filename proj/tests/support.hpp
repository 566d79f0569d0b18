#pragma once

// Reference implementations used as test oracles. They share no code with
// the library beyond the data containers.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

/// O(N^2) forward DFT.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t j = 0; j < n; ++j)
            acc += x[j] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * j % n) / static_cast<double>(n));
        out[k] = acc;
    }
    return out;
}

/// Raised cosine samples n0 * (1 + v cos(2 pi periods k / m + phi)).
inline std::vector<double> fringe(std::size_t m, double periods, double n0, double v, double phi) {
    std::vector<double> s(m);
    for (std::size_t k = 0; k < m; ++k)
        s[k] = n0 * (1 + v * std::cos(2 * std::numbers::pi * periods * static_cast<double>(k) / static_cast<double>(m) + phi));
    return s;
}

inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0;
    double den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

}  // namespace oracle
