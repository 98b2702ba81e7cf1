#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ttmg {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when an input violates a documented precondition.
class Error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would materialize more dense entries than allowed.
class SizeLimitError : public std::length_error {
public:
    using std::length_error::length_error;
};

inline constexpr double kDefaultFullLimit = 1e7;   // entries, dense tensors
inline constexpr double kDefaultDenseLimit = 4e6;  // entries, dense matrices

inline void require(bool condition, const std::string& message) {
    if (!condition) throw Error(message);
}

/// Product of mode sizes as a double (global sizes overflow 32-bit quickly).
inline double product(const std::vector<Index>& dims) {
    double p = 1.0;
    for (auto d : dims) p *= static_cast<double>(d);
    return p;
}

inline Index product_exact(const std::vector<Index>& dims) {
    Index p = 1;
    for (auto d : dims) p *= d;
    return p;
}

/// Multi-index → Kronecker-order linear index (mode 0 slowest).
inline Index linear_index(const std::vector<Index>& idx, const std::vector<Index>& dims) {
    Index lin = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) lin = lin * dims[k] + idx[k];
    return lin;
}

inline std::vector<Index> multi_index(Index lin, const std::vector<Index>& dims) {
    std::vector<Index> idx(dims.size());
    for (std::size_t k = dims.size(); k-- > 0;) {
        idx[k] = lin % dims[k];
        lin /= dims[k];
    }
    return idx;
}

}  // namespace ttmg
