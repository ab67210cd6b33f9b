#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bmdal {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using MatF = Eigen::MatrixXf;
using VecF = Eigen::VectorXf;
using Indices = std::vector<int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::invalid_argument {
    ParseError(const std::string& msg, std::size_t pos)
        : std::invalid_argument(msg + " at position " + std::to_string(pos)), position(pos) {}
    std::size_t position;
};

struct TrainingError : std::runtime_error {
    TrainingError(const std::string& msg, int ep)
        : std::runtime_error(msg + " (epoch " + std::to_string(ep) + ")"), epoch(ep) {}
    int epoch;
};

// Seeds form a tree: a child seed is splitmix64 applied to the parent mixed
// with a hashed tag and an index, so sibling streams never collide in practice.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

// Lowest index wins on ties; entries with mask[i] == false are skipped.
// Returns -1 if no entry is eligible.
int argmax_masked(const Vec& score, const std::vector<bool>& mask);

Indices concat(const Indices& a, const Indices& b);
Indices iota_indices(int begin, int end);

}  // namespace bmdal
