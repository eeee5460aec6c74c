#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crgraph {

using Index = std::int64_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// 0/1 flags over the strict upper triangle, one per undirected node pair.
using EdgeMask = std::vector<std::uint8_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files; message carries "path:line:" context.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class CertificationError : public Error {
 public:
  CertificationError(const std::string& what, Index replicate)
      : Error(what), replicate_(replicate) {}
  Index replicate() const { return replicate_; }

 private:
  Index replicate_;
};

// Warnings go to stderr unless a handler is installed.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

/// Number of undirected node pairs, n(n-1)/2.
constexpr Index pair_count(Index n) { return n * (n - 1) / 2; }

/// Row-major index of pair (s, t), s < t, in the strict upper triangle.
constexpr Index pair_index(Index n, Index s, Index t) {
  if (s > t) std::swap(s, t);
  return s * n - s * (s + 1) / 2 + (t - s - 1);
}

std::pair<Index, Index> pair_from_index(Index n, Index k);

/// splitmix64 finalizer; combines seeds into independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Runs body(i) for i in [0, count) on up to `jobs` threads.
void parallel_for(Index count, int jobs, const std::function<void(Index)>& body);

}  // namespace crgraph
