#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace dusa {

using Index = Eigen::Index;

/// Dense row-by-column storage used for every activation, parameter and sample
/// batch. Batches are laid out one sample per row.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Mat = MatrixT<double>;
using Vec = VectorT<double>;
using RowVec = RowVectorT<double>;
using IndexMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Named parameters. std::map keeps iteration lexicographic, which fixes the
/// order of gradient accumulation and optimizer updates.
using ParamSet = std::map<std::string, Mat>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Merge two parameter sets whose names do not collide.
ParamSet merge(const ParamSet& a, const ParamSet& b);

/// Parameters of `all` whose name starts with `prefix`.
ParamSet subset(const ParamSet& all, const std::string& prefix);

/// Total number of scalar entries.
Index count(const ParamSet& params);

/// FNV-1a over raw bytes; used for checkpoint and config fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace dusa
