#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace specalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dataset-level node index. Stable across sampling, so a batch is just a
// list of these.
using NodeId = std::int64_t;
using IndexSet = std::vector<NodeId>;

using Seed = std::uint64_t;

// Derives an independent stream seed from a parent seed and a tag so that
// sub-steps of a seeded operation never share an RNG stream.
Seed derive_seed(Seed parent, std::uint64_t tag);

}  // namespace specalign
