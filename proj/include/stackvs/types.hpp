#pragma once

#include "stackvs/tape.hpp"
#include "stackvs/tensor.hpp"

namespace stackvs {

// The model runs in 64-bit throughout; gradient checks rely on it.
using Real = double;
using Tensord = Tensor<Real>;
using Vard = Var<Real>;
using Taped = Tape<Real>;
using Matrixd = MatrixX<Real>;
using Vectord = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

}  // namespace stackvs
