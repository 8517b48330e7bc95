#ifndef MCG_FLOW_DCT_HPP
#define MCG_FLOW_DCT_HPP

#include <Eigen/Dense>

#include "mcg/tensor.hpp"

namespace mcg::flow {

// Orthonormal DCT-II basis matrix of size n.
const Eigen::MatrixXd& dct_matrix(int n);

// Per-channel orthonormal 2-D DCT / inverse DCT, shape-preserving.
Tensor dct2(const Tensor& x);
Tensor idct2(const Tensor& coeffs);

// Transform and crop to the top-left (H/factor)x(W/factor) block.
Tensor dct_down(const Tensor& x, int factor);

// Zero-pad high frequencies to (target_h, target_w) and inverse-transform.
Tensor dct_up(const Tensor& coeffs, int target_h, int target_w);

// Low-pass projection: keep the keep_fraction lowest-frequency block,
// inverse-transform and clamp to [0,1]. Used by the JPEG-style defense.
Tensor dct_lowpass(const Tensor& x, double keep_fraction);

}  // namespace mcg::flow

#endif  // MCG_FLOW_DCT_HPP
