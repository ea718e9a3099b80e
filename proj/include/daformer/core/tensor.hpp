#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace daformer {

/// Dense matrix type used for every activation and parameter.
///
/// Spatial feature maps are stored as (H*W) x C matrices in row-major order,
/// so one row holds the channel vector of one pixel and rows follow raster
/// order. This matches the HWC layout of images.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

/// Label value excluded from every loss and metric.
inline constexpr std::uint8_t kIgnoreLabel = 255;

}  // namespace daformer
