#pragma once

#include "lsm/tensor.hpp"

namespace lsm {

// Function values on a regular coordinate grid of spatial rank 1 or 2 with a
// channel dimension (channel-last layout). Node (i, j) of a non-periodic
// field sits at (i*h, j*h), h = 1/(extent-1), on the unit box.
struct GridField {
  std::vector<long> extents;
  long channels = 0;
  Tensor values;  // shape = extents..., channels

  static GridField zeros(std::vector<long> extents, long channels);
  // Validates that values.shape == extents + [channels].
  static GridField wrap(std::vector<long> extents, long channels, Tensor values);

  long rank() const { return static_cast<long>(extents.size()); }
  long coord_count() const;
};

// Cross-correlation with zero padding. Kernel shape: [k, k, ci, co] for rank
// 2, [k, ci, co] for rank 1; output extent = floor((in + 2*pad - k)/stride)+1.
GridField conv(const GridField& a, const Tensor& kernel, long stride, long zero_pad);

// Per-window maxima; each spatial extent must divide by window. Gradient
// flows to the first (row-major) argmax of each window.
GridField pool_max(const GridField& a, long window);

// Align-corners linear (rank 1) / bilinear (rank 2) resampling; exact on
// fields affine in the coordinates.
GridField interpolate_linear(const GridField& a, const std::vector<long>& target_extents);

}  // namespace lsm
