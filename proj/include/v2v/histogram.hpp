#pragma once

#include <vector>

#include "v2v/tensor.hpp"

namespace v2v {

/// Per-channel histogram specification by rank: each value of source is
/// replaced by the reference value at the same rank. Ties in source share
/// the reference value at the middle rank of the tie group, so a constant
/// channel maps to the reference median and source == reference is the
/// identity. Both tensors must have the same shape.
Tensor match_histogram(const Tensor& source, const Tensor& reference);

/// Counts of channel c over `bins` equal bins spanning [0, 1]; values
/// outside are clamped into the end bins.
std::vector<int> channel_histogram(const Tensor& image, int c, int bins = 256);

}  // namespace v2v
