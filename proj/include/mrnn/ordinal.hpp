#pragma once

#include <vector>

#include "mrnn/numerics.hpp"

namespace mrnn {

// Cumulative 0/1 threshold target of length K-1 for an ordinal class:
// bits_i = 1 iff i < k, so all ones precede all zeros.
struct OrdinalTarget {
  std::vector<int> bits;
};

OrdinalTarget ordinal_encode(int label, int n_classes);

// Binarize sigmoid outputs at 0.5 (>= 0.5 reads as 1), truncate at the first
// zero, and return the count of leading ones.
int ordinal_decode(const Vector& raw);

// Mean absolute difference between predicted and true integer labels.
double ranking_loss(const std::vector<int>& pred, const std::vector<int>& truth);

// Fraction of exact matches.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace mrnn
