#include "mrnn/ordinal.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

namespace mrnn {

OrdinalTarget ordinal_encode(int label, int n_classes) {
  if (n_classes < 2) {
    throw DomainError("ordinal_encode: need at least 2 classes, got " +
                      std::to_string(n_classes));
  }
  if (label < 0 || label >= n_classes) {
    throw DomainError("ordinal_encode: label " + std::to_string(label) +
                      " out of range [0, " + std::to_string(n_classes) + ")");
  }
  OrdinalTarget t;
  t.bits.resize(static_cast<std::size_t>(n_classes) - 1);
  for (int i = 0; i < n_classes - 1; ++i) t.bits[i] = i < label ? 1 : 0;
  return t;
}

int ordinal_decode(const Vector& raw) {
  int label = 0;
  for (std::size_t i = 0; i < raw.dim(); ++i) {
    if (raw[i] >= 0.5) {
      ++label;
    } else {
      break;  // everything past the first 0 is treated as 0
    }
  }
  return label;
}

double ranking_loss(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw DomainError("ranking_loss: need equal non-zero lengths, got " +
                      std::to_string(pred.size()) + " and " +
                      std::to_string(truth.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw DomainError("accuracy: need equal non-zero lengths, got " +
                      std::to_string(pred.size()) + " and " +
                      std::to_string(truth.size()));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace mrnn
