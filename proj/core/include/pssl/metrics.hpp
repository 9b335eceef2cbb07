#pragma once

#include <cstddef>
#include <vector>

namespace pssl {

// Binary confusion counts with artifact (label 1) as the positive class.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

Confusion confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

struct ClsMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when tp + fp == 0
  double recall = 0.0;     // 0 when tp + fn == 0
  double f1 = 0.0;         // 0 when precision + recall == 0
};

ClsMetrics classification_metrics(const Confusion& c);
ClsMetrics classification_metrics(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred);

// Median of a copy; even lengths average the two middle values.
double median(std::vector<double> v);

// Population standard deviation.
double std_dev(const std::vector<double>& v);

}  // namespace pssl
