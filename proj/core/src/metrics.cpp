#include "pssl/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "pssl/errors.hpp"

namespace pssl {

Confusion confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size()) throw ShapeError("confusion: length mismatch");
  if (y_true.empty()) throw DataError("confusion: empty inputs");
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1))
      throw DataError("confusion: labels must be 0 or 1");
    if (t == 1 && p == 1) ++c.tp;
    else if (t == 0 && p == 1) ++c.fp;
    else if (t == 0 && p == 0) ++c.tn;
    else ++c.fn;
  }
  return c;
}

ClsMetrics classification_metrics(const Confusion& c) {
  if (c.total() == 0) throw DataError("classification_metrics: empty confusion");
  ClsMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.precision = c.tp + c.fp == 0 ? 0.0
                                 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0 ? 0.0
                              : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

ClsMetrics classification_metrics(const std::vector<int>& y_true,
                                  const std::vector<int>& y_pred) {
  return classification_metrics(confusion(y_true, y_pred));
}

double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double std_dev(const std::vector<double>& v) {
  if (v.empty()) throw DataError("std_dev: empty input");
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return std::sqrt(var);
}

}  // namespace pssl
