#pragma once

#include <span>

namespace fairpar {

// |P(yhat=1 | s=0) - P(yhat=1 | s=1)|, positive class = 1.
// Throws when a sensitive group is empty.
double metric_dp(std::span<const int> preds, std::span<const int> sensitive);

// |P(yhat=1 | y=1, s=0) - P(yhat=1 | y=1, s=1)|.
// Throws when a conditioned group is empty.
double metric_eo(std::span<const int> preds, std::span<const int> labels,
                 std::span<const int> sensitive);

// Non-throwing variants for per-epoch logging: NaN when undefined.
double metric_dp_or_nan(std::span<const int> preds, std::span<const int> sensitive);
double metric_eo_or_nan(std::span<const int> preds, std::span<const int> labels,
                        std::span<const int> sensitive);

struct AccF1 {
  double acc = 0.0;
  double macro_f1 = 0.0;
};

// Accuracy and unweighted mean of per-class F1 (class F1 = 0 when
// precision + recall = 0).
AccF1 metric_acc_f1(std::span<const int> preds, std::span<const int> labels,
                    int num_classes);

}  // namespace fairpar
