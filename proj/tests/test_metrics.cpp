#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fairpar/metrics.hpp"
#include "fairpar/rng.hpp"

using namespace fairpar;

namespace {

// Enumeration oracle: builds the full joint contingency table over
// (pred, label, sensitive) cells before deriving any rate, in contrast to the
// streaming counters inside the library.
struct Table {
  long cell[2][2][2] = {};  // [pred==1][label==1][s]

  static Table build(const std::vector<int>& preds, const std::vector<int>& labels,
                     const std::vector<int>& sens) {
    Table t;
    for (size_t i = 0; i < preds.size(); ++i)
      ++t.cell[preds[i] == 1][labels[i] == 1][sens[i]];
    return t;
  }

  long margin_pred1(int s) const {
    return cell[1][0][s] + cell[1][1][s];
  }
  long margin_total(int s) const {
    return cell[0][0][s] + cell[0][1][s] + cell[1][0][s] + cell[1][1][s];
  }
};

double oracle_dp(const std::vector<int>& preds, const std::vector<int>& sens) {
  std::vector<int> dummy(preds.size(), 0);
  Table t = Table::build(preds, dummy, sens);
  long pos0 = t.margin_pred1(0), n0 = t.margin_total(0);
  long pos1 = t.margin_pred1(1), n1 = t.margin_total(1);
  return std::abs(static_cast<double>(pos0) / static_cast<double>(n0) -
                  static_cast<double>(pos1) / static_cast<double>(n1));
}

double oracle_eo(const std::vector<int>& preds, const std::vector<int>& labels,
                 const std::vector<int>& sens) {
  Table t = Table::build(preds, labels, sens);
  long pos0 = t.cell[1][1][0], n0 = t.cell[0][1][0] + t.cell[1][1][0];
  long pos1 = t.cell[1][1][1], n1 = t.cell[0][1][1] + t.cell[1][1][1];
  return std::abs(static_cast<double>(pos0) / static_cast<double>(n0) -
                  static_cast<double>(pos1) / static_cast<double>(n1));
}

AccF1 oracle_acc_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                    int num_classes) {
  AccF1 out;
  long correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  out.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c && labels[i] == c) ++tp;
      if (preds[i] == c && labels[i] != c) ++fp;
      if (preds[i] != c && labels[i] == c) ++fn;
    }
    double denom = static_cast<double>(2 * tp + fp + fn);
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  out.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return out;
}

}  // namespace

TEST_CASE("demographic parity hand cases") {
  CHECK(metric_dp(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(metric_dp(std::vector<int>{1, 1, 1, 1}, std::vector<int>{1, 0, 1, 0}) == 0.0);
  CHECK(metric_dp(std::vector<int>{0, 0, 0, 0}, std::vector<int>{1, 0, 1, 0}) == 0.0);
  CHECK(metric_dp(std::vector<int>{1, 0, 1, 0}, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK_THROWS_AS(metric_dp(std::vector<int>{1, 0}, std::vector<int>{1, 1}),
                  std::runtime_error);
}

TEST_CASE("equal opportunity hand cases") {
  CHECK(metric_eo(std::vector<int>{0, 0, 0, 0}, std::vector<int>{1, 1, 1, 0},
                  std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK(metric_eo(std::vector<int>{1, 0, 1, 0}, std::vector<int>{1, 1, 1, 0},
                  std::vector<int>{1, 1, 0, 0}) == 0.5);
  std::vector<int> y = {1, 0, 1, 0};
  CHECK(metric_eo(y, y, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK_THROWS_AS(metric_eo(std::vector<int>{1, 1}, std::vector<int>{0, 1},
                            std::vector<int>{1, 1}),
                  std::runtime_error);
}

TEST_CASE("accuracy and macro F1 hand cases") {
  AccF1 perfect = metric_acc_f1(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 1, 0}, 2);
  CHECK(perfect.acc == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  AccF1 half = metric_acc_f1(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0}, 2);
  CHECK(half.acc == 0.5);
  CHECK(half.macro_f1 == 0.5);

  AccF1 all0 = metric_acc_f1(std::vector<int>{0, 0, 0, 0}, std::vector<int>{1, 1, 0, 0}, 2);
  CHECK(all0.acc == 0.5);
  CHECK(all0.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("metrics equal the enumeration oracle on random small datasets") {
  RngStream rng(99, stream_id(StreamKind::Test));
  int checked_dp = 0, checked_eo = 0;
  for (int rep = 0; rep < 3000; ++rep) {
    int n = 1 + static_cast<int>(rng.uniform_int(12));
    int c = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> preds(n), labels(n), sens(n);
    for (int i = 0; i < n; ++i) {
      preds[i] = static_cast<int>(rng.uniform_int(c));
      labels[i] = static_cast<int>(rng.uniform_int(c));
      sens[i] = static_cast<int>(rng.uniform_int(2));
    }

    AccF1 got = metric_acc_f1(preds, labels, c);
    AccF1 want = oracle_acc_f1(preds, labels, c);
    CHECK(got.acc == want.acc);
    CHECK(got.macro_f1 == want.macro_f1);

    bool has0 = false, has1 = false;
    for (int s : sens) (s ? has1 : has0) = true;
    if (has0 && has1) {
      CHECK(metric_dp(preds, sens) == oracle_dp(preds, sens));
      ++checked_dp;
    }
    bool pos0 = false, pos1 = false;
    for (int i = 0; i < n; ++i)
      if (labels[i] == 1) (sens[i] ? pos1 : pos0) = true;
    if (pos0 && pos1) {
      CHECK(metric_eo(preds, labels, sens) == oracle_eo(preds, labels, sens));
      ++checked_eo;
    }
  }
  CHECK(checked_dp > 1000);
  CHECK(checked_eo > 500);
}
