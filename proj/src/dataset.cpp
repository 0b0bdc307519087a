#include "fairpar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fairpar/rng.hpp"

namespace fairpar {

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::runtime_error("unknown split tag '" + name + "'");
}

std::vector<int> EmbeddingDataset::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

void EmbeddingDataset::validate() const {
  if (n < 1) throw std::runtime_error("dataset invalid: n must be >= 1");
  if (p < 1) throw std::runtime_error("dataset invalid: p must be >= 1");
  if (num_classes < 2) throw std::runtime_error("dataset invalid: num_classes must be >= 2");
  if (embeddings.size() != static_cast<size_t>(n) * p)
    throw std::runtime_error("dataset invalid: embedding buffer size mismatch");
  if (sensitive.size() != static_cast<size_t>(n) || labels.size() != static_cast<size_t>(n) ||
      split.size() != static_cast<size_t>(n))
    throw std::runtime_error("dataset invalid: per-node column length mismatch");
  for (int i = 0; i < n; ++i) {
    if (sensitive[i] != 0 && sensitive[i] != 1)
      throw std::runtime_error("dataset invalid: row " + std::to_string(i + 1) +
                               ": sensitive value must be 0 or 1");
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::runtime_error("dataset invalid: row " + std::to_string(i + 1) +
                               ": label out of range");
    for (double v : row(i))
      if (!std::isfinite(v))
        throw std::runtime_error("dataset invalid: row " + std::to_string(i + 1) +
                                 ": non-finite embedding value");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, int data_row, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("row " + std::to_string(data_row) + ": bad " + what +
                             " value '" + s + "'");
  return v;
}

long parse_long(const std::string& s, int data_row, const char* what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("row " + std::to_string(data_row) + ": bad " + what +
                             " value '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[40];
  int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, len);
}

}  // namespace

EmbeddingDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file '" + path + "'");
  auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "node_id" || header[1] != "s" || header[2] != "y" ||
      header[3] != "split")
    throw std::runtime_error("malformed header: expected node_id,s,y,split,e0,...");
  int p = static_cast<int>(header.size()) - 4;
  for (int j = 0; j < p; ++j)
    if (header[4 + j] != "e" + std::to_string(j))
      throw std::runtime_error("malformed header: column " + std::to_string(4 + j) +
                               " should be e" + std::to_string(j));

  EmbeddingDataset ds;
  ds.p = p;
  int max_label = 0;
  int data_row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++data_row;
    auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw std::runtime_error("row " + std::to_string(data_row) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(f.size()));
    long s = parse_long(f[1], data_row, "sensitive");
    if (s != 0 && s != 1)
      throw std::runtime_error("row " + std::to_string(data_row) +
                               ": sensitive value must be 0 or 1, got " + f[1]);
    long y = parse_long(f[2], data_row, "label");
    if (y < 0)
      throw std::runtime_error("row " + std::to_string(data_row) + ": negative label");
    Split sp;
    try {
      sp = split_from_name(f[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("row " + std::to_string(data_row) + ": unknown split tag '" +
                               f[3] + "'");
    }
    for (int j = 0; j < p; ++j) {
      double v = parse_double(f[4 + j], data_row, "embedding");
      if (!std::isfinite(v))
        throw std::runtime_error("row " + std::to_string(data_row) +
                                 ": non-finite embedding value");
      ds.embeddings.push_back(v);
    }
    ds.sensitive.push_back(static_cast<int>(s));
    ds.labels.push_back(static_cast<int>(y));
    ds.split.push_back(sp);
    max_label = std::max(max_label, static_cast<int>(y));
  }
  ds.n = data_row;
  ds.num_classes = std::max(2, max_label + 1);
  ds.validate();
  return ds;
}

void save_dataset(const EmbeddingDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);  // binary: force LF line endings
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "node_id,s,y,split";
  for (int j = 0; j < ds.p; ++j) out << ",e" << j;
  out << "\n";
  for (int i = 0; i < ds.n; ++i) {
    out << i << ',' << ds.sensitive[i] << ',' << ds.labels[i] << ','
        << split_name(ds.split[i]);
    for (double v : ds.row(i)) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void SyntheticSpec::validate() const {
  if (n < 1 || p < 1 || num_classes < 2)
    throw std::runtime_error("synthetic spec invalid: need n >= 1, p >= 1, C >= 2");
  if (noise_std <= 0) throw std::runtime_error("synthetic spec invalid: noise_std must be > 0");
  if (group_gap < 0) throw std::runtime_error("synthetic spec invalid: group_gap must be >= 0");
  if (label_leak < 0 || label_leak > 1)
    throw std::runtime_error("synthetic spec invalid: label_leak must be in [0,1]");
  for (const Vec* v : {&planted_direction, &task_signal}) {
    if (v->empty()) continue;  // empty means the default unit axis
    if (v->size() != static_cast<size_t>(p))
      throw std::runtime_error("synthetic spec invalid: direction length != p");
    if (std::abs(norm2(*v) - 1.0) > 1e-9)
      throw std::runtime_error("synthetic spec invalid: directions must have unit norm");
  }
}

SyntheticSpec SyntheticSpec::defaults() { return SyntheticSpec{}; }

SyntheticSpec SyntheticSpec::resolved() const {
  SyntheticSpec s = *this;
  if (s.planted_direction.empty()) {
    s.planted_direction.assign(s.p, 0.0);
    s.planted_direction[0] = 1.0;
  }
  if (s.task_signal.empty()) {
    s.task_signal.assign(s.p, 0.0);
    s.task_signal[s.p > 1 ? 1 : 0] = 1.0;
  }
  return s;
}

EmbeddingDataset generate_synthetic(const SyntheticSpec& raw_spec, uint64_t seed) {
  const SyntheticSpec spec = raw_spec.resolved();
  spec.validate();
  if (spec.n < 4) throw std::runtime_error("synthetic generation needs n >= 4 to fill all splits");

  RngStream rng(seed, stream_id(StreamKind::SyntheticGen));
  EmbeddingDataset ds;
  ds.n = spec.n;
  ds.p = spec.p;
  ds.num_classes = spec.num_classes;
  ds.embeddings.resize(static_cast<size_t>(spec.n) * spec.p);
  ds.sensitive.resize(spec.n);
  ds.labels.resize(spec.n);
  ds.split.resize(spec.n);

  auto shuffle = [](std::vector<int>& v, RngStream& r) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[r.uniform_int(static_cast<uint64_t>(i) + 1)]);
  };

  // Stratified assignment: exact group sizes and exact per-group leak counts,
  // so the planted y-s correlation equals label_leak instead of fluctuating
  // with the seed.
  std::vector<int> order(spec.n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  for (int r = 0; r < spec.n; ++r) ds.sensitive[order[r]] = r < spec.n / 2 ? 0 : 1;

  const double half_class = (spec.num_classes - 1) / 2.0;
  for (int g = 0; g < 2; ++g) {
    std::vector<int> members;
    for (int i = 0; i < spec.n; ++i)
      if (ds.sensitive[i] == g) members.push_back(i);
    shuffle(members, rng);
    long flips = std::lround(spec.label_leak * static_cast<double>(members.size()));
    for (size_t r = 0; r < members.size(); ++r) {
      int y = r < static_cast<size_t>(flips)
                  ? g % spec.num_classes
                  : static_cast<int>((r - static_cast<size_t>(flips)) %
                                     static_cast<size_t>(spec.num_classes));
      ds.labels[members[r]] = y;
    }
  }

  for (int i = 0; i < spec.n; ++i) {
    double group_shift = (ds.sensitive[i] - 0.5) * spec.group_gap;
    // class centers evenly spaced task_gap apart along task_signal
    double task_shift = (ds.labels[i] - half_class) * spec.task_gap;
    double* rowp = ds.embeddings.data() + static_cast<size_t>(i) * spec.p;
    for (int j = 0; j < spec.p; ++j)
      rowp[j] = group_shift * spec.planted_direction[j] + task_shift * spec.task_signal[j] +
                spec.noise_std * rng.normal();
  }

  // 50/25/25 split by seeded shuffle, stratified over (s, y) cells so every
  // split carries the same label-bias structure
  RngStream shuffle_rng(seed, stream_id(StreamKind::SplitShuffle));
  std::vector<std::vector<int>> cells(2 * static_cast<size_t>(spec.num_classes));
  for (int i = 0; i < spec.n; ++i)
    cells[static_cast<size_t>(ds.sensitive[i]) * spec.num_classes + ds.labels[i]].push_back(i);
  // proportional fill hits the exact global 50/25/25 counts while keeping
  // each (s, y) cell spread across all three splits
  const long want[3] = {spec.n / 2, spec.n / 4, spec.n - spec.n / 2 - spec.n / 4};
  long assigned[3] = {0, 0, 0};
  for (auto& cell : cells) {
    shuffle(cell, shuffle_rng);
    for (int idx : cell) {
      int best = -1;
      double best_deficit = -1.0;
      for (int k = 0; k < 3; ++k) {
        if (assigned[k] >= want[k]) continue;
        double deficit = static_cast<double>(want[k] - assigned[k]) /
                         static_cast<double>(want[k]);
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = k;
        }
      }
      ds.split[idx] = static_cast<Split>(best);
      ++assigned[best];
    }
  }

  ds.validate();
  return ds;
}

}  // namespace fairpar
