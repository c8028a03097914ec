#include "zonalseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace zonalseg {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": mask shapes differ, " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& segmented, const BinaryMask& truth) {
  require_same_shape(segmented, truth, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < segmented.size(); ++i) {
    const bool s = segmented[i], g = truth[i];
    if (s && g) ++c.tp;
    else if (s && !g) ++c.fp;
    else if (!s && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double dsc(const BinaryMask& segmented, const BinaryMask& truth) {
  const ConfusionCounts c = confusion(segmented, truth);
  const std::size_t denom = (c.tp + c.fp) + (c.tp + c.fn);  // |S| + |G|
  if (denom == 0) return 100.0;
  return 200.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double sensitivity(const BinaryMask& segmented, const BinaryMask& truth) {
  const ConfusionCounts c = confusion(segmented, truth);
  if (c.tp + c.fn == 0) return 100.0;  // empty truth: nothing to miss
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(const BinaryMask& segmented, const BinaryMask& truth) {
  const ConfusionCounts c = confusion(segmented, truth);
  const std::size_t s_size = c.tp + c.fp;
  if (s_size == 0) return 100.0;  // empty segmentation has no false positives
  return (1.0 - static_cast<double>(c.fp) / static_cast<double>(s_size)) * 100.0;
}

double true_negative_rate(const BinaryMask& segmented, const BinaryMask& truth) {
  const ConfusionCounts c = confusion(segmented, truth);
  if (c.tn + c.fp == 0) return 100.0;
  return 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

std::vector<PixelCoord> boundary(const BinaryMask& mask) {
  std::vector<PixelCoord> out;
  const std::size_t rows = mask.rows(), cols = mask.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask.at(r, c)) continue;
      const bool edge = r == 0 || r + 1 == rows || c == 0 || c + 1 == cols ||
                        !mask.at(r - 1, c) || !mask.at(r + 1, c) ||
                        !mask.at(r, c - 1) || !mask.at(r, c + 1);
      if (edge) out.push_back({r, c});
    }
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance lower envelope (Felzenszwalb/Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d,
            std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    while (true) {
      if (f[v[k]] == kInf) {
        // no finite parabola yet
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      const double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) /
                       (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    if (f[v[0]] == kInf) {
      d[q] = kInf;
      continue;
    }
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_to_set(const std::vector<PixelCoord>& set,
                                            std::size_t rows, std::size_t cols) {
  std::vector<double> dist(rows * cols, kInf);
  for (const auto& p : set) dist[p.row * cols + p.col] = 0.0;
  if (set.empty()) return dist;

  std::vector<double> f(std::max(rows, cols)), d(std::max(rows, cols));
  std::vector<int> v(std::max(rows, cols));
  std::vector<double> z(std::max(rows, cols) + 1);

  // columns first, then rows
  for (std::size_t c = 0; c < cols; ++c) {
    f.resize(rows);
    d.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) f[r] = dist[r * cols + c];
    edt_1d(f, d, v, z);
    for (std::size_t r = 0; r < rows; ++r) dist[r * cols + c] = d[r];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    f.resize(cols);
    d.resize(cols);
    for (std::size_t c = 0; c < cols; ++c) f[c] = dist[r * cols + c];
    edt_1d(f, d, v, z);
    for (std::size_t c = 0; c < cols; ++c) dist[r * cols + c] = d[c];
  }
  return dist;
}

std::optional<BoundaryDistance> avg_max_distance(const BinaryMask& segmented,
                                                 const BinaryMask& truth) {
  require_same_shape(segmented, truth, "avg_max_distance");
  const auto sb = boundary(segmented);
  const auto gb = boundary(truth);
  if (sb.empty() || gb.empty()) return std::nullopt;

  const auto sq = squared_distance_to_set(gb, truth.rows(), truth.cols());
  BoundaryDistance out;
  double total = 0.0;
  for (const auto& p : sb) {
    const double d = std::sqrt(sq[p.row * truth.cols() + p.col]);
    total += d;
    out.max = std::max(out.max, d);
  }
  out.avg = total / static_cast<double>(sb.size());
  return out;
}

std::optional<BoundaryDistance> symmetric_avg_max_distance(
    const BinaryMask& segmented, const BinaryMask& truth) {
  const auto fwd = avg_max_distance(segmented, truth);
  const auto bwd = avg_max_distance(truth, segmented);
  if (!fwd || !bwd) return std::nullopt;
  return BoundaryDistance{0.5 * (fwd->avg + bwd->avg), std::max(fwd->max, bwd->max)};
}

RegionMetrics region_metrics(const BinaryMask& segmented, const BinaryMask& truth) {
  RegionMetrics m;
  m.dsc = dsc(segmented, truth);
  m.sen = sensitivity(segmented, truth);
  m.spc = specificity(segmented, truth);
  if (const auto d = avg_max_distance(segmented, truth)) {
    m.avgd = d->avg;
    m.maxd = d->max;
  }
  return m;
}

namespace {

struct Averager {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

RegionMetrics average_region(const std::vector<SliceMetrics>& slices,
                             RegionMetrics SliceMetrics::*region) {
  Averager adsc, asen, aspc, aavg, amax;
  for (const auto& s : slices) {
    const RegionMetrics& m = s.*region;
    adsc.add(m.dsc);
    asen.add(m.sen);
    aspc.add(m.spc);
    if (m.avgd) aavg.add(*m.avgd);
    if (m.maxd) amax.add(*m.maxd);
  }
  RegionMetrics out;
  out.dsc = *adsc.mean();
  out.sen = *asen.mean();
  out.spc = *aspc.mean();
  out.avgd = aavg.mean();
  out.maxd = amax.mean();
  return out;
}

}  // namespace

PatientMetrics aggregate_patient(const std::string& patient_id,
                                 const std::vector<SliceMetrics>& slices) {
  if (slices.empty()) {
    throw std::invalid_argument("aggregate_patient: no slice metrics for patient " +
                                patient_id);
  }
  PatientMetrics out;
  out.patient_id = patient_id;
  out.slices = slices.size();
  out.cg = average_region(slices, &SliceMetrics::cg);
  out.pz = average_region(slices, &SliceMetrics::pz);
  return out;
}

std::string metrics_csv_header() {
  return "dataset,condition,fold,patient,region,level,dsc,sen,spc,avgd,maxd";
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv_row(const std::string& dataset, const std::string& condition,
                            int fold, const std::string& patient,
                            const std::string& region, MetricsLevel level,
                            const RegionMetrics& m) {
  std::string row = dataset + "," + condition + "," + std::to_string(fold) + "," +
                    patient + "," + region + "," +
                    (level == MetricsLevel::slice ? "slice" : "patient") + "," +
                    fmt_double(m.dsc) + "," + fmt_double(m.sen) + "," + fmt_double(m.spc) +
                    ",";
  if (m.avgd) row += fmt_double(*m.avgd);
  row += ",";
  if (m.maxd) row += fmt_double(*m.maxd);
  return row;
}

}  // namespace zonalseg
