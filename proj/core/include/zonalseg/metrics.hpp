#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zonalseg/mask.hpp"

namespace zonalseg {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const BinaryMask& segmented, const BinaryMask& truth);

// Overlap metrics, reported as percentages. Empty/empty conventions: perfect
// agreement on a prostate-free slice scores 100.
double dsc(const BinaryMask& segmented, const BinaryMask& truth);
double sensitivity(const BinaryMask& segmented, const BinaryMask& truth);
// (1 - |FP|/|S|) * 100; 100 when the segmentation is empty.
double specificity(const BinaryMask& segmented, const BinaryMask& truth);
// Classical |TN|/(|TN|+|FP|) * 100 form, kept for completeness.
double true_negative_rate(const BinaryMask& segmented, const BinaryMask& truth);

struct PixelCoord {
  std::size_t row = 0, col = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

// Foreground pixels with at least one background 4-neighbour; the frame
// border counts as background.
std::vector<PixelCoord> boundary(const BinaryMask& mask);

struct BoundaryDistance {
  double avg = 0.0;
  double max = 0.0;
};

// Directed distances from each boundary pixel of `segmented` to the nearest
// boundary pixel of `truth` (Euclidean, pixels). Empty when either boundary
// is empty; such slices are excluded from patient averages, never scored 0.
std::optional<BoundaryDistance> avg_max_distance(const BinaryMask& segmented,
                                                 const BinaryMask& truth);

// Symmetrised variant (max/mean over both directions), offered as a clearly
// named extra; the reported metrics use the directed form above.
std::optional<BoundaryDistance> symmetric_avg_max_distance(
    const BinaryMask& segmented, const BinaryMask& truth);

// Exact squared Euclidean distance transform to the nearest set pixel
// (two-pass lower-envelope algorithm). Entries are +inf when the set is
// empty. Rows*cols layout matching the mask.
std::vector<double> squared_distance_to_set(const std::vector<PixelCoord>& set,
                                            std::size_t rows, std::size_t cols);

struct RegionMetrics {
  double dsc = 0.0, sen = 0.0, spc = 0.0;
  std::optional<double> avgd, maxd;
};

RegionMetrics region_metrics(const BinaryMask& segmented, const BinaryMask& truth);

enum class MetricsLevel { slice, patient };

struct SliceMetrics {
  std::size_t slice_index = 0;
  RegionMetrics cg, pz;
};

struct PatientMetrics {
  std::string patient_id;
  RegionMetrics cg, pz;
  std::size_t slices = 0;
};

// Unweighted mean over slices; distance entries average only over slices
// where they are defined. Throws when `slices` is empty.
PatientMetrics aggregate_patient(const std::string& patient_id,
                                 const std::vector<SliceMetrics>& slices);

// CSV row in the reporting schema
// dataset,condition,fold,patient,region,level,dsc,sen,spc,avgd,maxd
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& dataset, const std::string& condition,
                            int fold, const std::string& patient,
                            const std::string& region, MetricsLevel level,
                            const RegionMetrics& m);

}  // namespace zonalseg
