#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zonalseg/mask.hpp"
#include "zonalseg/tensor.hpp"

namespace zonalseg {

// One axial slice: intensity image in [0,1] plus whole-gland (WG) and
// central-gland (CG) annotation masks. The peripheral zone is always derived
// as WG minus CG, never stored.
struct SliceRecord {
  Tensor image;  // (H,W)
  BinaryMask wg;
  BinaryMask cg;
  double pixel_spacing_mm = 1.0;
  std::size_t index = 0;

  std::size_t rows() const { return image.dim(0); }
  std::size_t cols() const { return image.dim(1); }

  // Enforces matching shapes and CG inside WG; reports the first offending
  // pixel on violation.
  void validate() const;
};

struct PatientCase {
  std::string id;
  std::vector<SliceRecord> slices;
  std::string dataset_tag;
};

struct Dataset {
  std::string tag;
  double pixel_spacing_mm = 1.0;
  std::vector<PatientCase> patients;
};

// Synthetic institution profile. The three default profiles mimic scanners
// with different contrast, noise and shading so cross-institution transfer
// is non-trivial: the inner gland stays darker than the peripheral zone in
// all of them, but by different margins.
struct PhantomProfile {
  std::string tag;
  double cg_level = 0.38;       // inner gland intensity (hypo-intense)
  double pz_level = 0.72;       // peripheral zone intensity (hyper-intense)
  double background_level = 0.15;
  double noise_sigma = 0.02;
  double bias_field_strength = 0.05;  // multiplicative shading amplitude
  double pixel_spacing_mm = 0.625;
};

struct DatasetDescriptor {
  std::string tag;
  std::size_t patients = 0;
  std::size_t slices_per_patient = 0;
  std::size_t canvas = 72;
  PhantomProfile profile;
};

std::vector<PhantomProfile> default_phantom_profiles();

// Center-crop (larger) or zero-pad (smaller) each dimension independently to
// the target size; masks move with the image. Odd remainders put the extra
// pixel on the trailing side. Idempotent at the target size.
SliceRecord to_canvas(const SliceRecord& slice, std::size_t rows, std::size_t cols);

// Zeroes intensities outside the whole gland. Slices without a gland are not
// maskable; callers should skip them (see has_prostate).
SliceRecord mask_to_wg(const SliceRecord& slice);
bool has_prostate(const SliceRecord& slice);

// Deterministic elliptical phantom: WG ellipse with an inner CG ellipse
// offset toward the anterior side, smooth size variation from apex to base,
// institution-specific contrast/noise/shading. Intensities are snapped to
// the 16-bit grid so a save/load round trip is exact.
Dataset generate_phantom_dataset(const DatasetDescriptor& descriptor,
                                 std::uint64_t seed);

// Convenience: one dataset per profile, seeds derived per tag.
std::vector<Dataset> generate_phantom_datasets(
    const std::vector<DatasetDescriptor>& descriptors, std::uint64_t seed);

// On-disk layout, all lossless:
//   <root>/dataset.json                       manifest
//   <root>/patient_<id>/slice_<k>_img.png     16-bit grayscale
//   <root>/patient_<id>/slice_<k>_mask.png    8-bit; 0 bg, 1 WG-only, 2 CG
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

// Combined zonal label codec shared by dataset and prediction directories:
// 0 background, 1 whole gland outside the central gland, 2 central gland.
struct ZonalMasks {
  BinaryMask wg, cg;
};
std::vector<std::uint8_t> encode_zonal_labels(const BinaryMask& wg,
                                              const BinaryMask& cg);
// Rejects label values above 2, reporting the first offending pixel.
ZonalMasks decode_zonal_labels(const std::vector<std::uint8_t>& labels,
                               std::size_t rows, std::size_t cols);

}  // namespace zonalseg
