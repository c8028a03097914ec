#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zonalseg/dataset.hpp"
#include "zonalseg/metrics.hpp"
#include "zonalseg/model.hpp"
#include "zonalseg/training.hpp"

namespace zonalseg {

// 4-fold patient partition. The 21/19/40-patient layouts reproduce the fixed
// reference partitions ({1..5},{6..10},{11..15},{16..21} and so on, 1-based);
// other counts use contiguous blocks of floor(n/4) with the remainder on the
// last fold. Indices are 0-based here.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;

  std::size_t patient_count() const;
};

FoldPlan make_folds(std::size_t patient_count);

// One train->test configuration. Datasets are referenced by 0-based position
// in the experiment's dataset list; labels render them 1-based ("#1/#2->#3").
struct Condition {
  std::vector<std::size_t> train_sets;
  std::size_t test_set = 0;

  bool test_in_training() const;
  std::string label() const;
  std::string file_stem() const;
};

// All 7 training-set choices x 3 test sets, in spoke order: one-dataset
// training first, then the two-dataset pairs, then the full union, with test
// sets cycling fastest. Requires exactly 3 distinct tags.
std::vector<Condition> enumerate_conditions(const std::vector<std::string>& dataset_tags);

std::string roman_numeral(std::size_t value);  // 1 -> "I", 21 -> "XXI"

// --- single-model evaluation ------------------------------------------------

// Center-crop to the network input size, mask to the whole gland, predict,
// postprocess, and score CG and PZ against the cropped truth.
SliceMetrics evaluate_slice(const ModelState& model, const SliceRecord& slice,
                            std::size_t crop);

// Slice-wise metrics averaged per patient; prostate-free slices are skipped.
// Returns nothing (with a warning) when no slice is scorable.
std::optional<PatientMetrics> evaluate_patient(const ModelState& model,
                                               const PatientCase& patient,
                                               std::size_t crop);

// --- the condition matrix ---------------------------------------------------

struct MatrixDatasets {
  // "phantom": generate from descriptors; "load": read from roots.
  std::string mode = "phantom";
  std::vector<DatasetDescriptor> descriptors;
  std::vector<std::filesystem::path> roots;
};

struct MatrixConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir;
  std::size_t workers = 1;
  MatrixDatasets datasets;
  std::vector<ModelVariant> variants = {ModelVariant::unet, ModelVariant::enc_use,
                                        ModelVariant::enc_dec_use};
  ModelSpec model;        // variant field is overridden per job
  TrainConfig train;
  bool save_checkpoints = false;
  bool kiviat_svg = false;

  void validate() const;
};

MatrixConfig matrix_config_from_json_text(const std::string& text);
std::string matrix_config_to_json_text(const MatrixConfig& config);
MatrixConfig load_matrix_config(const std::filesystem::path& path);
MatrixConfig default_matrix_config();

struct RoundSummary {
  std::size_t round = 0;
  std::size_t patients = 0;
  double mean_cg_dsc = 0.0;
  double mean_pz_dsc = 0.0;
};

struct ConditionSummary {
  std::string variant;
  Condition condition;
  std::vector<RoundSummary> rounds;
  double cg_mean = 0.0, cg_sd = 0.0;  // across round means
  double pz_mean = 0.0, pz_sd = 0.0;
};

struct MatrixResult {
  std::filesystem::path out_dir;
  std::vector<std::string> dataset_tags;
  std::vector<ConditionSummary> summaries;  // variant-major, condition order
  std::size_t leakage_checks = 0;
  std::size_t completed_jobs = 0;
  std::size_t skipped_jobs = 0;  // resumed from an earlier run
};

// Runs every variant x condition x round, persisting one patient-level CSV
// row at a time (results/<variant>/<stem>.csv) so an interrupted matrix
// resumes by condition. Writes summary.json and optional Kiviat diagrams.
// Re-running with an identical config and seed reproduces identical CSV
// bytes.
MatrixResult run_matrix(const MatrixConfig& config);

// Rebuilds summaries from a results directory (used by `stats` and tests).
MatrixResult load_matrix_results(const std::filesystem::path& out_dir);

// Radar chart of per-condition DSC means (CG and PZ) for one variant.
void write_kiviat_svg(const std::filesystem::path& path,
                      const std::vector<ConditionSummary>& variant_summaries,
                      const std::string& title);

}  // namespace zonalseg
