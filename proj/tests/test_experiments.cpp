#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "zonalseg/experiments.hpp"

using namespace zonalseg;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::size_t>> one_based(const FoldPlan& plan) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& fold : plan.folds) {
    std::vector<std::size_t> f;
    for (std::size_t i : fold) f.push_back(i + 1);
    out.push_back(f);
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MatrixConfig tiny_matrix_config(const fs::path& out_dir, std::uint64_t seed) {
  MatrixConfig cfg;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  cfg.workers = 1;
  cfg.variants = {ModelVariant::unet};
  cfg.model.depth = 2;
  cfg.model.base_width = 4;
  cfg.model.se_reduction = 4;
  cfg.train.crop = 16;
  cfg.train.epochs = 1;
  cfg.train.lr_decay_epochs = {};
  cfg.train.batch_size = 4;

  const auto profiles = default_phantom_profiles();
  for (const auto& p : profiles) {
    DatasetDescriptor d;
    d.tag = p.tag;
    d.patients = 4;
    d.slices_per_patient = 1;
    d.canvas = 24;
    d.profile = p;
    cfg.datasets.descriptors.push_back(d);
  }
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("reference fold partitions for the three cohort sizes") {
  CHECK(one_based(make_folds(21)) ==
        std::vector<std::vector<std::size_t>>{
            {1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}, {11, 12, 13, 14, 15},
            {16, 17, 18, 19, 20, 21}});
  CHECK(one_based(make_folds(19)) ==
        std::vector<std::vector<std::size_t>>{
            {1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}, {11, 12, 13, 14, 15},
            {16, 17, 18, 19}});
  CHECK(one_based(make_folds(40)).back() ==
        std::vector<std::size_t>{31, 32, 33, 34, 35, 36, 37, 38, 39, 40});
  CHECK(make_folds(40).folds[0].size() == 10);
}

TEST_CASE("other sizes use contiguous near-equal blocks") {
  CHECK(one_based(make_folds(8)) ==
        std::vector<std::vector<std::size_t>>{{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  const FoldPlan p6 = make_folds(6);
  CHECK(p6.folds[0].size() == 1);
  CHECK(p6.folds[3].size() == 3);  // remainder trails
  CHECK(p6.patient_count() == 6);
  CHECK_THROWS_AS(make_folds(3), std::invalid_argument);
}

TEST_CASE("folds are disjoint and cover all patients") {
  for (std::size_t n : {4, 7, 19, 21, 40, 55}) {
    const FoldPlan plan = make_folds(n);
    REQUIRE(plan.folds.size() == 4);
    std::set<std::size_t> seen;
    for (const auto& fold : plan.folds) {
      for (std::size_t i : fold) {
        CHECK(seen.insert(i).second);  // disjoint
        CHECK(i < n);
      }
    }
    CHECK(seen.size() == n);
  }
}

TEST_CASE("the condition matrix enumerates 7 x 3 = 21 configurations") {
  const auto conditions = enumerate_conditions({"a", "b", "c"});
  REQUIRE(conditions.size() == 21);

  std::set<std::string> labels;
  std::size_t test_counts[3] = {0, 0, 0};
  for (const auto& c : conditions) {
    labels.insert(c.label());
    ++test_counts[c.test_set];
  }
  CHECK(labels.size() == 21);
  CHECK(test_counts[0] == 7);  // each dataset tested exactly 7 times
  CHECK(test_counts[1] == 7);
  CHECK(test_counts[2] == 7);

  // Spoke order: I = #1->#1, XII = #1/#2->#3, XXI = #1/#2/#3->#3.
  CHECK(conditions[0].label() == "#1->#1");
  CHECK(conditions[11].label() == "#1/#2->#3");
  CHECK(conditions[20].label() == "#1/#2/#3->#3");
  CHECK(conditions[11].file_stem() == "train12_test3");

  CHECK_THROWS_AS(enumerate_conditions({"a", "a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_conditions({"a", "b"}), std::invalid_argument);
}

TEST_CASE("condition membership helpers") {
  const Condition in{{0, 2}, 2};
  CHECK(in.test_in_training());
  CHECK(in.label() == "#1/#3->#3");
  const Condition out{{0, 1}, 2};
  CHECK_FALSE(out.test_in_training());
}

TEST_CASE("roman numerals for the spoke labels") {
  CHECK(roman_numeral(1) == "I");
  CHECK(roman_numeral(4) == "IV");
  CHECK(roman_numeral(9) == "IX");
  CHECK(roman_numeral(12) == "XII");
  CHECK(roman_numeral(21) == "XXI");
}

TEST_CASE("matrix config json round trip") {
  const MatrixConfig cfg = tiny_matrix_config("/tmp/zonalseg_cfg_rt", 5);
  const MatrixConfig back = matrix_config_from_json_text(matrix_config_to_json_text(cfg));
  CHECK(back.seed == cfg.seed);
  CHECK(back.variants.size() == 1);
  CHECK(back.datasets.descriptors.size() == 3);
  CHECK(back.train.crop == 16);
  CHECK(back.model.depth == 2);
}

TEST_CASE("a tiny matrix runs end to end, deterministically") {
  const fs::path base = fs::temp_directory_path() / "zonalseg_matrix_test";
  fs::remove_all(base);

  const MatrixResult r1 = run_matrix(tiny_matrix_config(base / "run1", 31));
  CHECK(r1.completed_jobs == 21);
  CHECK(r1.leakage_checks == 84);  // 21 conditions x 4 rounds
  CHECK(r1.summaries.size() == 21);
  for (const auto& s : r1.summaries) {
    CHECK(s.rounds.size() == 4);
    CHECK(s.cg_mean >= 0.0);
    CHECK(s.cg_mean <= 100.0);
  }

  // In-training conditions test one fold per round; the whole dataset is
  // covered by round test sets without repetition.
  const auto rows = read_file(base / "run1/results/unet/train1_test1.csv");
  std::set<std::string> patients;
  std::stringstream ss(rows);
  std::string line;
  std::getline(ss, line);
  std::size_t cg_rows = 0;
  while (std::getline(ss, line)) {
    if (line.find(",CG,") == std::string::npos) continue;
    ++cg_rows;
    const auto first = line.find(',');
    const auto second = line.find(',', line.find(',', first + 1) + 1);
    const auto third = line.find(',', second + 1);
    CHECK(patients.insert(line.substr(second + 1, third - second - 1)).second);
  }
  CHECK(cg_rows == 4);  // 4 patients, one per fold round

  const MatrixResult r2 = run_matrix(tiny_matrix_config(base / "run2", 31));
  CHECK(read_file(base / "run1/results/unet/train123_test2.csv") ==
        read_file(base / "run2/results/unet/train123_test2.csv"));
  CHECK(read_file(base / "run1/results/unet/train1_test3.csv") ==
        read_file(base / "run2/results/unet/train1_test3.csv"));

  // Resume: re-running the same out_dir skips completed jobs.
  const MatrixResult r3 = run_matrix(tiny_matrix_config(base / "run1", 31));
  CHECK(r3.skipped_jobs == 21);
  CHECK(r3.completed_jobs == 0);
  CHECK(r3.summaries.size() == 21);

  // Summary reload round trip.
  const MatrixResult loaded = load_matrix_results(base / "run1");
  REQUIRE(loaded.summaries.size() == r1.summaries.size());
  for (std::size_t i = 0; i < loaded.summaries.size(); ++i) {
    CHECK(loaded.summaries[i].cg_mean ==
          doctest::Approx(r1.summaries[i].cg_mean).epsilon(1e-12));
    CHECK(loaded.summaries[i].condition.label() == r1.summaries[i].condition.label());
  }
  fs::remove_all(base);
}

TEST_CASE("evaluate_slice produces sane metrics on a phantom") {
  DatasetDescriptor d;
  d.tag = "eval";
  d.patients = 1;
  d.slices_per_patient = 1;
  d.canvas = 24;
  d.profile = default_phantom_profiles()[0];
  const Dataset set = generate_phantom_dataset(d, 17);

  ModelSpec spec;
  spec.variant = ModelVariant::unet;
  spec.depth = 2;
  spec.base_width = 4;
  const ModelState model = build_model(spec, 3);

  const SliceMetrics m = evaluate_slice(model, set.patients[0].slices[0], 16);
  CHECK(m.cg.dsc >= 0.0);
  CHECK(m.cg.dsc <= 100.0);
  CHECK(m.pz.dsc >= 0.0);

  const auto pm = evaluate_patient(model, set.patients[0], 16);
  REQUIRE(pm.has_value());
  CHECK(pm->slices == 1);
}

TEST_SUITE_END();
