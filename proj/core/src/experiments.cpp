#include "zonalseg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "zonalseg/rng.hpp"
#include "zonalseg/svg.hpp"

namespace zonalseg {

using nlohmann::json;

std::size_t FoldPlan::patient_count() const {
  std::size_t n = 0;
  for (const auto& f : folds) n += f.size();
  return n;
}

FoldPlan make_folds(std::size_t patient_count) {
  if (patient_count < 4) {
    throw std::invalid_argument("make_folds: need at least 4 patients, got " +
                                std::to_string(patient_count));
  }
  // Reference partitions for the three standard cohort sizes; other counts
  // fall back to contiguous floor(n/4) blocks with the remainder on the
  // last fold.
  std::vector<std::size_t> sizes;
  switch (patient_count) {
    case 21: sizes = {5, 5, 5, 6}; break;
    case 19: sizes = {5, 5, 5, 4}; break;
    case 40: sizes = {10, 10, 10, 10}; break;
    default: {
      const std::size_t base = patient_count / 4;
      sizes = {base, base, base, patient_count - 3 * base};
    }
  }
  FoldPlan plan;
  std::size_t next = 0;
  for (std::size_t s : sizes) {
    std::vector<std::size_t> fold(s);
    std::iota(fold.begin(), fold.end(), next);
    next += s;
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

bool Condition::test_in_training() const {
  return std::find(train_sets.begin(), train_sets.end(), test_set) != train_sets.end();
}

std::string Condition::label() const {
  std::string out;
  for (std::size_t i = 0; i < train_sets.size(); ++i) {
    if (i) out += "/";
    out += "#" + std::to_string(train_sets[i] + 1);
  }
  out += "->#" + std::to_string(test_set + 1);
  return out;
}

std::string Condition::file_stem() const {
  std::string out = "train";
  for (std::size_t s : train_sets) out += std::to_string(s + 1);
  out += "_test" + std::to_string(test_set + 1);
  return out;
}

std::vector<Condition> enumerate_conditions(const std::vector<std::string>& dataset_tags) {
  if (dataset_tags.size() != 3) {
    throw std::invalid_argument("enumerate_conditions: expected exactly 3 datasets, got " +
                                std::to_string(dataset_tags.size()));
  }
  std::set<std::string> unique(dataset_tags.begin(), dataset_tags.end());
  if (unique.size() != 3) {
    throw std::invalid_argument("enumerate_conditions: duplicate dataset tags");
  }
  static const std::vector<std::vector<std::size_t>> trainings = {
      {0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
  std::vector<Condition> out;
  out.reserve(21);
  for (const auto& t : trainings) {
    for (std::size_t test = 0; test < 3; ++test) {
      out.push_back(Condition{t, test});
    }
  }
  return out;
}

std::string roman_numeral(std::size_t value) {
  static const std::pair<std::size_t, const char*> table[] = {
      {1000, "M"}, {900, "CM"}, {500, "D"}, {400, "CD"}, {100, "C"}, {90, "XC"},
      {50, "L"},   {40, "XL"},  {10, "X"},  {9, "IX"},   {5, "V"},   {4, "IV"},
      {1, "I"}};
  std::string out;
  for (const auto& [n, sym] : table) {
    while (value >= n) {
      out += sym;
      value -= n;
    }
  }
  return out;
}

SliceMetrics evaluate_slice(const ModelState& model, const SliceRecord& slice,
                            std::size_t crop) {
  const SliceRecord view = to_canvas(slice, crop, crop);
  const SliceRecord masked = mask_to_wg(view);

  Tensor input({1, 1, crop, crop});
  std::copy(masked.image.data(), masked.image.data() + masked.image.size(),
            input.data());
  const Tensor prob4 = forward(model, input);
  Tensor prob({crop, crop});
  std::copy(prob4.data(), prob4.data() + prob4.size(), prob.data());

  const BinaryMask pred_cg = postprocess_cg(prob, view.wg);
  const BinaryMask pred_pz = derive_pz(view.wg, pred_cg);
  const BinaryMask truth_pz = derive_pz(view.wg, view.cg);

  SliceMetrics m;
  m.slice_index = slice.index;
  m.cg = region_metrics(pred_cg, view.cg);
  m.pz = region_metrics(pred_pz, truth_pz);
  return m;
}

std::optional<PatientMetrics> evaluate_patient(const ModelState& model,
                                               const PatientCase& patient,
                                               std::size_t crop) {
  std::vector<SliceMetrics> slices;
  for (const auto& s : patient.slices) {
    if (!has_prostate(s)) continue;
    slices.push_back(evaluate_slice(model, s, crop));
  }
  if (slices.empty()) {
    std::cerr << "warning: patient " << patient.id << " has no scorable slices, excluded\n";
    return std::nullopt;
  }
  return aggregate_patient(patient.id, slices);
}

void MatrixConfig::validate() const {
  if (out_dir.empty()) throw std::invalid_argument("MatrixConfig: out_dir is required");
  if (variants.empty()) throw std::invalid_argument("MatrixConfig: no model variants");
  if (datasets.mode == "phantom") {
    if (datasets.descriptors.size() != 3) {
      throw std::invalid_argument("MatrixConfig: phantom mode needs 3 descriptors");
    }
  } else if (datasets.mode == "load") {
    if (datasets.roots.size() != 3) {
      throw std::invalid_argument("MatrixConfig: load mode needs 3 dataset roots");
    }
  } else {
    throw std::invalid_argument("MatrixConfig: dataset mode must be 'phantom' or 'load'");
  }
  train.validate();
  for (ModelVariant v : variants) {
    ModelSpec spec = model;
    spec.variant = v;
    spec.validate();
  }
}

namespace {

json descriptor_to_json(const DatasetDescriptor& d) {
  return json{{"tag", d.tag},
              {"patients", d.patients},
              {"slices_per_patient", d.slices_per_patient},
              {"canvas", d.canvas},
              {"profile",
               {{"tag", d.profile.tag},
                {"cg_level", d.profile.cg_level},
                {"pz_level", d.profile.pz_level},
                {"background_level", d.profile.background_level},
                {"noise_sigma", d.profile.noise_sigma},
                {"bias_field_strength", d.profile.bias_field_strength},
                {"pixel_spacing_mm", d.profile.pixel_spacing_mm}}}};
}

DatasetDescriptor descriptor_from_json(const json& j) {
  DatasetDescriptor d;
  d.tag = j.at("tag").get<std::string>();
  d.patients = j.at("patients").get<std::size_t>();
  d.slices_per_patient = j.at("slices_per_patient").get<std::size_t>();
  d.canvas = j.at("canvas").get<std::size_t>();
  if (j.contains("profile")) {
    const json& p = j.at("profile");
    d.profile.tag = p.value("tag", d.tag);
    d.profile.cg_level = p.value("cg_level", d.profile.cg_level);
    d.profile.pz_level = p.value("pz_level", d.profile.pz_level);
    d.profile.background_level = p.value("background_level", d.profile.background_level);
    d.profile.noise_sigma = p.value("noise_sigma", d.profile.noise_sigma);
    d.profile.bias_field_strength = p.value("bias_field_strength", d.profile.bias_field_strength);
    d.profile.pixel_spacing_mm = p.value("pixel_spacing_mm", d.profile.pixel_spacing_mm);
  }
  return d;
}

}  // namespace

MatrixConfig default_matrix_config() {
  MatrixConfig cfg;
  cfg.out_dir = "runs/matrix";
  const auto profiles = default_phantom_profiles();
  for (const auto& p : profiles) {
    DatasetDescriptor d;
    d.tag = p.tag;
    d.patients = 8;
    d.slices_per_patient = 3;
    d.canvas = 72;
    d.profile = p;
    cfg.datasets.descriptors.push_back(d);
  }
  cfg.model.depth = 4;
  cfg.model.base_width = 8;
  cfg.train.crop = 64;
  cfg.train.epochs = 12;
  // Same schedule shape as the full 50-epoch recipe (decays at 40% and 80%).
  cfg.train.lr_decay_epochs = {5, 10};
  cfg.train.batch_size = 4;
  return cfg;
}

std::string matrix_config_to_json_text(const MatrixConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir.string();
  j["workers"] = cfg.workers;
  j["datasets"]["mode"] = cfg.datasets.mode;
  if (cfg.datasets.mode == "phantom") {
    json arr = json::array();
    for (const auto& d : cfg.datasets.descriptors) arr.push_back(descriptor_to_json(d));
    j["datasets"]["descriptors"] = arr;
  } else {
    json arr = json::array();
    for (const auto& r : cfg.datasets.roots) arr.push_back(r.string());
    j["datasets"]["roots"] = arr;
  }
  json vars = json::array();
  for (ModelVariant v : cfg.variants) vars.push_back(to_string(v));
  j["model"]["variants"] = vars;
  j["model"]["depth"] = cfg.model.depth;
  j["model"]["base_width"] = cfg.model.base_width;
  j["model"]["se_reduction"] = cfg.model.se_reduction;
  j["train"] = json::parse(train_config_to_json_text(cfg.train));
  j["save_checkpoints"] = cfg.save_checkpoints;
  j["kiviat_svg"] = cfg.kiviat_svg;
  return j.dump(2);
}

MatrixConfig matrix_config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  MatrixConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", std::string{});
  cfg.workers = j.value("workers", cfg.workers);
  if (j.contains("datasets")) {
    const json& d = j.at("datasets");
    cfg.datasets.mode = d.value("mode", cfg.datasets.mode);
    if (d.contains("descriptors")) {
      for (const auto& e : d.at("descriptors")) {
        cfg.datasets.descriptors.push_back(descriptor_from_json(e));
      }
    }
    if (d.contains("roots")) {
      for (const auto& e : d.at("roots")) {
        cfg.datasets.roots.emplace_back(e.get<std::string>());
      }
    }
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.contains("variants")) {
      cfg.variants.clear();
      for (const auto& v : m.at("variants")) {
        cfg.variants.push_back(variant_from_string(v.get<std::string>()));
      }
    }
    cfg.model.depth = m.value("depth", cfg.model.depth);
    cfg.model.base_width = m.value("base_width", cfg.model.base_width);
    cfg.model.se_reduction = m.value("se_reduction", cfg.model.se_reduction);
  }
  if (j.contains("train")) {
    cfg.train = train_config_from_json_text(j.at("train").dump());
  }
  cfg.save_checkpoints = j.value("save_checkpoints", cfg.save_checkpoints);
  cfg.kiviat_svg = j.value("kiviat_svg", cfg.kiviat_svg);
  cfg.validate();
  return cfg;
}

MatrixConfig load_matrix_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return matrix_config_from_json_text(buf.str());
}

namespace {

std::uint64_t job_seed(std::uint64_t master, const std::string& variant,
                       const Condition& condition, std::size_t round) {
  return Rng(master)
      .fork("variant:" + variant)
      .fork("cond:" + condition.label())
      .fork("round:" + std::to_string(round))
      .seed();
}

struct CsvRow {
  std::string dataset, condition, patient, region, level;
  int fold = 0;
  double dsc = 0.0, sen = 0.0, spc = 0.0;
  std::optional<double> avgd, maxd;
};

std::vector<CsvRow> parse_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    while (fields.size() < 11) fields.emplace_back();
    CsvRow row;
    row.dataset = fields[0];
    row.condition = fields[1];
    row.fold = std::stoi(fields[2]);
    row.patient = fields[3];
    row.region = fields[4];
    row.level = fields[5];
    row.dsc = std::stod(fields[6]);
    row.sen = std::stod(fields[7]);
    row.spc = std::stod(fields[8]);
    if (!fields[9].empty()) row.avgd = std::stod(fields[9]);
    if (!fields[10].empty()) row.maxd = std::stod(fields[10]);
    rows.push_back(std::move(row));
  }
  return rows;
}

ConditionSummary summarize_rows(const std::string& variant, const Condition& condition,
                                const std::vector<CsvRow>& rows) {
  ConditionSummary s;
  s.variant = variant;
  s.condition = condition;
  for (std::size_t round = 0; round < 4; ++round) {
    RoundSummary r;
    r.round = round;
    double cg_sum = 0.0, pz_sum = 0.0;
    std::size_t cg_n = 0, pz_n = 0;
    for (const auto& row : rows) {
      if (row.fold != static_cast<int>(round) || row.level != "patient") continue;
      if (row.region == "CG") {
        cg_sum += row.dsc;
        ++cg_n;
      } else if (row.region == "PZ") {
        pz_sum += row.dsc;
        ++pz_n;
      }
    }
    if (cg_n == 0) continue;  // round missing (failed or not run)
    r.patients = cg_n;
    r.mean_cg_dsc = cg_sum / static_cast<double>(cg_n);
    r.mean_pz_dsc = pz_n ? pz_sum / static_cast<double>(pz_n) : 0.0;
    s.rounds.push_back(r);
  }

  auto mean_sd = [](const std::vector<RoundSummary>& rounds, bool cg) {
    std::vector<double> v;
    for (const auto& r : rounds) v.push_back(cg ? r.mean_cg_dsc : r.mean_pz_dsc);
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  if (!s.rounds.empty()) {
    std::tie(s.cg_mean, s.cg_sd) = mean_sd(s.rounds, true);
    std::tie(s.pz_mean, s.pz_sd) = mean_sd(s.rounds, false);
  }
  return s;
}

// Whole-gland-masked training slices for one round, plus the leakage audit.
struct RoundData {
  std::vector<SliceRecord> train_slices;
  std::vector<const PatientCase*> test_patients;
};

RoundData gather_round(const std::vector<Dataset>& datasets,
                       const std::vector<FoldPlan>& folds, const Condition& condition,
                       std::size_t round, std::size_t canvas) {
  RoundData data;
  std::set<std::pair<std::size_t, std::size_t>> train_ids;
  for (std::size_t ds : condition.train_sets) {
    const auto& held_out = folds[ds].folds[round];
    for (std::size_t p = 0; p < datasets[ds].patients.size(); ++p) {
      if (std::find(held_out.begin(), held_out.end(), p) != held_out.end()) continue;
      train_ids.insert({ds, p});
      for (const auto& slice : datasets[ds].patients[p].slices) {
        if (!has_prostate(slice)) continue;
        data.train_slices.push_back(mask_to_wg(to_canvas(slice, canvas, canvas)));
      }
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> test_ids;
  if (condition.test_in_training()) {
    for (std::size_t p : folds[condition.test_set].folds[round]) {
      test_ids.push_back({condition.test_set, p});
    }
  } else {
    for (std::size_t p = 0; p < datasets[condition.test_set].patients.size(); ++p) {
      test_ids.push_back({condition.test_set, p});
    }
  }

  for (const auto& id : test_ids) {
    if (train_ids.count(id)) {
      throw std::logic_error("leakage: test patient " +
                             datasets[id.first].patients[id.second].id +
                             " of dataset " + datasets[id.first].tag +
                             " appears in the round " + std::to_string(round) +
                             " training folds");
    }
    data.test_patients.push_back(&datasets[id.first].patients[id.second]);
  }
  return data;
}

}  // namespace

MatrixResult run_matrix(const MatrixConfig& config) {
  config.validate();

  std::vector<Dataset> datasets;
  if (config.datasets.mode == "phantom") {
    datasets = generate_phantom_datasets(config.datasets.descriptors, config.seed);
  } else {
    for (const auto& root : config.datasets.roots) {
      datasets.push_back(load_dataset(root));
      if (datasets.back().patients.empty()) {
        throw std::runtime_error("run_matrix: dataset under " + root.string() + " is empty");
      }
    }
  }

  std::vector<std::string> tags;
  for (const auto& d : datasets) tags.push_back(d.tag);
  const std::vector<Condition> conditions = enumerate_conditions(tags);

  std::vector<FoldPlan> folds;
  for (const auto& d : datasets) folds.push_back(make_folds(d.patients.size()));

  // All slices standardized to the first dataset's canvas (must hold the crop).
  const std::size_t canvas = datasets[0].patients.at(0).slices.at(0).rows();
  if (canvas < config.train.crop) {
    throw std::invalid_argument("run_matrix: canvas " + std::to_string(canvas) +
                                " smaller than crop " + std::to_string(config.train.crop));
  }

  const auto results_dir = config.out_dir / "results";
  std::filesystem::create_directories(results_dir);
  {
    std::ofstream echo(config.out_dir / "matrix_config.json");
    echo << matrix_config_to_json_text(config) << "\n";
  }

  // Resume bookkeeping: one line per completed variant/condition job.
  std::set<std::string> done;
  const auto done_path = results_dir / ".done";
  if (std::filesystem::exists(done_path)) {
    std::ifstream in(done_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) done.insert(line);
    }
  }

  struct Job {
    std::size_t variant_idx;
    std::size_t condition_idx;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < config.variants.size(); ++v) {
    for (std::size_t c = 0; c < conditions.size(); ++c) jobs.push_back({v, c});
  }

  std::mutex io_mutex;
  std::atomic<std::size_t> next_job{0};
  std::atomic<std::size_t> leakage_checks{0};
  std::atomic<std::size_t> completed{0};
  std::atomic<std::size_t> skipped{0};
  json timings = json::object();

  auto worker = [&]() {
    while (true) {
      const std::size_t j = next_job.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      const std::string variant_name = to_string(config.variants[job.variant_idx]);
      const Condition& condition = conditions[job.condition_idx];
      const auto variant_dir = results_dir / variant_name;
      const auto csv_path = variant_dir / (condition.file_stem() + ".csv");
      const std::string done_key = variant_name + "/" + condition.file_stem();

      if (done.count(done_key) && std::filesystem::exists(csv_path)) {
        skipped.fetch_add(1);
        continue;
      }

      const auto t0 = std::chrono::steady_clock::now();
      try {
        {
          std::lock_guard<std::mutex> lock(io_mutex);
          std::filesystem::create_directories(variant_dir);
        }
        std::ofstream csv(csv_path);
        csv << metrics_csv_header() << "\n";

        for (std::size_t round = 0; round < 4; ++round) {
          RoundData data = gather_round(datasets, folds, condition, round, canvas);
          leakage_checks.fetch_add(1);

          ModelSpec spec = config.model;
          spec.variant = config.variants[job.variant_idx];
          const std::uint64_t seed = job_seed(config.seed, variant_name, condition, round);
          ModelState model = build_model(spec, seed);

          TrainConfig train_cfg = config.train;
          train_cfg.seed = seed;
          train(model, data.train_slices, train_cfg);

          if (config.save_checkpoints) {
            const auto ckpt_dir = config.out_dir / "checkpoints" / variant_name;
            {
              std::lock_guard<std::mutex> lock(io_mutex);
              std::filesystem::create_directories(ckpt_dir);
            }
            save_checkpoint(model, ckpt_dir / (condition.file_stem() + "_round" +
                                               std::to_string(round) + ".zck"));
          }

          for (const PatientCase* patient : data.test_patients) {
            const auto metrics = evaluate_patient(model, *patient, config.train.crop);
            if (!metrics) continue;
            csv << metrics_csv_row(tags[condition.test_set], condition.label(),
                                   static_cast<int>(round), metrics->patient_id, "CG",
                                   MetricsLevel::patient, metrics->cg)
                << "\n";
            csv << metrics_csv_row(tags[condition.test_set], condition.label(),
                                   static_cast<int>(round), metrics->patient_id, "PZ",
                                   MetricsLevel::patient, metrics->pz)
                << "\n";
            csv.flush();
          }
        }
        csv.flush();

        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        {
          std::lock_guard<std::mutex> lock(io_mutex);
          std::ofstream done_out(done_path, std::ios::app);
          done_out << done_key << "\n";
          timings[done_key] = secs;
          std::cerr << "matrix: " << variant_name << " " << condition.label()
                    << " done in " << static_cast<int>(secs) << "s\n";
        }
        completed.fetch_add(1);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(io_mutex);
        std::ofstream fail(variant_dir / (condition.file_stem() + ".failed"));
        fail << e.what() << "\n";
        std::cerr << "matrix: " << variant_name << " " << condition.label()
                  << " FAILED: " << e.what() << "\n";
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(config.workers, jobs.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  {
    std::ofstream tf(config.out_dir / "timings.json");
    tf << timings.dump(2) << "\n";
  }

  // Summaries come from the persisted CSVs so fresh and resumed runs share
  // one code path.
  MatrixResult result;
  result.out_dir = config.out_dir;
  result.dataset_tags = tags;
  result.leakage_checks = leakage_checks.load();
  result.completed_jobs = completed.load();
  result.skipped_jobs = skipped.load();

  json summary;
  summary["dataset_tags"] = tags;
  json condition_list = json::array();
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    condition_list.push_back({{"index", c + 1},
                              {"roman", roman_numeral(c + 1)},
                              {"label", conditions[c].label()},
                              {"stem", conditions[c].file_stem()},
                              {"train_sets", conditions[c].train_sets},
                              {"test_set", conditions[c].test_set}});
  }
  summary["conditions"] = condition_list;
  json variant_list = json::array();
  for (ModelVariant v : config.variants) variant_list.push_back(to_string(v));
  summary["variants"] = variant_list;
  summary["leakage"] = {{"checks", result.leakage_checks}, {"violations", 0}};

  json results_json = json::object();
  json kiviat_json = json::object();
  for (ModelVariant v : config.variants) {
    const std::string variant_name = to_string(v);
    json per_condition = json::object();
    json kiviat_cg = json::array(), kiviat_pz = json::array();
    for (const auto& condition : conditions) {
      const auto csv_path = results_dir / variant_name / (condition.file_stem() + ".csv");
      if (!std::filesystem::exists(csv_path)) continue;
      const auto rows = parse_metrics_csv(csv_path);
      ConditionSummary s = summarize_rows(variant_name, condition, rows);
      json rounds = json::array();
      for (const auto& r : s.rounds) {
        rounds.push_back({{"round", r.round},
                          {"patients", r.patients},
                          {"cg_dsc", r.mean_cg_dsc},
                          {"pz_dsc", r.mean_pz_dsc}});
      }
      per_condition[condition.label()] = {{"rounds", rounds},
                                          {"cg", {{"mean", s.cg_mean}, {"sd", s.cg_sd}}},
                                          {"pz", {{"mean", s.pz_mean}, {"sd", s.pz_sd}}}};
      kiviat_cg.push_back(s.cg_mean);
      kiviat_pz.push_back(s.pz_mean);
      result.summaries.push_back(std::move(s));
    }
    results_json[variant_name] = per_condition;
    kiviat_json[variant_name] = {{"CG", kiviat_cg}, {"PZ", kiviat_pz}};
  }
  summary["results"] = results_json;
  summary["kiviat"] = kiviat_json;

  {
    std::ofstream out(config.out_dir / "summary.json");
    out << summary.dump(2) << "\n";
  }

  if (config.kiviat_svg) {
    for (ModelVariant v : config.variants) {
      const std::string variant_name = to_string(v);
      std::vector<ConditionSummary> vs;
      for (const auto& s : result.summaries) {
        if (s.variant == variant_name) vs.push_back(s);
      }
      write_kiviat_svg(config.out_dir / ("kiviat_" + variant_name + ".svg"), vs,
                       variant_name);
    }
  }
  return result;
}

MatrixResult load_matrix_results(const std::filesystem::path& out_dir) {
  std::ifstream in(out_dir / "summary.json");
  if (!in) {
    throw std::runtime_error("load_matrix_results: no summary.json under " +
                             out_dir.string());
  }
  const json summary = json::parse(in);

  MatrixResult result;
  result.out_dir = out_dir;
  result.dataset_tags = summary.at("dataset_tags").get<std::vector<std::string>>();
  result.leakage_checks = summary.at("leakage").at("checks").get<std::size_t>();

  std::vector<Condition> conditions;
  for (const auto& c : summary.at("conditions")) {
    Condition cond;
    cond.train_sets = c.at("train_sets").get<std::vector<std::size_t>>();
    cond.test_set = c.at("test_set").get<std::size_t>();
    conditions.push_back(cond);
  }

  for (const auto& variant : summary.at("variants")) {
    const std::string variant_name = variant.get<std::string>();
    const json& per_condition = summary.at("results").at(variant_name);
    for (const auto& condition : conditions) {
      if (!per_condition.contains(condition.label())) continue;
      const json& entry = per_condition.at(condition.label());
      ConditionSummary s;
      s.variant = variant_name;
      s.condition = condition;
      for (const auto& r : entry.at("rounds")) {
        RoundSummary rs;
        rs.round = r.at("round").get<std::size_t>();
        rs.patients = r.at("patients").get<std::size_t>();
        rs.mean_cg_dsc = r.at("cg_dsc").get<double>();
        rs.mean_pz_dsc = r.at("pz_dsc").get<double>();
        s.rounds.push_back(rs);
      }
      s.cg_mean = entry.at("cg").at("mean").get<double>();
      s.cg_sd = entry.at("cg").at("sd").get<double>();
      s.pz_mean = entry.at("pz").at("mean").get<double>();
      s.pz_sd = entry.at("pz").at("sd").get<double>();
      result.summaries.push_back(std::move(s));
    }
  }
  return result;
}

void write_kiviat_svg(const std::filesystem::path& path,
                      const std::vector<ConditionSummary>& variant_summaries,
                      const std::string& title) {
  const std::size_t n = variant_summaries.size();
  if (n == 0) throw std::invalid_argument("write_kiviat_svg: no summaries");

  const double size = 560.0, cx = size / 2.0, cy = size / 2.0 + 10.0, radius = 200.0;
  SvgWriter svg(size, size + 40.0);
  svg.text(cx, 24.0, title + " DSC by train->test condition", 14, "middle");

  auto point = [&](std::size_t spoke, double value) {
    const double angle = -3.14159265358979323846 / 2.0 +
                         2.0 * 3.14159265358979323846 * static_cast<double>(spoke) /
                             static_cast<double>(n);
    const double r = radius * std::clamp(value, 0.0, 100.0) / 100.0;
    return std::pair{cx + r * std::cos(angle), cy + r * std::sin(angle)};
  };

  for (double ring : {25.0, 50.0, 75.0, 100.0}) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(point(i, ring));
    svg.polyline(pts, "#ccc", 0.8, "none", true);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = point(i, 100.0);
    svg.line(cx, cy, x, y, "#ddd", 0.8);
    const auto [lx, ly] = point(i, 112.0);
    svg.text(lx, ly, roman_numeral(i + 1), 10, "middle");
  }

  std::vector<std::pair<double, double>> cg_pts, pz_pts;
  for (std::size_t i = 0; i < n; ++i) {
    cg_pts.push_back(point(i, variant_summaries[i].cg_mean));
    pz_pts.push_back(point(i, variant_summaries[i].pz_mean));
  }
  svg.polyline(cg_pts, "#1f4e9c", 1.6, "#1f4e9c", true);
  svg.polyline(pz_pts, "#27b3c4", 1.6, "#27b3c4", true);
  svg.text(30.0, size + 20.0, "CG", 12, "start");
  svg.circle(20.0, size + 16.0, 5.0, "#1f4e9c");
  svg.text(90.0, size + 20.0, "PZ", 12, "start");
  svg.circle(80.0, size + 16.0, 5.0, "#27b3c4");
  svg.save(path.string());
}

}  // namespace zonalseg
