// Command-line front end: phantom generation, training, evaluation, the
// 21-condition matrix, statistics, gradient checks and mask post-processing.
// Every subcommand derives all randomness from --seed (or the config seed) so
// reruns reproduce identical output bytes.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "zonalseg/dataset.hpp"
#include "zonalseg/experiments.hpp"
#include "zonalseg/gradcheck.hpp"
#include "zonalseg/metrics.hpp"
#include "zonalseg/model.hpp"
#include "zonalseg/png_io.hpp"
#include "zonalseg/stats.hpp"
#include "zonalseg/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zonalseg;

namespace {

std::size_t default_workers() {
  if (const char* env = std::getenv("ZONALSEG_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

std::string slice_file(const char* kind, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "slice_%03zu_%s.png", k, kind);
  return buf;
}

// --- generate-phantom -------------------------------------------------------

struct GeneratePhantomArgs {
  std::string out;
  std::uint64_t seed = 7;
  std::size_t patients = 8;
  std::size_t slices = 3;
  std::size_t canvas = 72;
};

int cmd_generate_phantom(const GeneratePhantomArgs& args) {
  std::vector<DatasetDescriptor> descriptors;
  for (const auto& profile : default_phantom_profiles()) {
    DatasetDescriptor d;
    d.tag = profile.tag;
    d.patients = args.patients;
    d.slices_per_patient = args.slices;
    d.canvas = args.canvas;
    d.profile = profile;
    descriptors.push_back(d);
  }
  for (const auto& dataset : generate_phantom_datasets(descriptors, args.seed)) {
    const fs::path root = fs::path(args.out) / dataset.tag;
    save_dataset(dataset, root);
    std::cout << "wrote " << dataset.patients.size() << " patients to " << root.string()
              << "\n";
  }
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::string out;
  std::string config_path;
  std::string variant = "enc_dec_use";
  std::size_t depth = 4;
  std::size_t width = 8;
  std::size_t se_reduction = 8;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> crop;
};

int cmd_train(const TrainArgs& args) {
  TrainConfig cfg;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw std::runtime_error("cannot open config " + args.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = train_config_from_json_text(buf.str());
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.epochs) {
    cfg.epochs = *args.epochs;
    std::erase_if(cfg.lr_decay_epochs,
                  [&](std::size_t e) { return e >= cfg.epochs; });
  }
  if (args.crop) cfg.crop = *args.crop;
  cfg.validate();

  std::vector<SliceRecord> slices;
  std::size_t canvas = 0;
  for (const auto& root : args.data) {
    const Dataset dataset = load_dataset(root);
    for (const auto& patient : dataset.patients) {
      for (const auto& slice : patient.slices) {
        if (!has_prostate(slice)) continue;
        if (canvas == 0) canvas = std::max(slice.rows(), cfg.crop);
        slices.push_back(mask_to_wg(to_canvas(slice, canvas, canvas)));
      }
    }
  }

  ModelSpec spec;
  spec.variant = variant_from_string(args.variant);
  spec.depth = args.depth;
  spec.base_width = args.width;
  spec.se_reduction = args.se_reduction;
  ModelState model = build_model(spec, cfg.seed);

  const TrainResult result = train_run(model, slices, cfg, args.out);
  std::cout << "trained " << to_string(spec.variant) << " on " << slices.size()
            << " slices for " << cfg.epochs << " epochs; final loss "
            << result.epoch_loss.back() << "\n"
            << "run directory: " << args.out << "\n";
  return 0;
}

// --- evaluate ------------------------------------------------------------------

struct EvaluateArgs {
  std::string pred;
  std::string truth;
  std::string model_path;
  std::string out_csv;
  std::string save_pred;
  std::string save_prob;
  std::size_t crop = 64;
};

void write_zonal_mask_png(const fs::path& path, const BinaryMask& wg,
                          const BinaryMask& cg) {
  Gray8Image img{wg.rows(), wg.cols(), encode_zonal_labels(wg, cg)};
  write_png_gray8(path, img);
}

int cmd_evaluate(const EvaluateArgs& args) {
  if (args.pred.empty() && args.model_path.empty()) {
    throw std::runtime_error("evaluate: provide --pred or --model");
  }
  const Dataset truth = load_dataset(args.truth);
  if (truth.patients.empty()) throw std::runtime_error("truth dataset is empty");

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!args.out_csv.empty()) {
    file.open(args.out_csv);
    if (!file) throw std::runtime_error("cannot write " + args.out_csv);
    out = &file;
  }
  *out << metrics_csv_header() << "\n";

  std::optional<ModelState> model;
  if (!args.model_path.empty()) model = load_checkpoint(args.model_path);

  for (const auto& patient : truth.patients) {
    std::vector<SliceMetrics> slice_metrics;
    for (std::size_t k = 0; k < patient.slices.size(); ++k) {
      const SliceRecord& slice = patient.slices[k];
      if (!has_prostate(slice)) continue;

      SliceMetrics m;
      if (model) {
        const SliceRecord view = to_canvas(slice, args.crop, args.crop);
        const SliceRecord masked = mask_to_wg(view);
        Tensor input({1, 1, args.crop, args.crop});
        std::copy(masked.image.data(), masked.image.data() + masked.image.size(),
                  input.data());
        const Tensor prob4 = forward(*model, input);
        Tensor prob({args.crop, args.crop});
        std::copy(prob4.data(), prob4.data() + prob4.size(), prob.data());

        if (!args.save_prob.empty()) {
          const fs::path dir = fs::path(args.save_prob) / ("patient_" + patient.id);
          fs::create_directories(dir);
          Gray16Image img{args.crop, args.crop, {}};
          img.pixels.resize(prob.size());
          for (std::size_t i = 0; i < prob.size(); ++i) {
            img.pixels[i] = static_cast<std::uint16_t>(
                std::lround(std::clamp(prob[i], 0.0, 1.0) * 65535.0));
          }
          write_png_gray16(dir / slice_file("prob", k), img);
        }

        const BinaryMask pred_cg = postprocess_cg(prob, view.wg);
        const BinaryMask pred_pz = derive_pz(view.wg, pred_cg);
        if (!args.save_pred.empty()) {
          const fs::path dir = fs::path(args.save_pred) / ("patient_" + patient.id);
          fs::create_directories(dir);
          write_zonal_mask_png(dir / slice_file("mask", k), view.wg, pred_cg);
        }
        m.cg = region_metrics(pred_cg, view.cg);
        m.pz = region_metrics(pred_pz, derive_pz(view.wg, view.cg));
      } else {
        const fs::path mask_path =
            fs::path(args.pred) / ("patient_" + patient.id) / slice_file("mask", k);
        if (!fs::exists(mask_path)) {
          throw std::runtime_error("missing prediction " + mask_path.string());
        }
        const Gray8Image img = read_png_gray8(mask_path);
        if (img.rows != slice.rows() || img.cols != slice.cols()) {
          throw std::runtime_error("prediction size mismatch for " + mask_path.string());
        }
        const ZonalMasks pred = decode_zonal_labels(img.pixels, img.rows, img.cols);
        const BinaryMask pred_pz = derive_pz(pred.wg, pred.cg);
        m.cg = region_metrics(pred.cg, slice.cg);
        m.pz = region_metrics(pred_pz, derive_pz(slice.wg, slice.cg));
      }
      m.slice_index = k;
      slice_metrics.push_back(m);
    }
    if (slice_metrics.empty()) {
      std::cerr << "warning: patient " << patient.id << " has no scorable slices\n";
      continue;
    }
    const PatientMetrics pm = aggregate_patient(patient.id, slice_metrics);
    *out << metrics_csv_row(truth.tag, "-", -1, pm.patient_id, "CG",
                            MetricsLevel::patient, pm.cg)
         << "\n";
    *out << metrics_csv_row(truth.tag, "-", -1, pm.patient_id, "PZ",
                            MetricsLevel::patient, pm.pz)
         << "\n";
  }
  return 0;
}

// --- matrix -------------------------------------------------------------------

struct MatrixArgs {
  std::string config_path;
  std::string write_default;
  std::optional<std::size_t> workers;
  std::string out_override;
};

int cmd_matrix(const MatrixArgs& args) {
  if (!args.write_default.empty()) {
    MatrixConfig cfg = default_matrix_config();
    std::ofstream out(args.write_default);
    out << matrix_config_to_json_text(cfg) << "\n";
    if (!out) throw std::runtime_error("cannot write " + args.write_default);
    std::cout << "wrote default matrix config to " << args.write_default << "\n";
    return 0;
  }
  if (args.config_path.empty()) {
    throw std::runtime_error("matrix: --config is required (or --write-default-config)");
  }
  MatrixConfig cfg = load_matrix_config(args.config_path);
  if (args.workers) cfg.workers = *args.workers;
  else if (cfg.workers == 0) cfg.workers = default_workers();
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;

  const MatrixResult result = run_matrix(cfg);
  std::cout << "matrix complete: " << result.completed_jobs << " jobs run, "
            << result.skipped_jobs << " resumed, " << result.leakage_checks
            << " leakage checks\n"
            << "summary: " << (result.out_dir / "summary.json").string() << "\n";

  std::size_t printed = 0;
  for (const auto& s : result.summaries) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %-16s CG %5.1f +/- %4.1f  PZ %5.1f +/- %4.1f",
                  s.variant.c_str(), s.condition.label().c_str(), s.cg_mean, s.cg_sd,
                  s.pz_mean, s.pz_sd);
    std::cout << line << "\n";
    ++printed;
  }
  if (printed == 0) std::cout << "(no condition summaries; see .failed files)\n";
  return 0;
}

// --- stats --------------------------------------------------------------------

struct StatsArgs {
  std::string results_dir;
  std::string region = "CG";
  std::string scope = "all";
  std::string control;
  double alpha = 0.05;
  bool f_refinement = false;
  std::string out_json;
  std::string svg_path;
};

int cmd_stats(const StatsArgs& args) {
  if (args.region != "CG" && args.region != "PZ") {
    throw std::runtime_error("stats: --region must be CG or PZ");
  }
  if (args.scope != "all" && args.scope != "union") {
    throw std::runtime_error("stats: --scope must be 'all' or 'union'");
  }
  const MatrixResult results = load_matrix_results(args.results_dir);

  std::vector<std::string> methods;
  for (const auto& s : results.summaries) {
    if (std::find(methods.begin(), methods.end(), s.variant) == methods.end()) {
      methods.push_back(s.variant);
    }
  }
  if (methods.size() < 2) {
    throw std::runtime_error("stats: need at least 2 model variants in the matrix");
  }

  // Blocks are cross-validation rounds x conditions; a block contributes only
  // when every method has that round.
  std::vector<std::vector<double>> scores;
  for (const auto& ref : results.summaries) {
    if (ref.variant != methods.front()) continue;
    const auto& condition = ref.condition;
    if (args.scope == "union" && condition.train_sets.size() != 3) continue;
    for (const auto& round : ref.rounds) {
      std::vector<double> block;
      for (const auto& name : methods) {
        for (const auto& s : results.summaries) {
          if (s.variant != name || s.condition.label() != condition.label()) continue;
          for (const auto& r : s.rounds) {
            if (r.round == round.round) {
              block.push_back(args.region == "CG" ? r.mean_cg_dsc : r.mean_pz_dsc);
            }
          }
        }
      }
      if (block.size() == methods.size()) scores.push_back(std::move(block));
    }
  }
  if (scores.size() < 2) throw std::runtime_error("stats: not enough complete blocks");

  std::size_t control = 0;
  if (!args.control.empty()) {
    const auto it = std::find(methods.begin(), methods.end(), args.control);
    if (it == methods.end()) {
      throw std::runtime_error("stats: control '" + args.control + "' not in matrix");
    }
    control = static_cast<std::size_t>(it - methods.begin());
  } else {
    const auto it = std::find(methods.begin(), methods.end(), "enc_dec_use");
    if (it != methods.end()) control = static_cast<std::size_t>(it - methods.begin());
  }

  const FriedmanResult fr = friedman(scores, args.f_refinement);
  const bool rejected = fr.p_value < args.alpha;
  const DunnResult dunn = bonferroni_dunn(scores, control, args.alpha, rejected);

  json report;
  report["region"] = args.region;
  report["scope"] = args.scope;
  report["blocks"] = scores.size();
  report["methods"] = methods;
  report["friedman"] = {{"statistic", fr.statistic},
                        {"p_value", fr.p_value},
                        {"f_refinement", fr.f_refinement},
                        {"rejected_at_alpha", rejected}};
  json ranks = json::object(), flags = json::object();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    ranks[methods[m]] = fr.ranks.mean_ranks[m];
    flags[methods[m]] = static_cast<bool>(dunn.differs_from_control[m]);
  }
  report["mean_ranks"] = ranks;
  report["bonferroni_dunn"] = {{"alpha", dunn.alpha},
                               {"q", dunn.q_value},
                               {"critical_difference", dunn.critical_difference},
                               {"control", methods[control]},
                               {"differs_from_control", flags}};

  const std::string text = report.dump(2);
  if (!args.out_json.empty()) {
    std::ofstream out(args.out_json);
    out << text << "\n";
    if (!out) throw std::runtime_error("cannot write " + args.out_json);
  }
  std::cout << text << "\n";

  if (!args.svg_path.empty()) {
    write_cd_diagram_svg(args.svg_path, dunn, methods,
                         args.region + " DSC, " + args.scope + " conditions");
    std::cout << "wrote " << args.svg_path << "\n";
  }
  return 0;
}

// --- gradcheck ------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 7;
  double tolerance = 1e-4;
  double eps = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  bool ok = true;
  for (const auto& check : layer_gradient_checks(args.seed, args.eps)) {
    const bool pass = check.max_rel_error < args.tolerance;
    ok = ok && pass;
    std::printf("%-36s %11.3e  %s\n", check.name.c_str(), check.max_rel_error,
                pass ? "ok" : "FAIL");
  }

  ModelSpec spec;
  spec.variant = ModelVariant::enc_dec_use;
  spec.depth = 2;
  spec.base_width = 4;
  spec.se_reduction = 4;
  const ModelState model = build_model(spec, args.seed);
  Rng rng = Rng(args.seed).fork("gradcheck:model");
  Tensor batch({1, 1, 16, 16});
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.uniform(0.0, 1.0);
  Tensor truth({1, 1, 16, 16});
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = rng.coin_flip() ? 1.0 : 0.0;

  const ModelGradCheck full = model_gradient_check(model, batch, truth, args.eps);
  const bool pass = full.max_rel_error < args.tolerance;
  ok = ok && pass;
  std::printf("%-36s %11.3e  %s  (worst: %s)\n", "enc_dec_use/full-dice-loss",
              full.max_rel_error, pass ? "ok" : "FAIL", full.worst_param.c_str());
  return ok ? 0 : 1;
}

// --- postprocess -----------------------------------------------------------------

struct PostprocessArgs {
  std::string prob;
  std::string truth;
  std::string out;
  double threshold = 0.5;
};

int cmd_postprocess(const PostprocessArgs& args) {
  const Dataset truth = load_dataset(args.truth);
  if (truth.patients.empty()) throw std::runtime_error("truth dataset is empty");

  std::size_t written = 0;
  for (const auto& patient : truth.patients) {
    const fs::path in_dir = fs::path(args.prob) / ("patient_" + patient.id);
    const fs::path out_dir = fs::path(args.out) / ("patient_" + patient.id);
    for (std::size_t k = 0; k < patient.slices.size(); ++k) {
      const fs::path prob_path = in_dir / slice_file("prob", k);
      if (!fs::exists(prob_path)) continue;
      const Gray16Image img = read_png_gray16(prob_path);
      Tensor prob({img.rows, img.cols});
      for (std::size_t i = 0; i < prob.size(); ++i) {
        prob[i] = static_cast<double>(img.pixels[i]) / 65535.0;
      }
      const SliceRecord view = to_canvas(patient.slices[k], img.rows, img.cols);
      const BinaryMask cg = postprocess_cg(prob, view.wg, args.threshold);
      fs::create_directories(out_dir);
      write_zonal_mask_png(out_dir / slice_file("mask", k), view.wg, cg);
      ++written;
    }
  }
  std::cout << "post-processed " << written << " probability maps into " << args.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-zone segmentation workbench: encoder-decoder networks with "
               "channel recalibration, phantom data, a cross-dataset experiment "
               "matrix and nonparametric comparisons"};
  app.require_subcommand(1);

  GeneratePhantomArgs gen;
  auto* cmd_gen = app.add_subcommand("generate-phantom",
                                     "Generate the three synthetic institution datasets");
  cmd_gen->add_option("--out", gen.out, "Output directory")->required();
  cmd_gen->add_option("--seed", gen.seed, "Master seed");
  cmd_gen->add_option("--patients", gen.patients, "Patients per dataset");
  cmd_gen->add_option("--slices", gen.slices, "Slices per patient");
  cmd_gen->add_option("--canvas", gen.canvas, "Canvas size in pixels");

  TrainArgs tr;
  auto* cmd_tr = app.add_subcommand("train", "Train one model on one or more datasets");
  cmd_tr->add_option("--data", tr.data, "Dataset root (repeatable)")->required();
  cmd_tr->add_option("--out", tr.out, "Run directory")->required();
  cmd_tr->add_option("--config", tr.config_path, "Training config JSON");
  cmd_tr->add_option("--variant", tr.variant, "unet | enc_use | enc_dec_use");
  cmd_tr->add_option("--depth", tr.depth, "Scaling operations");
  cmd_tr->add_option("--width", tr.width, "Base channel width");
  cmd_tr->add_option("--se-reduction", tr.se_reduction, "SE bottleneck divisor");
  cmd_tr->add_option("--seed", tr.seed, "Seed override");
  cmd_tr->add_option("--epochs", tr.epochs,
                     "Epoch override (drops decay epochs beyond the new range)");
  cmd_tr->add_option("--crop", tr.crop, "Network input size override");

  EvaluateArgs ev;
  auto* cmd_ev = app.add_subcommand("evaluate",
                                    "Score predictions (or a checkpoint) against truth masks");
  cmd_ev->add_option("--pred", ev.pred, "Prediction mask directory");
  cmd_ev->add_option("--truth", ev.truth, "Truth dataset root")->required();
  cmd_ev->add_option("--model", ev.model_path, "Checkpoint to evaluate instead of --pred");
  cmd_ev->add_option("--out", ev.out_csv, "Write CSV here instead of stdout");
  cmd_ev->add_option("--save-pred", ev.save_pred, "Save predicted zonal masks");
  cmd_ev->add_option("--save-prob", ev.save_prob, "Save raw probability maps");
  cmd_ev->add_option("--crop", ev.crop, "Network input size (model mode)");

  MatrixArgs mx;
  auto* cmd_mx = app.add_subcommand("matrix", "Run the 21-condition train/test matrix");
  cmd_mx->add_option("--config", mx.config_path, "Matrix config JSON");
  cmd_mx->add_option("--workers", mx.workers, "Concurrent condition jobs");
  cmd_mx->add_option("--out", mx.out_override, "Override the configured out_dir");
  cmd_mx->add_option("--write-default-config", mx.write_default,
                     "Write a default config and exit");

  StatsArgs st;
  auto* cmd_st = app.add_subcommand("stats",
                                    "Friedman + Bonferroni-Dunn over a completed matrix");
  cmd_st->add_option("--results", st.results_dir, "Matrix output directory")->required();
  cmd_st->add_option("--region", st.region, "CG | PZ");
  cmd_st->add_option("--scope", st.scope, "all | union (three-dataset training only)");
  cmd_st->add_option("--control", st.control, "Control method for the post hoc test");
  cmd_st->add_option("--alpha", st.alpha, "Significance level (0.05 or 0.10)");
  cmd_st->add_flag("--f-refinement", st.f_refinement, "F-distribution p-value variant");
  cmd_st->add_option("--out", st.out_json, "Write the report JSON here");
  cmd_st->add_option("--svg", st.svg_path, "Write a critical-difference diagram");

  GradcheckArgs gc;
  auto* cmd_gc = app.add_subcommand("gradcheck",
                                    "Finite-difference checks for every layer and the loss");
  cmd_gc->add_option("--seed", gc.seed, "Seed");
  cmd_gc->add_option("--tolerance", gc.tolerance, "Max relative error allowed");
  cmd_gc->add_option("--eps", gc.eps, "Central difference step");

  PostprocessArgs pp;
  auto* cmd_pp = app.add_subcommand("postprocess",
                                    "Threshold and morphologically clean probability maps");
  cmd_pp->add_option("--prob", pp.prob, "Probability map directory")->required();
  cmd_pp->add_option("--truth", pp.truth, "Truth dataset root (supplies WG masks)")->required();
  cmd_pp->add_option("--out", pp.out, "Output mask directory")->required();
  cmd_pp->add_option("--threshold", pp.threshold, "Foreground threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_gen->parsed()) return cmd_generate_phantom(gen);
    if (cmd_tr->parsed()) return cmd_train(tr);
    if (cmd_ev->parsed()) return cmd_evaluate(ev);
    if (cmd_mx->parsed()) return cmd_matrix(mx);
    if (cmd_st->parsed()) return cmd_stats(st);
    if (cmd_gc->parsed()) return cmd_gradcheck(gc);
    if (cmd_pp->parsed()) return cmd_postprocess(pp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
