#include "zonalseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

#include "zonalseg/png_io.hpp"
#include "zonalseg/rng.hpp"

namespace zonalseg {

using nlohmann::json;

void SliceRecord::validate() const {
  if (image.rank() != 2) {
    throw std::invalid_argument("SliceRecord: image must be (H,W), got " +
                                shape_str(image.shape()));
  }
  const std::size_t r = rows(), c = cols();
  if (wg.rows() != r || wg.cols() != c || cg.rows() != r || cg.cols() != c) {
    throw std::invalid_argument("SliceRecord: image and mask shapes differ on slice " +
                                std::to_string(index));
  }
  for (std::size_t i = 0; i < cg.size(); ++i) {
    if (cg[i] && !wg[i]) {
      throw std::invalid_argument(
          "SliceRecord: central-gland pixel outside the whole gland at (" +
          std::to_string(i / c) + "," + std::to_string(i % c) + ") on slice " +
          std::to_string(index));
    }
  }
}

namespace {

// Crop/pad one axis: returns (source offset, destination offset, copy length).
struct AxisFit {
  std::size_t src = 0, dst = 0, len = 0;
};

AxisFit fit_axis(std::size_t current, std::size_t target) {
  AxisFit f;
  if (current >= target) {
    f.src = (current - target) / 2;  // extra removed pixel trails
    f.len = target;
  } else {
    f.dst = (target - current) / 2;  // extra added pixel trails
    f.len = current;
  }
  return f;
}

}  // namespace

SliceRecord to_canvas(const SliceRecord& slice, std::size_t rows, std::size_t cols) {
  const AxisFit fr = fit_axis(slice.rows(), rows);
  const AxisFit fc = fit_axis(slice.cols(), cols);

  SliceRecord out;
  out.image = Tensor({rows, cols});
  out.wg = BinaryMask(rows, cols);
  out.cg = BinaryMask(rows, cols);
  out.pixel_spacing_mm = slice.pixel_spacing_mm;
  out.index = slice.index;

  const std::size_t sc = slice.cols();
  for (std::size_t r = 0; r < fr.len; ++r) {
    const std::size_t src_row = r + fr.src, dst_row = r + fr.dst;
    for (std::size_t c = 0; c < fc.len; ++c) {
      const std::size_t si = src_row * sc + (c + fc.src);
      const std::size_t di = dst_row * cols + (c + fc.dst);
      out.image[di] = slice.image[si];
      out.wg.cells()[di] = slice.wg.cells()[si];
      out.cg.cells()[di] = slice.cg.cells()[si];
    }
  }
  return out;
}

bool has_prostate(const SliceRecord& slice) { return !slice.wg.none(); }

SliceRecord mask_to_wg(const SliceRecord& slice) {
  if (!has_prostate(slice)) {
    throw std::invalid_argument("mask_to_wg: slice " + std::to_string(slice.index) +
                                " has an empty whole-gland mask");
  }
  SliceRecord out = slice;
  for (std::size_t i = 0; i < out.image.size(); ++i) {
    if (!out.wg[i]) out.image[i] = 0.0;
  }
  return out;
}

std::vector<PhantomProfile> default_phantom_profiles() {
  return {
      PhantomProfile{"phantom-A", 0.38, 0.72, 0.15, 0.020, 0.06, 0.625},
      PhantomProfile{"phantom-B", 0.26, 0.84, 0.25, 0.055, 0.14, 0.700},
      PhantomProfile{"phantom-C", 0.50, 0.61, 0.08, 0.030, 0.32, 0.500},
  };
}

namespace {

double snap16(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return std::round(c * 65535.0) / 65535.0;
}

BinaryMask rasterize_ellipse(std::size_t rows, std::size_t cols, double cy,
                             double cx, double ry, double rx) {
  BinaryMask m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double dy = (static_cast<double>(r) - cy) / ry;
    for (std::size_t c = 0; c < cols; ++c) {
      const double dx = (static_cast<double>(c) - cx) / rx;
      if (dy * dy + dx * dx <= 1.0) m.set(r, c, true);
    }
  }
  return m;
}

}  // namespace

Dataset generate_phantom_dataset(const DatasetDescriptor& d, std::uint64_t seed) {
  if (d.patients == 0 || d.slices_per_patient == 0) {
    throw std::invalid_argument("generate_phantom_dataset: patient and slice counts must be positive");
  }
  if (d.canvas < 24) {
    throw std::invalid_argument("generate_phantom_dataset: canvas " +
                                std::to_string(d.canvas) + " too small for plausible anatomy");
  }
  const double C = static_cast<double>(d.canvas);

  Dataset out;
  out.tag = d.tag;
  out.pixel_spacing_mm = d.profile.pixel_spacing_mm;
  Rng dataset_rng = Rng(seed).fork("dataset:" + d.tag);

  for (std::size_t p = 0; p < d.patients; ++p) {
    Rng rng = dataset_rng.fork("patient:" + std::to_string(p));

    // Patient-level anatomy.
    const double cy = C / 2.0 + rng.uniform(-0.04, 0.04) * C;
    const double cx = C / 2.0 + rng.uniform(-0.04, 0.04) * C;
    const double wg_ry = rng.uniform(0.18, 0.26) * C;
    const double wg_rx = rng.uniform(0.22, 0.30) * C;
    const double cg_fy = rng.uniform(0.40, 0.70);
    const double cg_fx = rng.uniform(0.40, 0.70);
    const double drift_y = rng.uniform(-0.03, 0.03) * C;
    const double drift_x = rng.uniform(-0.03, 0.03) * C;
    // Shading direction for the multiplicative bias field.
    const double bias_angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double bias_dy = std::sin(bias_angle), bias_dx = std::cos(bias_angle);

    PatientCase pc;
    pc.dataset_tag = d.tag;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%03zu", p + 1);
      pc.id = buf;
    }

    for (std::size_t t = 0; t < d.slices_per_patient; ++t) {
      const double u = (static_cast<double>(t) + 0.5) / static_cast<double>(d.slices_per_patient);
      // Gland waxes from apex to mid-gland and wanes toward the base.
      const double scale = 0.55 + 0.45 * std::sin(3.14159265358979323846 * u);
      const double wob = 1.0 + 0.05 * std::sin(2.0 * 3.14159265358979323846 * u);

      const double sy = cy + drift_y * (u - 0.5);
      const double sx = cx + drift_x * (u - 0.5);
      const double ry = wg_ry * scale, rx = wg_rx * scale;
      const double cg_ry = ry * cg_fy * wob, cg_rx = rx * cg_fx * wob;
      // Central gland sits anterior (toward the top rows), kept inside WG.
      const double cg_cy = sy - 0.4 * (ry - cg_ry);

      SliceRecord slice;
      slice.index = t;
      slice.pixel_spacing_mm = d.profile.pixel_spacing_mm;
      slice.wg = rasterize_ellipse(d.canvas, d.canvas, sy, sx, ry, rx);
      slice.cg = mask_and(rasterize_ellipse(d.canvas, d.canvas, cg_cy, sx, cg_ry, cg_rx),
                          slice.wg);
      if (slice.wg.none() || slice.cg.none()) {
        throw std::runtime_error("generate_phantom_dataset: degenerate anatomy at canvas " +
                                 std::to_string(d.canvas));
      }

      slice.image = Tensor({d.canvas, d.canvas});
      for (std::size_t r = 0; r < d.canvas; ++r) {
        for (std::size_t c = 0; c < d.canvas; ++c) {
          const std::size_t i = r * d.canvas + c;
          double v = d.profile.background_level;
          if (slice.cg[i]) v = d.profile.cg_level;
          else if (slice.wg[i]) v = d.profile.pz_level;
          const double along = ((static_cast<double>(r) - C / 2.0) * bias_dy +
                                (static_cast<double>(c) - C / 2.0) * bias_dx) / C;
          v *= 1.0 + d.profile.bias_field_strength * 2.0 * along;
          v += rng.normal(0.0, d.profile.noise_sigma);
          slice.image[i] = snap16(v);
        }
      }
      slice.validate();
      pc.slices.push_back(std::move(slice));
    }
    out.patients.push_back(std::move(pc));
  }
  return out;
}

std::vector<Dataset> generate_phantom_datasets(
    const std::vector<DatasetDescriptor>& descriptors, std::uint64_t seed) {
  std::vector<Dataset> out;
  out.reserve(descriptors.size());
  for (const auto& d : descriptors) out.push_back(generate_phantom_dataset(d, seed));
  return out;
}

std::vector<std::uint8_t> encode_zonal_labels(const BinaryMask& wg,
                                              const BinaryMask& cg) {
  if (!wg.same_shape(cg)) {
    throw std::invalid_argument("encode_zonal_labels: mask shapes differ");
  }
  std::vector<std::uint8_t> labels(wg.size(), 0);
  for (std::size_t i = 0; i < wg.size(); ++i) {
    if (cg[i]) labels[i] = 2;
    else if (wg[i]) labels[i] = 1;
  }
  return labels;
}

ZonalMasks decode_zonal_labels(const std::vector<std::uint8_t>& labels,
                               std::size_t rows, std::size_t cols) {
  if (labels.size() != rows * cols) {
    throw std::invalid_argument("decode_zonal_labels: label count mismatch");
  }
  ZonalMasks m{BinaryMask(rows, cols), BinaryMask(rows, cols)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 2) {
      throw std::invalid_argument("decode_zonal_labels: invalid label " +
                                  std::to_string(labels[i]) + " at (" +
                                  std::to_string(i / cols) + "," +
                                  std::to_string(i % cols) + ")");
    }
    if (labels[i] >= 1) m.wg.cells()[i] = 1;
    if (labels[i] == 2) m.cg.cells()[i] = 1;
  }
  return m;
}

namespace {

std::string slice_img_name(std::size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "slice_%03zu_img.png", k);
  return buf;
}

std::string slice_mask_name(std::size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "slice_%03zu_mask.png", k);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);

  json manifest;
  manifest["tag"] = dataset.tag;
  manifest["pixel_spacing_mm"] = dataset.pixel_spacing_mm;
  json patients = json::array();
  for (const auto& p : dataset.patients) {
    patients.push_back({{"id", p.id}, {"slices", p.slices.size()}});
  }
  manifest["patients"] = patients;

  for (const auto& p : dataset.patients) {
    const auto dir = root / ("patient_" + p.id);
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < p.slices.size(); ++k) {
      const SliceRecord& s = p.slices[k];
      Gray16Image img{s.rows(), s.cols(), {}};
      img.pixels.resize(s.image.size());
      for (std::size_t i = 0; i < s.image.size(); ++i) {
        img.pixels[i] = static_cast<std::uint16_t>(
            std::lround(std::clamp(s.image[i], 0.0, 1.0) * 65535.0));
      }
      write_png_gray16(dir / slice_img_name(k), img);

      Gray8Image mask{s.rows(), s.cols(), encode_zonal_labels(s.wg, s.cg)};
      write_png_gray8(dir / slice_mask_name(k), mask);
    }
  }

  std::ofstream out(root / "dataset.json");
  out << manifest.dump(2) << "\n";
  if (!out) {
    throw std::runtime_error("save_dataset: cannot write manifest under " + root.string());
  }
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset out;
  const auto manifest_path = root / "dataset.json";
  if (!std::filesystem::exists(manifest_path)) {
    std::cerr << "warning: no dataset manifest under " << root << ", returning empty dataset\n";
    return out;
  }
  std::ifstream in(manifest_path);
  json manifest = json::parse(in);
  out.tag = manifest.at("tag").get<std::string>();
  out.pixel_spacing_mm = manifest.at("pixel_spacing_mm").get<double>();

  for (const auto& entry : manifest.at("patients")) {
    PatientCase p;
    p.id = entry.at("id").get<std::string>();
    p.dataset_tag = out.tag;
    const std::size_t n_slices = entry.at("slices").get<std::size_t>();
    const auto dir = root / ("patient_" + p.id);
    for (std::size_t k = 0; k < n_slices; ++k) {
      const auto img_path = dir / slice_img_name(k);
      const auto mask_path = dir / slice_mask_name(k);
      if (!std::filesystem::exists(img_path) || !std::filesystem::exists(mask_path)) {
        throw std::runtime_error("load_dataset: missing file " +
                                 (std::filesystem::exists(img_path) ? mask_path : img_path).string());
      }
      const Gray16Image img = read_png_gray16(img_path);
      const Gray8Image mask = read_png_gray8(mask_path);
      if (img.rows != mask.rows || img.cols != mask.cols) {
        throw std::runtime_error("load_dataset: image and mask sizes differ for " +
                                 img_path.string());
      }
      SliceRecord s;
      s.index = k;
      s.pixel_spacing_mm = out.pixel_spacing_mm;
      s.image = Tensor({img.rows, img.cols});
      for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        s.image[i] = static_cast<double>(img.pixels[i]) / 65535.0;
      }
      ZonalMasks zm = decode_zonal_labels(mask.pixels, mask.rows, mask.cols);
      s.wg = std::move(zm.wg);
      s.cg = std::move(zm.cg);
      s.validate();
      p.slices.push_back(std::move(s));
    }
    out.patients.push_back(std::move(p));
  }
  std::sort(out.patients.begin(), out.patients.end(),
            [](const PatientCase& a, const PatientCase& b) { return a.id < b.id; });
  return out;
}

}  // namespace zonalseg
