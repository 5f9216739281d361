#include "snn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "snn/data.hpp"
#include "snn/rng.hpp"
#include "snn/tensor.hpp"

namespace fs = std::filesystem;

namespace snn {

namespace {

struct SpeciesTemplate {
  double hue;        // [0,1) circular
  int rings;         // 2..6
  double width;      // band duty cycle, 0.30..0.70
  double aspect;     // body minor/major axis ratio, 0.55..0.95
};

// Weighted distance in template space; hue is circular and dominates.
double template_distance(const SpeciesTemplate& a, const SpeciesTemplate& b) {
  double dh = std::fabs(a.hue - b.hue);
  dh = std::min(dh, 1.0 - dh);
  return 3.0 * dh + 0.5 * std::abs(a.rings - b.rings) +
         1.5 * std::fabs(a.width - b.width) + 1.5 * std::fabs(a.aspect - b.aspect);
}

constexpr double kSeparationFloor = 0.5;
constexpr int kMaxDrawsPerSpecies = 10000;

SpeciesTemplate draw_template(Rng& rng) {
  SpeciesTemplate t;
  t.hue = rng.next_double();
  t.rings = 2 + static_cast<int>(rng.next_below(5));
  t.width = rng.uniform(0.30, 0.70);
  t.aspect = rng.uniform(0.55, 0.95);
  return t;
}

void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  rgb[0] = static_cast<float>(r + m);
  rgb[1] = static_cast<float>(g + m);
  rgb[2] = static_cast<float>(b + m);
}

Tensor render_sample(const SpeciesTemplate& sp, uint32_t res, Rng& rng) {
  const double side = static_cast<double>(res);
  const double cx = side / 2.0 + rng.uniform(-0.04, 0.04) * side;
  const double cy = side / 2.0 + rng.uniform(-0.04, 0.04) * side;
  const double a = 0.40 * side * (1.0 + rng.uniform(-0.06, 0.06));
  const double b = a * sp.aspect;
  const double phase = rng.uniform(-0.06, 0.06);
  const double hue = sp.hue + rng.uniform(-0.015, 0.015);
  const double bg_shift = rng.uniform(-0.03, 0.03);

  float band[3], dark[3];
  hsv_to_rgb(hue, 0.85, 0.95, band);
  dark[0] = 0.10f; dark[1] = 0.09f; dark[2] = 0.08f;
  const float bg[3] = {static_cast<float>(0.88 + bg_shift),
                       static_cast<float>(0.87 + bg_shift),
                       static_cast<float>(0.84 + bg_shift)};

  Tensor img({res, res, 3});
  float* px = img.data();
  for (uint32_t r = 0; r < res; ++r) {
    for (uint32_t c = 0; c < res; ++c) {
      const double dx = (c + 0.5 - cx) / a;
      const double dy = (r + 0.5 - cy) / b;
      const double rn = std::sqrt(dx * dx + dy * dy);
      const float* color = bg;
      if (rn <= 1.0) {
        const double t = rn * sp.rings + phase;
        color = (t - std::floor(t)) < sp.width ? band : dark;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const float noisy =
            color[ch] + static_cast<float>(rng.uniform(-0.03, 0.03));
        px[ch] = noisy < 0.0f ? 0.0f : (noisy > 1.0f ? 1.0f : noisy);
      }
      px += 3;
    }
  }
  return img;
}

std::string species_name(bool holdout, uint32_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%02u",
                holdout ? kSynthUnseenPrefix : kSynthSeenPrefix, index);
  return buf;
}

}  // namespace

SynthResult synth_generate(const SynthParams& params) {
  if (params.n_seen < 1 || params.n_unseen < 1 || params.samples_per_species < 1)
    throw std::runtime_error("synth: species and sample counts must be >= 1");
  if (params.resolution < 16)
    throw std::runtime_error("synth: resolution must be >= 16, got " +
                             std::to_string(params.resolution));
  if (params.out_dir.empty()) throw std::runtime_error("synth: output directory not set");

  const uint32_t n_species = params.n_seen + params.n_unseen;

  // Choose all species templates first so an unsatisfiable request fails
  // before any file is written.
  Rng template_rng(derive_seed(params.seed, "synth:species"));
  std::vector<SpeciesTemplate> templates;
  templates.reserve(n_species);
  for (uint32_t i = 0; i < n_species; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxDrawsPerSpecies; ++attempt) {
      SpeciesTemplate cand = draw_template(template_rng);
      bool ok = true;
      for (const auto& prev : templates)
        if (template_distance(cand, prev) < kSeparationFloor) {
          ok = false;
          break;
        }
      if (ok) {
        templates.push_back(cand);
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::runtime_error(
          "synth: parameter space exhausted after " + std::to_string(i) +
          " species (separation floor " + std::to_string(kSeparationFloor) + ")");
  }

  const fs::path out_dir(params.out_dir);
  const fs::path img_dir = out_dir / "images";
  fs::create_directories(img_dir);

  std::string manifest = "id,species,path\n";
  uint64_t n_samples = 0;
  for (uint32_t s = 0; s < n_species; ++s) {
    const bool holdout = s >= params.n_seen;
    const std::string name = species_name(holdout, holdout ? s - params.n_seen : s);
    for (uint32_t k = 0; k < params.samples_per_species; ++k) {
      Rng sample_rng(derive_seed(params.seed, "synth:sample", {s, k}));
      const Tensor img = render_sample(templates[s], params.resolution, sample_rng);
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%04u", name.c_str(), k);
      const std::string rel = "images/" + std::string(id) + ".png";
      encode_png((out_dir / rel).string(), img);
      manifest += std::string(id) + "," + name + "," + rel + "\n";
      ++n_samples;
    }
  }

  SynthResult result;
  result.manifest_path = (out_dir / "manifest.csv").string();
  result.n_species = n_species;
  result.n_samples = n_samples;
  {
    std::ofstream out(result.manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + result.manifest_path);
    out << manifest;
    if (!out) throw std::runtime_error("write failed: " + result.manifest_path);
  }
  return result;
}

}  // namespace snn
