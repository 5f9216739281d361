#pragma once

// Synthetic specimen corpus generator.
//
// Each species is a tuple (hue, ring count, ring width, body aspect) drawn
// under a minimum pairwise separation in a weighted parameter metric, so
// distinct species are visually distinct by construction. Samples jitter the
// species template (position, size, hue, ring phase, pixel noise) without
// crossing the separation floor. "Holdout" species — the ones meant to stay
// out of training — are named with a distinct prefix so a split can designate
// them verbatim.

#include <cstdint>
#include <string>

namespace snn {

inline constexpr const char* kSynthSeenPrefix = "sp";
inline constexpr const char* kSynthUnseenPrefix = "zs";

struct SynthParams {
  uint32_t n_seen = 12;               // species intended for training
  uint32_t n_unseen = 6;              // holdout species (named with kSynthUnseenPrefix)
  uint32_t samples_per_species = 200;
  uint32_t resolution = 64;           // square image side, >= 16
  uint64_t seed = 0;
  std::string out_dir;                // receives manifest.csv and images/
};

struct SynthResult {
  std::string manifest_path;
  uint32_t n_species = 0;
  uint64_t n_samples = 0;
};

// Generate the corpus. Throws if a parameter is out of range, if the species
// parameter space cannot hold the requested number of species at the
// separation floor, or on any I/O failure. Identical params + seed produce
// byte-identical files.
SynthResult synth_generate(const SynthParams& params);

}  // namespace snn
