#pragma once

// Seeded synthetic cohort: labelled tumor volumes in two modalities whose
// intratumoral texture scale depends on grade, written as NIfTI files plus a
// manifest and a ready-to-run config.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/image.hpp"
#include "wsrad/nifti.hpp"
#include "wsrad/synthetic.hpp"

namespace wsrad::synthetic {

struct CohortSpec {
  int n = 120;
  double hgg_fraction = 0.75;
  std::size_t size = 40;
  std::size_t slices = 3;
  std::uint64_t seed = 1;
  double hgg_scale = 0.7;  // blur sigma of the HGG core texture
  double lgg_scale = 1.8;
  double jitter = 0.15;    // relative per-patient spread of scale, amplitude and gain
};

struct CohortFiles {
  std::filesystem::path manifest;
  std::filesystem::path config;
  int n_hgg = 0;
  int n_lgg = 0;
};

namespace detail {

inline Image scaled_noise(std::size_t rows, std::size_t cols, double sigma, double rms, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Image w(rows, cols);
  for (auto& v : w.values()) v = g(rng);
  Image b = blur(w, sigma);
  double ss = 0;
  for (double v : b.values()) ss += v * v;
  const double k = rms / std::sqrt(ss / static_cast<double>(b.size()));
  for (auto& v : b.values()) v *= k;
  return b;
}

}  // namespace detail

/// Label volume: enhancing rim (4) around a necrotic core (1), edema ring (2).
inline LabelVolume cohort_labels(const CohortSpec& spec, double radius, double cx, double cy) {
  LabelVolume lv({spec.size, spec.size, spec.slices});
  for (std::size_t z = 0; z < spec.slices; ++z) {
    const double mid = (static_cast<double>(spec.slices) - 1) / 2;
    const double r = radius * (1.0 - 0.15 * std::fabs(static_cast<double>(z) - mid));
    for (std::size_t y = 0; y < spec.size; ++y)
      for (std::size_t x = 0; x < spec.size; ++x) {
        const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
        lv(x, y, z) = d <= r - 2.5 ? 1 : d <= r ? 4 : d <= r + 5 ? 2 : 0;
      }
  }
  return lv;
}

inline CohortFiles write_cohort(const std::filesystem::path& dir, const CohortSpec& spec = {}) {
  if (spec.n < 4) throw InvalidArgument("cohort: n must be >= 4");
  if (spec.size < 32) throw InvalidArgument("cohort: size must be >= 32");
  std::filesystem::create_directories(dir / "images");
  CohortFiles files;
  files.manifest = dir / "manifest.tsv";
  files.config = dir / "cohort.conf";
  std::ofstream man(files.manifest);
  if (!man) throw IoError("cannot write '" + files.manifest.string() + "'");
  man << "patient_id\tgrade\tmodality\timage_path\tmask_path\n";

  const int n_hgg = static_cast<int>(std::lround(spec.n * spec.hgg_fraction));
  for (int i = 0; i < spec.n; ++i) {
    // Grades interleaved so any prefix of the cohort keeps roughly the target ratio.
    const bool hgg = static_cast<long>(i) * n_hgg / spec.n != static_cast<long>(i + 1) * n_hgg / spec.n;
    (hgg ? files.n_hgg : files.n_lgg)++;
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto jitter = [&] { return 1.0 + spec.jitter * u(rng); };

    const double centre = (static_cast<double>(spec.size) - 1) / 2;
    const double radius = 9.0 + 1.5 * u(rng);
    const auto labels = cohort_labels(spec, radius, centre + 2 * u(rng), centre + 2 * u(rng));
    const double core_scale = (hgg ? spec.hgg_scale : spec.lgg_scale) * jitter();
    const double core_rms = 60.0 * jitter(), gain1 = jitter(), gain2 = jitter();

    Volume t1({spec.size, spec.size, spec.slices}), t2({spec.size, spec.size, spec.slices});
    for (std::size_t z = 0; z < spec.slices; ++z) {
      const auto background = detail::scaled_noise(spec.size, spec.size, 3.0, 20.0, rng);
      const auto edema = detail::scaled_noise(spec.size, spec.size, 1.2, 40.0, rng);
      const auto core = detail::scaled_noise(spec.size, spec.size, core_scale, core_rms, rng);
      const auto speckle = detail::scaled_noise(spec.size, spec.size, 0.5, 8.0, rng);
      for (std::size_t y = 0; y < spec.size; ++y)
        for (std::size_t x = 0; x < spec.size; ++x) {
          const auto lab = labels(x, y, z);
          const double field = lab == 1 || lab == 4 ? core(y, x) : lab == 2 ? edema(y, x) : background(y, x);
          const double base = lab == 4 ? 520.0 : lab == 1 ? 480.0 : lab == 2 ? 420.0 : 300.0;
          t1(x, y, z) = gain1 * (base + field);
          t2(x, y, z) = gain2 * (1000.0 - base - 0.8 * field) + speckle(y, x);
        }
    }
    char id[16];
    std::snprintf(id, sizeof id, "SYN%03d", i);
    const std::string pid(id);
    nifti::write_labels(labels, dir / "images" / (pid + "_seg.nii"));
    nifti::write_volume(t1, dir / "images" / (pid + "_t1.nii"));
    nifti::write_volume(t2, dir / "images" / (pid + "_t2.nii"));
    const std::string grade(to_string(hgg ? Grade::HGG : Grade::LGG));
    man << pid << '\t' << grade << "\tT1\timages/" << pid << "_t1.nii\timages/" << pid << "_seg.nii\n";
    man << pid << '\t' << grade << "\tT2\timages/" << pid << "_t2.nii\timages/" << pid << "_seg.nii\n";
  }

  std::ofstream conf(files.config);
  if (!conf) throw IoError("cannot write '" + files.config.string() + "'");
  conf << "seed = " << spec.seed << "\n"
       << "manifest = manifest.tsv\n"
       << "modalities = T1, T2\n"
       << "run.region_modes = intra, intra+peri\n"
       << "consensus.resamples = 50\n";
  return files;
}

}  // namespace wsrad::synthetic
