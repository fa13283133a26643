#pragma once

// Flat key = value configuration with dotted section keys, and the typed
// pipeline configuration built from it.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wsrad/common.hpp"
#include "wsrad/evaluation.hpp"
#include "wsrad/manifest.hpp"
#include "wsrad/models.hpp"
#include "wsrad/perturb.hpp"
#include "wsrad/scattering.hpp"

namespace wsrad {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char delim = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(delim, start), s.size());
    auto item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    start = end + 1;
  }
  return out;
}

}  // namespace detail

class Config {
 public:
  static Config parse(std::istream& in, std::filesystem::path base_dir = {}) {
    Config c;
    c.base_dir_ = std::move(base_dir);
    std::string line;
    std::string section;
    for (int line_no = 1; std::getline(in, line); ++line_no) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto text = detail::trim(line);
      if (text.empty()) continue;
      if (text.front() == '[') {
        if (text.back() != ']') throw FormatError("config line " + std::to_string(line_no) + ": unterminated section");
        section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
      auto key = detail::trim(std::string_view(text).substr(0, eq));
      if (key.empty()) throw FormatError("config line " + std::to_string(line_no) + ": empty key");
      if (!section.empty()) key = section + "." + key;
      if (c.values_.count(key)) throw FormatError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      c.values_[key] = detail::trim(std::string_view(text).substr(eq + 1));
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    return parse(in, path.parent_path());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  template <class T>
  T number(const std::string& key, T fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    T v{};
    const auto& s = it->second;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
      throw FormatError("config: key '" + key + "' has non-numeric value '" + s + "'");
    return v;
  }

  bool flag(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw FormatError("config: key '" + key + "' expects true/false, got '" + it->second + "'");
  }

  std::filesystem::path path(const std::string& key) const {
    std::filesystem::path p(str(key, ""));
    return p.empty() || p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
  }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

enum class FeatureFamily { WS, Classic };

inline std::string_view to_string(FeatureFamily f) { return f == FeatureFamily::WS ? "ws" : "classic"; }

inline FeatureFamily parse_family(std::string_view s) {
  if (s == "ws") return FeatureFamily::WS;
  if (s == "classic") return FeatureFamily::Classic;
  throw FormatError("unknown feature family '" + std::string(s) + "' (expected ws or classic)");
}

enum class RegionMode { Intra, IntraPeri };

inline std::string_view to_string(RegionMode m) { return m == RegionMode::Intra ? "intra" : "intra+peri"; }

inline RegionMode parse_region_mode(std::string_view s) {
  if (s == "intra") return RegionMode::Intra;
  if (s == "intra+peri") return RegionMode::IntraPeri;
  throw FormatError("unknown region mode '" + std::string(s) + "' (expected intra or intra+peri)");
}

inline PerturbationKind parse_perturbation(std::string_view s) {
  for (auto k : {PerturbationKind::Identity, PerturbationKind::RotateBlock, PerturbationKind::SwapBlocks,
                 PerturbationKind::RayleighNoise})
    if (to_string(k) == s) return k;
  throw FormatError("unknown perturbation '" + std::string(s) + "'");
}

struct InvarianceSettings {
  std::string mode = "synthetic";  // synthetic | manifest
  int textures = 5;
  std::size_t size = 128;
  double radius = 45.0;
  InvarianceConfig experiment;
  std::vector<PerturbationKind> perturbations{PerturbationKind::RotateBlock, PerturbationKind::SwapBlocks,
                                              PerturbationKind::RayleighNoise};
};

struct PipelineConfig {
  std::filesystem::path manifest;
  std::vector<std::string> modalities;
  std::vector<FeatureFamily> extract_families{FeatureFamily::WS, FeatureFamily::Classic};
  ScatteringConfig scattering;
  int n_bins = 32;

  std::vector<FeatureFamily> families;
  std::vector<RegionMode> region_modes{RegionMode::Intra};
  std::vector<std::vector<std::string>> modality_sets;
  std::vector<ClassifierKind> classifiers{ClassifierKind::LR, ClassifierKind::SVM, ClassifierKind::RF};
  int pls_components = 50;
  ClassifierConfig classifier;
  double test_fraction = 0.2;
  int repeats = 1;
  double probability_threshold = 0.5;
  double margin_threshold = 0.0;

  bool consensus_enabled = true;
  ConsensusConfig consensus;

  InvarianceSettings invariance;

  std::uint64_t seed = 0;
  std::filesystem::path output;
  std::filesystem::path cache_dir;
  bool cache_enabled = true;
  unsigned threads = 1;

  // Result-determining keys, echoed into reports (paths to outputs excluded).
  std::map<std::string, std::string> echo;

  bool needs_peri() const {
    return std::find(region_modes.begin(), region_modes.end(), RegionMode::IntraPeri) != region_modes.end();
  }

  bool extracts(FeatureFamily f) const {
    return std::find(extract_families.begin(), extract_families.end(), f) != extract_families.end();
  }

  double threshold_for(ClassifierKind k) const {
    return k == ClassifierKind::SVM ? margin_threshold : probability_threshold;
  }

  /// Canonical text of everything that determines the features file.
  std::string feature_section() const {
    std::ostringstream s;
    s << "modalities=";
    for (const auto& m : modalities) s << m << ',';
    s << "\nfamilies=";
    for (auto f : extract_families) s << to_string(f) << ',';
    s << "\nperi=" << needs_peri();
    s.precision(17);
    const auto& fb = scattering.filters;
    s << "\nJ=" << fb.J << "\nL=" << fb.L << "\nM=" << scattering.M << "\nsigma0=" << fb.sigma0 << "\nxi0=" << fb.xi0
      << "\nslant=" << fb.effective_slant() << "\nepsilon=" << scattering.epsilon << "\nn_bins=" << n_bins << '\n';
    return s.str();
  }

  static PipelineConfig from(const Config& c);
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "seed", "manifest", "output", "threads", "modalities", "features.family",
      "scattering.J", "scattering.L", "scattering.M", "scattering.sigma0", "scattering.xi0", "scattering.slant",
      "scattering.epsilon", "classic.n_bins", "pls.components", "run.families", "run.region_modes",
      "run.modality_sets", "run.classifiers", "run.test_fraction", "run.repeats", "threshold.probability",
      "threshold.margin", "lr.lambda", "lr.tol", "lr.max_iter", "svm.C", "svm.tol", "svm.max_iter", "rf.n_trees",
      "rf.min_leaf", "consensus.enabled", "consensus.k", "consensus.resamples", "consensus.sample_fraction",
      "consensus.restarts", "invariance.mode", "invariance.textures", "invariance.size", "invariance.radius",
      "invariance.block", "invariance.noise_fraction", "invariance.perturbations", "cache.enabled", "cache.dir"};
  return keys;
}

inline PipelineConfig PipelineConfig::from(const Config& c) {
  for (const auto& [k, v] : c.values())
    if (!known_config_keys().count(k)) throw FormatError("config: unknown key '" + k + "'");
  if (!c.has("seed")) throw FormatError("config: 'seed' is required");

  PipelineConfig p;
  p.seed = c.number<std::uint64_t>("seed", 0);
  p.manifest = c.path("manifest");
  p.output = c.path("output");
  p.threads = c.number<unsigned>("threads", 1);
  p.modalities = detail::split_list(c.str("modalities", "T1,T1-CE,T2,FLAIR"));
  if (p.modalities.empty()) throw FormatError("config: 'modalities' is empty");
  for (const auto& m : p.modalities)
    if (!default_modalities().count(m)) throw FormatError("config: unknown modality '" + m + "'");

  const auto family = c.str("features.family", "both");
  if (family == "both") p.extract_families = {FeatureFamily::WS, FeatureFamily::Classic};
  else p.extract_families = {parse_family(family)};

  auto& fb = p.scattering.filters;
  fb.J = c.number("scattering.J", fb.J);
  fb.L = c.number("scattering.L", fb.L);
  p.scattering.M = c.number("scattering.M", p.scattering.M);
  fb.sigma0 = c.number("scattering.sigma0", fb.sigma0);
  fb.xi0 = c.number("scattering.xi0", fb.xi0);
  if (c.has("scattering.slant")) fb.slant = c.number("scattering.slant", 0.0);
  p.scattering.epsilon = c.number("scattering.epsilon", p.scattering.epsilon);
  p.scattering.validate();
  p.n_bins = c.number("classic.n_bins", p.n_bins);
  if (p.n_bins < 2) throw FormatError("config: classic.n_bins must be >= 2");

  p.families.clear();
  for (const auto& f : detail::split_list(c.str("run.families", "")) ) p.families.push_back(parse_family(f));
  if (p.families.empty()) p.families = p.extract_families;
  for (auto f : p.families)
    if (!p.extracts(f)) throw FormatError("config: run family '" + std::string(to_string(f)) + "' is not extracted");

  if (c.has("run.region_modes")) {
    p.region_modes.clear();
    for (const auto& m : detail::split_list(c.str("run.region_modes", ""))) p.region_modes.push_back(parse_region_mode(m));
    if (p.region_modes.empty()) throw FormatError("config: run.region_modes is empty");
  }

  if (c.has("run.modality_sets")) {
    for (const auto& set : detail::split_list(c.str("run.modality_sets", ""))) {
      auto members = detail::split_list(set, '+');
      for (const auto& m : members)
        if (std::find(p.modalities.begin(), p.modalities.end(), m) == p.modalities.end())
          throw FormatError("config: modality set '" + set + "' uses unextracted modality '" + m + "'");
      p.modality_sets.push_back(std::move(members));
    }
  } else {
    for (const auto& m : p.modalities) p.modality_sets.push_back({m});
    if (p.modalities.size() > 1) p.modality_sets.push_back(p.modalities);
  }
  if (p.modality_sets.empty()) throw FormatError("config: run.modality_sets is empty");

  if (c.has("run.classifiers")) {
    p.classifiers.clear();
    for (const auto& k : detail::split_list(c.str("run.classifiers", ""))) p.classifiers.push_back(parse_classifier(k));
    if (p.classifiers.empty()) throw FormatError("config: run.classifiers is empty");
  }
  p.pls_components = c.number("pls.components", p.pls_components);
  if (p.pls_components < 1) throw FormatError("config: pls.components must be >= 1");
  p.test_fraction = c.number("run.test_fraction", p.test_fraction);
  if (!(p.test_fraction > 0 && p.test_fraction < 1)) throw FormatError("config: run.test_fraction must be in (0, 1)");
  p.repeats = c.number("run.repeats", p.repeats);
  if (p.repeats < 1) throw FormatError("config: run.repeats must be >= 1");
  p.probability_threshold = c.number("threshold.probability", p.probability_threshold);
  p.margin_threshold = c.number("threshold.margin", p.margin_threshold);

  auto& clf = p.classifier;
  clf.lr.lambda = c.number("lr.lambda", clf.lr.lambda);
  clf.lr.tol = c.number("lr.tol", clf.lr.tol);
  clf.lr.max_iter = c.number("lr.max_iter", clf.lr.max_iter);
  clf.svm.C = c.number("svm.C", clf.svm.C);
  clf.svm.tol = c.number("svm.tol", clf.svm.tol);
  clf.svm.max_iter = c.number("svm.max_iter", clf.svm.max_iter);
  clf.rf.n_trees = c.number("rf.n_trees", clf.rf.n_trees);
  clf.rf.min_leaf = c.number("rf.min_leaf", clf.rf.min_leaf);

  p.consensus_enabled = c.flag("consensus.enabled", true);
  p.consensus.k = c.number("consensus.k", p.consensus.k);
  p.consensus.n_resamples = c.number("consensus.resamples", p.consensus.n_resamples);
  p.consensus.sample_fraction = c.number("consensus.sample_fraction", p.consensus.sample_fraction);
  p.consensus.restarts = c.number("consensus.restarts", p.consensus.restarts);

  auto& inv = p.invariance;
  inv.mode = c.str("invariance.mode", inv.mode);
  if (inv.mode != "synthetic" && inv.mode != "manifest")
    throw FormatError("config: invariance.mode must be synthetic or manifest");
  inv.textures = c.number("invariance.textures", inv.textures);
  inv.size = c.number("invariance.size", inv.size);
  inv.radius = c.number("invariance.radius", inv.radius);
  inv.experiment.block = c.number("invariance.block", inv.experiment.block);
  inv.experiment.noise_fraction = c.number("invariance.noise_fraction", inv.experiment.noise_fraction);
  inv.experiment.scattering = p.scattering;
  inv.experiment.n_bins = p.n_bins;
  if (c.has("invariance.perturbations")) {
    inv.perturbations.clear();
    for (const auto& s : detail::split_list(c.str("invariance.perturbations", "")))
      inv.perturbations.push_back(parse_perturbation(s));
  }

  p.cache_enabled = c.flag("cache.enabled", true);
  p.cache_dir = c.has("cache.dir") ? c.path("cache.dir") : std::filesystem::path{};

  for (const auto& [k, v] : c.values())
    if (k != "output" && k != "threads" && k != "cache.dir" && k != "cache.enabled") p.echo[k] = v;
  p.echo["seed"] = std::to_string(p.seed);
  return p;
}

}  // namespace wsrad
