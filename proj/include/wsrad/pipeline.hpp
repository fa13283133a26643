#pragma once

// End-to-end orchestration: feature extraction with an on-disk cache, the
// reduce/train/evaluate grid, the invariance experiment and report files.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wsrad/config.hpp"
#include "wsrad/evaluation.hpp"
#include "wsrad/manifest.hpp"
#include "wsrad/models.hpp"
#include "wsrad/nifti.hpp"
#include "wsrad/parallel.hpp"
#include "wsrad/perturb.hpp"
#include "wsrad/pls.hpp"
#include "wsrad/radiomics.hpp"
#include "wsrad/region.hpp"
#include "wsrad/scattering.hpp"
#include "wsrad/synthetic.hpp"

namespace wsrad {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Feature table

struct Exclusion {
  std::string patient_id;
  std::string reason;
};

/// One row per patient; columns named <modality>.<region>.<family>.<feature>.
struct FeatureTable {
  std::vector<std::string> patient_ids;
  std::vector<Grade> grades;
  std::vector<std::string> columns;
  Matrix values;
  std::vector<Exclusion> exclusions;

  std::size_t rows() const { return patient_ids.size(); }

  std::vector<int> labels() const {
    std::vector<int> y;
    for (auto g : grades) y.push_back(grade_to_label(g));
    return y;
  }

  std::vector<Eigen::Index> columns_with_prefix(const std::string& prefix) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].compare(0, prefix.size(), prefix) == 0) out.push_back(static_cast<Eigen::Index>(i));
    return out;
  }

  FeatureTable select_rows(const std::vector<std::size_t>& idx) const {
    FeatureTable t;
    t.columns = columns;
    t.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      t.patient_ids.push_back(patient_ids.at(idx[i]));
      t.grades.push_back(grades.at(idx[i]));
      t.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(idx[i]));
    }
    return t;
  }
};

inline void write_features(std::ostream& out, const FeatureTable& t) {
  out << "patient_id\tgrade";
  for (const auto& c : t.columns) out << '\t' << c;
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out << t.patient_ids[i] << '\t' << to_string(t.grades[i]);
    for (Eigen::Index j = 0; j < t.values.cols(); ++j)
      out << '\t' << format_double(t.values(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  for (const auto& e : t.exclusions) out << "#excluded\t" << e.patient_id << '\t' << e.reason << '\n';
}

inline FeatureTable read_features(std::istream& in) {
  FeatureTable t;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("features: empty file");
  auto header = detail::split_line(line, '\t');
  if (header.size() < 2 || header[0] != "patient_id" || header[1] != "grade")
    throw FormatError("features: header must start with patient_id, grade");
  t.columns.assign(header.begin() + 2, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_line(line, '\t');
    if (cells[0] == "#excluded") {
      if (cells.size() < 3) throw FormatError("features: malformed exclusion line");
      t.exclusions.push_back({cells[1], cells[2]});
      continue;
    }
    if (cells.size() != header.size()) throw FormatError("features: row for '" + cells[0] + "' has wrong width");
    t.patient_ids.push_back(cells[0]);
    t.grades.push_back(parse_grade(cells[1]));
    std::vector<double> r;
    for (std::size_t j = 2; j < cells.size(); ++j) r.push_back(parse_double(cells[j]));
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Extraction

namespace detail {

struct PatientFeatures {
  FeatureVector features;
  std::string exclusion;
};

inline PatientFeatures extract_patient(const ManifestEntry& e, const PipelineConfig& cfg, FilterBankCache& cache) {
  PatientFeatures out;
  for (const auto& m : cfg.modalities)
    if (!e.images.count(m)) {
      out.exclusion = "missing modality " + m;
      return out;
    }
  const auto labels = nifti::read_labels(e.mask_path);
  std::vector<RegionSpec> regions{RegionSpec::intratumoral()};
  if (cfg.needs_peri()) regions.push_back(RegionSpec::peritumoral());
  for (const auto& m : cfg.modalities) {
    const auto vol = nifti::read_volume(e.images.at(m));
    if (vol.dims() != labels.dims()) {
      out.exclusion = "modality " + m + " dims differ from the mask";
      return out;
    }
    for (const auto& spec : regions) {
      MaskedRegion region;
      try {
        region = extract_region(vol, labels, spec);
      } catch (const EmptyRegionError&) {
        out.exclusion = "no " + std::string(to_string(spec.kind)) + " voxels";
        return out;
      }
      const std::string prefix = m + "." + std::string(to_string(spec.kind)) + ".";
      if (cfg.extracts(FeatureFamily::WS)) out.features.append(scattering_features(region, cfg.scattering, cache), prefix + "ws.");
      if (cfg.extracts(FeatureFamily::Classic)) out.features.append(classic_feature_vector(region, cfg.n_bins), prefix + "classic.");
    }
  }
  if (!out.features.all_finite()) out.exclusion = "non-finite feature value";
  return out;
}

}  // namespace detail

inline FeatureTable extract_features(const DatasetManifest& manifest, const PipelineConfig& cfg) {
  std::vector<detail::PatientFeatures> per(manifest.entries.size());
  parallel_for(per.size(), cfg.threads, [&](std::size_t i) {
    thread_local FilterBankCache cache;
    per[i] = detail::extract_patient(manifest.entries[i], cfg, cache);
  });
  FeatureTable t;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < per.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (!per[i].exclusion.empty()) {
      t.exclusions.push_back({e.patient_id, per[i].exclusion});
      continue;
    }
    if (kept.empty()) t.columns = per[i].features.names;
    else if (per[i].features.names != t.columns)
      throw FormatError("features: column layout differs for patient '" + e.patient_id + "'");
    kept.push_back(i);
  }
  if (kept.empty()) throw InvalidArgument("extract: empty cohort after exclusions");
  t.values.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto& e = manifest.entries[kept[r]];
    t.patient_ids.push_back(e.patient_id);
    t.grades.push_back(e.grade);
    const auto& v = per[kept[r]].features.values;
    for (std::size_t j = 0; j < v.size(); ++j) t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v[j];
  }
  return t;
}

/// Digest of the feature-determining config and the manifest (bytes plus
/// referenced file sizes).
inline std::string feature_cache_key(const PipelineConfig& cfg, const DatasetManifest& manifest) {
  auto size_of = [](const fs::path& p) {
    std::error_code ec;
    const auto n = fs::file_size(p, ec);
    if (ec) throw IoError("cannot read '" + p.string() + "': " + ec.message());
    return std::to_string(n);
  };
  std::uint64_t h = fnv1a(cfg.feature_section());
  h = fnv1a(read_text_file(cfg.manifest), h);
  for (const auto& e : manifest.entries) {
    h = fnv1a(size_of(e.mask_path), h);
    for (const auto& [m, p] : e.images) h = fnv1a(m + size_of(p), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline fs::path cache_directory(const PipelineConfig& cfg) {
  return cfg.cache_dir.empty() ? cfg.output / "cache" : cfg.cache_dir;
}

struct LoadedFeatures {
  FeatureTable table;
  bool from_cache = false;
  fs::path cache_file;
};

inline LoadedFeatures load_or_extract(const PipelineConfig& cfg) {
  const auto manifest = load_manifest(cfg.manifest);
  LoadedFeatures lf;
  if (cfg.cache_enabled) {
    lf.cache_file = cache_directory(cfg) / ("features-" + feature_cache_key(cfg, manifest) + ".tsv");
    if (fs::exists(lf.cache_file)) {
      std::ifstream in(lf.cache_file);
      lf.table = read_features(in);
      lf.from_cache = true;
      return lf;
    }
  }
  lf.table = extract_features(manifest, cfg);
  if (cfg.cache_enabled) {
    std::ostringstream s;
    write_features(s, lf.table);
    write_text_file(lf.cache_file, s.str());
  }
  return lf;
}

inline FeatureTable cmd_extract(const PipelineConfig& cfg) {
  auto lf = load_or_extract(cfg);
  std::ostringstream s;
  write_features(s, lf.table);
  write_text_file(cfg.output / "features.tsv", s.str());
  return lf.table;
}

// ---------------------------------------------------------------------------
// Conditions

struct Condition {
  FeatureFamily family = FeatureFamily::WS;
  RegionMode region = RegionMode::Intra;
  std::vector<std::string> modalities;
  ClassifierKind classifier = ClassifierKind::LR;

  std::string modality_label() const {
    std::string s;
    for (const auto& m : modalities) s += (s.empty() ? "" : "+") + m;
    return s;
  }
  std::string group() const {
    return std::string(to_string(family)) + "/" + std::string(to_string(region)) + "/" + modality_label();
  }
  std::string name() const { return group() + "/" + std::string(to_string(classifier)); }
  std::string file_stem() const {
    auto s = name();
    for (auto& ch : s)
      if (ch == '/') ch = '_';
    return s;
  }
};

inline std::vector<Condition> enumerate_conditions(const PipelineConfig& cfg) {
  std::vector<Condition> out;
  for (auto f : cfg.families)
    for (auto r : cfg.region_modes)
      for (const auto& ms : cfg.modality_sets)
        for (auto k : cfg.classifiers) out.push_back({f, r, ms, k});
  return out;
}

namespace detail {

inline std::vector<std::vector<Eigen::Index>> condition_blocks(const FeatureTable& t, const Condition& c) {
  std::vector<std::vector<Eigen::Index>> blocks;
  const std::string fam(to_string(c.family));
  for (const auto& m : c.modalities) {
    auto cols = t.columns_with_prefix(m + ".intra." + fam + ".");
    if (c.region == RegionMode::IntraPeri) {
      const auto peri = t.columns_with_prefix(m + ".peri." + fam + ".");
      if (peri.empty()) throw InvalidArgument("no peritumoral " + fam + " columns for " + m);
      cols.insert(cols.end(), peri.begin(), peri.end());
    }
    if (cols.empty()) throw InvalidArgument("no " + fam + " columns for " + m);
    blocks.push_back(std::move(cols));
  }
  return blocks;
}

inline Matrix gather(const Matrix& X, const std::vector<std::size_t>& rows, const std::vector<Eigen::Index>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = X(static_cast<Eigen::Index>(rows[i]), cols[j]);
  return out;
}

}  // namespace detail

/// PLS reduction (fused when the condition spans several modalities) and a
/// classifier, fitted on the given rows only.
struct FittedCondition {
  std::vector<std::vector<Eigen::Index>> blocks;
  FusionModel reduction;
  bool fused = false;
  TrainedClassifier classifier;

  Eigen::Index components() const { return fused ? reduction.final_stage.k : reduction.blocks.at(0).k; }
  Eigen::Index intermediate() const { return fused ? reduction.intermediate_width() : 0; }

  Matrix reduce(const FeatureTable& t, const std::vector<std::size_t>& rows) const {
    std::vector<Matrix> xs;
    for (const auto& b : blocks) xs.push_back(detail::gather(t.values, rows, b));
    return fused ? reduction.transform(xs) : pls_transform(reduction.blocks[0], xs[0]);
  }

  Vector score(const FeatureTable& t, const std::vector<std::size_t>& rows) const {
    return classifier.score(reduce(t, rows));
  }
};

inline FittedCondition fit_condition(const FeatureTable& t, const std::vector<std::size_t>& rows, const Condition& c,
                                     const PipelineConfig& cfg, std::uint64_t seed) {
  FittedCondition f;
  f.blocks = detail::condition_blocks(t, c);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = grade_to_label(t.grades.at(rows[i]));
  std::vector<Matrix> xs;
  for (const auto& b : f.blocks) xs.push_back(detail::gather(t.values, rows, b));
  Matrix scores;
  f.fused = xs.size() > 1;
  if (f.fused) {
    auto fr = fuse_multimodal(xs, y, cfg.pls_components);
    f.reduction = std::move(fr.model);
    scores = std::move(fr.scores);
  } else {
    f.reduction.blocks.push_back(pls_fit(xs[0], y, cfg.pls_components));
    scores = f.reduction.blocks[0].train_scores;
  }
  auto clf_cfg = cfg.classifier;
  clf_cfg.rf.seed = derive_seed(seed, fnv1a(c.name()));
  f.classifier = train_classifier(c.classifier, scores, y, compute_class_weights(y), clf_cfg, 1);
  return f;
}

struct ConditionResult {
  Condition condition;
  int repeat = 0;
  bool ok = false;
  std::string failure;
  Metrics metrics;
  RocCurve roc;
  Eigen::Index components = 0;
  Eigen::Index intermediate = 0;
  bool converged = true;
  double threshold = 0.0;
};

inline ConditionResult evaluate_condition(const FeatureTable& t, const Split& split, const Condition& c,
                                          const PipelineConfig& cfg, int repeat) {
  ConditionResult r;
  r.condition = c;
  r.repeat = repeat;
  r.threshold = cfg.threshold_for(c.classifier);
  try {
    const auto fitted = fit_condition(t, split.train, c, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(repeat)));
    const Vector s = fitted.score(t, split.test);
    std::vector<double> scores(s.data(), s.data() + s.size());
    std::vector<int> labels;
    for (auto i : split.test) labels.push_back(grade_to_label(t.grades[i]));
    r.metrics = classification_metrics(scores, labels, r.threshold);
    r.roc = roc_auc(scores, labels);
    r.components = fitted.components();
    r.intermediate = fitted.intermediate();
    r.converged = fitted.classifier.converged();
    r.ok = true;
  } catch (const Error& e) {
    r.failure = e.what();
  }
  return r;
}

inline std::uint64_t split_seed(const PipelineConfig& cfg, int repeat) {
  return derive_seed(cfg.seed, fnv1a("split") + static_cast<std::uint64_t>(repeat));
}

// ---------------------------------------------------------------------------
// Consensus clustering on the cohort

struct ConsensusSummary {
  FeatureFamily family = FeatureFamily::WS;
  std::size_t n_features = 0;
  ClusterAccuracy accuracy;
  double within_hgg = 0, within_lgg = 0, between = 0;
  ConsensusMatrix matrix;
  std::string failure;
};

/// Z-scored intratumoral columns of one family across all modalities.
inline Matrix consensus_input(const FeatureTable& t, FeatureFamily fam, const std::vector<std::string>& modalities) {
  std::vector<Eigen::Index> cols;
  for (const auto& m : modalities) {
    auto c = t.columns_with_prefix(m + ".intra." + std::string(to_string(fam)) + ".");
    cols.insert(cols.end(), c.begin(), c.end());
  }
  std::vector<Vector> zs;
  for (auto j : cols) {
    Vector v = t.values.col(j);
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(v.size() - 1)));
    if (!(sd > 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff()))) continue;
    zs.push_back((v.array() - mean) / sd);
  }
  Matrix Z(t.values.rows(), static_cast<Eigen::Index>(zs.size()));
  for (std::size_t j = 0; j < zs.size(); ++j) Z.col(static_cast<Eigen::Index>(j)) = zs[j];
  return Z;
}

inline ConsensusSummary consensus_summary(const FeatureTable& t, FeatureFamily fam, const PipelineConfig& cfg) {
  ConsensusSummary s;
  s.family = fam;
  try {
    const Matrix Z = consensus_input(t, fam, cfg.modalities);
    s.n_features = static_cast<std::size_t>(Z.cols());
    if (Z.cols() == 0) throw InvalidArgument("consensus: no non-constant columns");
    auto cc = cfg.consensus;
    cc.seed = derive_seed(cfg.seed, fnv1a(std::string("consensus.") + std::string(to_string(fam))));
    s.matrix = consensus_cluster(Z, cc, cfg.threads);
    const auto y = t.labels();
    if (cc.k == 2) s.accuracy = cluster_accuracy(s.matrix.assignment, y);
    double sums[3] = {0, 0, 0};
    long counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < y.size(); ++i)
      for (std::size_t j = i + 1; j < y.size(); ++j) {
        const int k = y[i] != y[j] ? 2 : y[i] > 0 ? 0 : 1;
        sums[k] += s.matrix.M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        ++counts[k];
      }
    s.within_hgg = counts[0] ? sums[0] / static_cast<double>(counts[0]) : NAN;
    s.within_lgg = counts[1] ? sums[1] / static_cast<double>(counts[1]) : NAN;
    s.between = counts[2] ? sums[2] / static_cast<double>(counts[2]) : NAN;
  } catch (const Error& e) {
    s.failure = e.what();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Run

struct RunResult {
  FeatureTable table;
  std::vector<Split> splits;  // one per repeat
  std::vector<ConditionResult> results;
  std::vector<ConsensusSummary> consensus;
};

inline RunResult run_pipeline(FeatureTable table, const PipelineConfig& cfg) {
  RunResult run;
  run.table = std::move(table);
  const auto labels = run.table.labels();
  for (int r = 0; r < cfg.repeats; ++r) run.splits.push_back(stratified_split(labels, cfg.test_fraction, split_seed(cfg, r)));

  const auto conditions = enumerate_conditions(cfg);
  run.results.resize(conditions.size() * static_cast<std::size_t>(cfg.repeats));
  parallel_for(run.results.size(), cfg.threads, [&](std::size_t i) {
    const auto rep = static_cast<int>(i / conditions.size());
    run.results[i] = evaluate_condition(run.table, run.splits[static_cast<std::size_t>(rep)], conditions[i % conditions.size()], cfg, rep);
  });
  if (cfg.consensus_enabled)
    for (auto f : cfg.families) run.consensus.push_back(consensus_summary(run.table, f, cfg));
  return run;
}

inline std::string roc_file_name(const ConditionResult& r, int repeats) {
  return "roc/" + r.condition.file_stem() + (repeats > 1 ? "_r" + std::to_string(r.repeat) : "") + ".tsv";
}

inline std::string format_report(const RunResult& run, const PipelineConfig& cfg) {
  std::ostringstream o;
  o << "[config]\n";
  for (const auto& [k, v] : cfg.echo) o << k << " = " << v << '\n';

  const auto labels = run.table.labels();
  const auto hgg = std::count(labels.begin(), labels.end(), 1);
  o << "\n[cohort]\n"
    << "patients = " << run.table.rows() << '\n'
    << "hgg = " << hgg << '\n'
    << "lgg = " << static_cast<long>(labels.size()) - hgg << '\n'
    << "excluded = " << run.table.exclusions.size() << '\n'
    << "feature_columns = " << run.table.columns.size() << '\n';
  for (auto f : cfg.extract_families) {
    long n = 0;
    for (const auto& c : run.table.columns) n += c.find("." + std::string(to_string(f)) + ".") != std::string::npos;
    o << "columns." << to_string(f) << " = " << n << '\n';
  }
  for (const auto& e : run.table.exclusions) o << "\n[exclusion " << e.patient_id << "]\nreason = " << e.reason << '\n';

  for (std::size_t r = 0; r < run.splits.size(); ++r) {
    const auto& s = run.splits[r];
    auto count_pos = [&](const std::vector<std::size_t>& idx) {
      long n = 0;
      for (auto i : idx) n += labels[i] > 0;
      return n;
    };
    o << "\n[split " << r << "]\n"
      << "seed = " << s.seed << '\n'
      << "test_fraction = " << format_double(s.test_fraction) << '\n'
      << "train = " << s.train.size() << '\n'
      << "test = " << s.test.size() << '\n'
      << "train_hgg = " << count_pos(s.train) << '\n'
      << "train_lgg = " << static_cast<long>(s.train.size()) - count_pos(s.train) << '\n'
      << "test_hgg = " << count_pos(s.test) << '\n'
      << "test_lgg = " << static_cast<long>(s.test.size()) - count_pos(s.test) << '\n';
  }

  for (const auto& r : run.results) {
    const auto& c = r.condition;
    o << "\n[condition " << c.name() << (cfg.repeats > 1 ? "#" + std::to_string(r.repeat) : "") << "]\n"
      << "family = " << to_string(c.family) << '\n'
      << "region_mode = " << to_string(c.region) << '\n'
      << "modalities = " << c.modality_label() << '\n'
      << "classifier = " << to_string(c.classifier) << '\n'
      << "repeat = " << r.repeat << '\n'
      << "status = " << (r.ok ? "ok" : "failed") << '\n';
    if (!r.ok) {
      o << "reason = " << r.failure << '\n';
      continue;
    }
    o << "pls_components = " << r.components << '\n';
    if (r.intermediate) o << "pls_intermediate = " << r.intermediate << '\n';
    o << "threshold = " << format_double(r.threshold) << '\n'
      << "accuracy = " << format_double(r.metrics.accuracy) << '\n'
      << "sensitivity = " << format_double(r.metrics.sensitivity) << '\n'
      << "specificity = " << format_double(r.metrics.specificity) << '\n'
      << "auc = " << format_double(r.metrics.auc) << '\n'
      << "tp = " << r.metrics.tp << "\nfp = " << r.metrics.fp << "\ntn = " << r.metrics.tn << "\nfn = " << r.metrics.fn
      << '\n'
      << "converged = " << (r.converged ? "true" : "false") << '\n'
      << "roc = " << roc_file_name(r, cfg.repeats) << '\n';
  }

  if (cfg.repeats > 1) {
    const std::size_t per = run.results.size() / static_cast<std::size_t>(cfg.repeats);
    for (std::size_t i = 0; i < per; ++i) {
      double acc = 0, sen = 0, spe = 0, auc = 0;
      int n = 0;
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        const auto& r = run.results[static_cast<std::size_t>(rep) * per + i];
        if (!r.ok) continue;
        acc += r.metrics.accuracy, sen += r.metrics.sensitivity, spe += r.metrics.specificity, auc += r.metrics.auc;
        ++n;
      }
      o << "\n[mean " << run.results[i].condition.name() << "]\nrepeats_ok = " << n << '\n';
      if (n == 0) continue;
      o << "accuracy = " << format_double(acc / n) << "\nsensitivity = " << format_double(sen / n)
        << "\nspecificity = " << format_double(spe / n) << "\nauc = " << format_double(auc / n) << '\n';
    }
  }

  for (const auto& s : run.consensus) {
    o << "\n[consensus " << to_string(s.family) << "]\n";
    if (!s.failure.empty()) {
      o << "status = failed\nreason = " << s.failure << '\n';
      continue;
    }
    o << "status = ok\n"
      << "features = " << s.n_features << '\n'
      << "k = " << cfg.consensus.k << '\n'
      << "resamples = " << cfg.consensus.n_resamples << '\n'
      << "mean_within_hgg = " << format_double(s.within_hgg) << '\n'
      << "mean_within_lgg = " << format_double(s.within_lgg) << '\n'
      << "mean_between = " << format_double(s.between) << '\n';
    if (cfg.consensus.k == 2)
      o << "cluster_accuracy_hgg = " << format_double(s.accuracy.positive) << '\n'
        << "cluster_accuracy_lgg = " << format_double(s.accuracy.negative) << '\n'
        << "cluster_accuracy = " << format_double(s.accuracy.overall) << '\n';
    for (const auto& w : s.matrix.warnings) o << "warning = " << w << '\n';
    o << "matrix = consensus/" << to_string(s.family) << ".tsv\n";
  }
  return o.str();
}

inline void write_run(const fs::path& out, const RunResult& run, const PipelineConfig& cfg) {
  std::ostringstream features;
  write_features(features, run.table);
  write_text_file(out / "features.tsv", features.str());
  for (const auto& r : run.results) {
    if (!r.ok) continue;
    std::ostringstream s;
    write_roc_tsv(s, r.roc);
    write_text_file(out / roc_file_name(r, cfg.repeats), s.str());
  }
  for (const auto& c : run.consensus) {
    if (!c.failure.empty()) continue;
    std::ostringstream s;
    s << "patient_id";
    for (const auto& id : run.table.patient_ids) s << '\t' << id;
    s << '\n';
    for (Eigen::Index i = 0; i < c.matrix.M.rows(); ++i) {
      s << run.table.patient_ids[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < c.matrix.M.cols(); ++j) s << '\t' << format_double(c.matrix.M(i, j));
      s << '\n';
    }
    write_text_file(out / "consensus" / (std::string(to_string(c.family)) + ".tsv"), s.str());
  }
  write_text_file(out / "report.txt", format_report(run, cfg));
}

inline RunResult cmd_run(const PipelineConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto lf = load_or_extract(cfg);
  const auto t1 = clock::now();
  auto run = run_pipeline(std::move(lf.table), cfg);
  const auto t2 = clock::now();
  write_run(cfg.output, run, cfg);
  auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  std::ostringstream t;
  t << "features_from_cache = " << (lf.from_cache ? "true" : "false") << '\n'
    << "features_seconds = " << secs(t0, t1) << '\n'
    << "grid_seconds = " << secs(t1, t2) << '\n'
    << "threads = " << cfg.threads << '\n';
  write_text_file(cfg.output / "timings.txt", t.str());
  return run;
}

// ---------------------------------------------------------------------------
// Leakage check

struct LeakageCheck {
  bool passed = true;
  std::size_t conditions = 0;
  std::string detail;
};

/// Refits every condition (a) on a table with the test rows deleted and
/// (b) on a table whose test rows hold unrelated values, and requires test
/// scores identical to the production fit.
inline LeakageCheck check_no_leakage(const FeatureTable& t, const PipelineConfig& cfg, const Split& split) {
  LeakageCheck chk;
  const auto train_only = t.select_rows(split.train);
  std::vector<std::size_t> all(split.train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  FeatureTable poisoned = t;
  std::mt19937_64 rng(derive_seed(cfg.seed, fnv1a("poison")));
  std::normal_distribution<double> g(0.0, 1e3);
  for (auto i : split.test) {
    for (Eigen::Index j = 0; j < poisoned.values.cols(); ++j) poisoned.values(static_cast<Eigen::Index>(i), j) = g(rng);
    poisoned.grades[i] = poisoned.grades[i] == Grade::HGG ? Grade::LGG : Grade::HGG;
  }
  for (const auto& c : enumerate_conditions(cfg)) {
    const auto seed = derive_seed(cfg.seed, 0);
    try {
      const Vector ref = fit_condition(t, split.train, c, cfg, seed).score(t, split.test);
      const Vector del = fit_condition(train_only, all, c, cfg, seed).score(t, split.test);
      const Vector poi = fit_condition(poisoned, split.train, c, cfg, seed).score(t, split.test);
      ++chk.conditions;
      if (ref != del || ref != poi) {
        chk.passed = false;
        chk.detail += c.name() + " ";
      }
    } catch (const Error&) {
      // Failing conditions are reported by the run itself.
    }
  }
  if (chk.conditions == 0) {
    chk.passed = false;
    chk.detail = "no condition could be fitted";
  }
  return chk;
}

// ---------------------------------------------------------------------------
// Invariance experiment over subjects

struct InvarianceSubject {
  std::string id;
  InvarianceReport report;
};

struct InvarianceRun {
  std::vector<InvarianceSubject> subjects;
  std::vector<Exclusion> failures;
  std::vector<PerturbationKind> perturbations;
};

inline const std::vector<synthetic::TextureKind>& texture_suite() {
  using K = synthetic::TextureKind;
  static const std::vector<K> kinds{K::Stripes, K::Blobs, K::Mixed, K::Checker, K::Waves};
  return kinds;
}

inline std::string texture_name(synthetic::TextureKind k) {
  switch (k) {
    case synthetic::TextureKind::Stripes: return "stripes";
    case synthetic::TextureKind::Blobs: return "blobs";
    case synthetic::TextureKind::Mixed: return "mixed";
    case synthetic::TextureKind::Checker: return "checker";
    case synthetic::TextureKind::Waves: return "waves";
  }
  return "texture";
}

inline InvarianceRun run_invariance(const PipelineConfig& cfg) {
  const auto& inv = cfg.invariance;
  struct Task {
    std::string id;
    Image image;
    Mask mask;
  };
  std::vector<Task> tasks;
  InvarianceRun run;
  run.perturbations = inv.perturbations;
  if (inv.mode == "synthetic") {
    if (inv.textures < 1) throw InvalidArgument("invariance: textures must be >= 1");
    const auto mask = synthetic::disk_mask(inv.size, inv.size, inv.radius);
    for (int t = 0; t < inv.textures; ++t) {
      const auto kind = texture_suite()[static_cast<std::size_t>(t) % texture_suite().size()];
      tasks.push_back({"synthetic" + std::to_string(t) + "_" + texture_name(kind),
                       synthetic::texture(inv.size, inv.size, derive_seed(cfg.seed, static_cast<std::uint64_t>(t)), kind),
                       mask});
    }
  } else {
    // Largest intratumoral slice of the first configured modality.
    const auto manifest = load_manifest(cfg.manifest);
    const auto spec = RegionSpec::intratumoral();
    for (const auto& e : manifest.entries) {
      if (!e.images.count(cfg.modalities.front())) {
        run.failures.push_back({e.patient_id, "missing modality " + cfg.modalities.front()});
        continue;
      }
      const auto vol = nifti::read_volume(e.images.at(cfg.modalities.front()));
      const auto labels = nifti::read_labels(e.mask_path);
      if (vol.dims() != labels.dims()) {
        run.failures.push_back({e.patient_id, "image and mask dims differ"});
        continue;
      }
      std::size_t best = 0, best_z = 0;
      for (std::size_t z = 0; z < vol.nz(); ++z) {
        std::size_t n = 0;
        for (std::size_t y = 0; y < vol.ny(); ++y)
          for (std::size_t x = 0; x < vol.nx(); ++x) n += spec.labels.count(labels(x, y, z));
        if (n > best) best = n, best_z = z;
      }
      if (best == 0) {
        run.failures.push_back({e.patient_id, "no intra voxels"});
        continue;
      }
      const auto lab = labels.slice(best_z);
      Mask m(lab.rows(), lab.cols(), 0);
      for (std::size_t i = 0; i < lab.size(); ++i) m.values()[i] = spec.labels.count(lab.values()[i]) ? 1 : 0;
      tasks.push_back({e.patient_id, vol.slice(best_z), m});
    }
  }
  std::vector<std::optional<InvarianceReport>> reports(tasks.size());
  std::vector<std::string> errors(tasks.size());
  parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
    try {
      reports[i] = run_invariance_experiment(tasks[i].image, tasks[i].mask, inv.experiment, inv.perturbations,
                                             derive_seed(cfg.seed, fnv1a(tasks[i].id)));
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (reports[i]) run.subjects.push_back({tasks[i].id, std::move(*reports[i])});
    else run.failures.push_back({tasks[i].id, errors[i]});
  }
  return run;
}

inline const std::vector<std::string>& invariance_families() {
  static const std::vector<std::string> f{"WS", "classic", "FO", "GLCM", "GLRLM", "GLSZM", "GLDM"};
  return f;
}

/// Mean change per (perturbation, family) over subjects with a defined value.
inline double mean_change(const InvarianceRun& run, PerturbationKind p, const std::string& family) {
  double sum = 0;
  int n = 0;
  for (const auto& s : run.subjects) {
    const double v = s.report.change(p, family);
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

inline void write_invariance(const fs::path& out, const InvarianceRun& run) {
  std::ostringstream table;
  table << "subject\tperturbation\tfamily\tchange\tused\texcluded_count\n";
  for (const auto& s : run.subjects)
    for (const auto& r : s.report.rows)
      table << s.id << '\t' << to_string(r.perturbation) << '\t' << r.family << '\t' << format_double(r.change) << '\t'
            << r.used << '\t' << r.excluded << '\n';
  for (const auto& f : run.failures) table << "#failed\t" << f.patient_id << '\t' << f.reason << '\n';
  write_text_file(out / "invariance.tsv", table.str());

  std::ostringstream summary;
  summary << "perturbation";
  for (const auto& f : invariance_families()) summary << '\t' << f;
  summary << "\tws_over_classic\n";
  for (auto p : run.perturbations) {
    summary << to_string(p);
    for (const auto& f : invariance_families()) summary << '\t' << format_double(mean_change(run, p, f));
    const double ws = mean_change(run, p, "WS"), cl = mean_change(run, p, "classic");
    summary << '\t' << (cl > 0 ? format_double(ws / cl) : std::string("nan")) << '\n';
  }
  write_text_file(out / "invariance_summary.tsv", summary.str());
}

inline InvarianceRun cmd_invariance(const PipelineConfig& cfg) {
  auto run = run_invariance(cfg);
  write_invariance(cfg.output, run);
  return run;
}

// ---------------------------------------------------------------------------
// Report: read back a run directory and draw ROC curves

struct ReportSection {
  std::string name;
  std::map<std::string, std::string> values;
};

inline std::vector<ReportSection> read_report(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<ReportSection> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      out.push_back({line.substr(1, line.size() - 2), {}});
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos || out.empty()) throw FormatError("report: malformed line '" + line + "'");
    out.back().values[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

inline RocCurve read_roc_tsv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  RocCurve roc;
  while (std::getline(in, line)) {
    const auto cells = detail::split_line(line, '\t');
    if (cells.size() != 3) throw FormatError("roc: malformed line in " + path.string());
    roc.points.push_back({parse_double(cells[0]), parse_double(cells[1]), parse_double(cells[2])});
  }
  roc.auc = roc.trapezoid_area();
  return roc;
}

inline std::string roc_svg(const std::string& title, const std::vector<std::pair<std::string, RocCurve>>& curves) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double x0 = 50, y0 = 350, side = 300;
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"420\" height=\"400\" fill=\"white\"/>\n"
    << "<text x=\"210\" y=\"25\" text-anchor=\"middle\">" << title << "</text>\n"
    << "<rect x=\"" << x0 << "\" y=\"" << y0 - side << "\" width=\"" << side << "\" height=\"" << side
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 + side << "\" y2=\"" << y0 - side
    << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n"
    << "<text x=\"200\" y=\"385\" text-anchor=\"middle\">false positive rate</text>\n"
    << "<text x=\"15\" y=\"200\" text-anchor=\"middle\" transform=\"rotate(-90 15 200)\">true positive rate</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& [label, roc] = curves[i];
    s << "<polyline fill=\"none\" stroke=\"" << colors[i % 6] << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : roc.points) s << x0 + p.fpr * side << ',' << y0 - p.tpr * side << ' ';
    s << "\"/>\n<text x=\"" << x0 + side - 110 << "\" y=\"" << y0 - 15 - 16.0 * static_cast<double>(curves.size() - 1 - i)
      << "\" fill=\"" << colors[i % 6] << "\">" << label << " AUC " << std::setprecision(3) << roc.auc
      << std::setprecision(2) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// Writes one SVG per (family, region, modality set) under <run>/plots and
/// returns a tab-separated metrics summary.
inline std::string cmd_report(const fs::path& run_dir) {
  const auto sections = read_report(run_dir / "report.txt");
  std::map<std::string, std::vector<std::pair<std::string, RocCurve>>> groups;
  std::ostringstream summary;
  summary << "condition\tstatus\taccuracy\tsensitivity\tspecificity\tauc\n";
  for (const auto& s : sections) {
    if (s.name.rfind("condition ", 0) != 0) continue;
    const auto name = s.name.substr(10);
    const auto& v = s.values;
    const bool ok = v.count("status") && v.at("status") == "ok";
    summary << name << '\t' << (ok ? "ok" : "failed");
    for (const char* k : {"accuracy", "sensitivity", "specificity", "auc"})
      summary << '\t' << (ok ? v.at(k) : std::string("-"));
    summary << '\n';
    if (!ok) continue;
    const auto cut = name.rfind('/');
    groups[name.substr(0, cut)].push_back({name.substr(cut + 1), read_roc_tsv(run_dir / v.at("roc"))});
  }
  for (const auto& [group, curves] : groups) {
    auto stem = group;
    for (auto& ch : stem)
      if (ch == '/' || ch == '#') ch = '_';
    write_text_file(run_dir / "plots" / (stem + ".svg"), roc_svg(group, curves));
  }
  write_text_file(run_dir / "summary.tsv", summary.str());
  return summary.str();
}

}  // namespace wsrad
