#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wsrad/cohort.hpp"
#include "wsrad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wsrad;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "Key/value config file");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config)");
  cmd->add_option("--threads", f.threads, "Worker threads (results do not depend on this)");
  cmd->add_option("--set", f.overrides, "Extra key=value overrides")->take_all();
}

PipelineConfig resolve(const CommonFlags& f) {
  Config c;
  if (!f.config.empty()) c = Config::load(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("--set expects key=value, got '" + kv + "'");
    c.set(detail::trim(std::string_view(kv).substr(0, eq)), detail::trim(std::string_view(kv).substr(eq + 1)));
  }
  if (f.seed) c.set("seed", std::to_string(*f.seed));
  if (f.threads) c.set("threads", std::to_string(*f.threads));
  c.set("output", fs::absolute(f.out).string());
  auto cfg = PipelineConfig::from(c);
  fs::create_directories(cfg.output);
  return cfg;
}

void print_run_summary(const RunResult& run) {
  std::size_t failed = 0;
  for (const auto& r : run.results) {
    if (!r.ok) {
      ++failed;
      std::cout << r.condition.name() << "\tfailed\t" << r.failure << '\n';
      continue;
    }
    std::cout << r.condition.name() << "\tauc=" << format_double(r.metrics.auc)
              << "\taccuracy=" << format_double(r.metrics.accuracy) << '\n';
  }
  std::cout << run.results.size() - failed << " conditions ok, " << failed << " failed\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet-scattering and classical radiomics for glioma grading"};
  app.require_subcommand(1);

  CommonFlags extract_f, run_f, inv_f;
  auto* extract = app.add_subcommand("extract", "Compute the per-patient feature table");
  add_common(extract, extract_f, true);
  auto* run = app.add_subcommand("run", "Extract (or reuse cached) features and evaluate the condition grid");
  add_common(run, run_f, true);
  auto* inv = app.add_subcommand("invariance", "Measure feature change under local perturbations");
  add_common(inv, inv_f, false);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Draw ROC plots and a metrics summary for a run directory");
  report->add_option("--out", report_dir, "Directory written by 'run'")->required()->check(CLI::ExistingDirectory);

  std::string synth_dir;
  synthetic::CohortSpec spec;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic two-modality cohort");
  synth->add_option("--out", synth_dir, "Destination directory")->required();
  synth->add_option("--n", spec.n, "Patients")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Seed")->capture_default_str();
  synth->add_option("--hgg-fraction", spec.hgg_fraction, "Fraction of HGG patients")->capture_default_str();
  synth->add_option("--size", spec.size, "In-plane voxels per side")->capture_default_str();
  synth->add_option("--slices", spec.slices, "Axial slices")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) {
      const auto cfg = resolve(extract_f);
      const auto t = cmd_extract(cfg);
      std::cout << t.rows() << " patients, " << t.columns.size() << " columns, " << t.exclusions.size()
                << " excluded -> " << (cfg.output / "features.tsv").string() << '\n';
    } else if (run->parsed()) {
      const auto cfg = resolve(run_f);
      print_run_summary(cmd_run(cfg));
      std::cout << "report: " << (cfg.output / "report.txt").string() << '\n';
    } else if (inv->parsed()) {
      const auto cfg = resolve(inv_f);
      const auto r = cmd_invariance(cfg);
      std::cout << read_text_file(cfg.output / "invariance_summary.tsv");
      if (!r.failures.empty()) std::cout << r.failures.size() << " subjects failed, see invariance.tsv\n";
    } else if (report->parsed()) {
      std::cout << cmd_report(report_dir);
    } else if (synth->parsed()) {
      const auto files = synthetic::write_cohort(synth_dir, spec);
      std::cout << files.n_hgg << " HGG, " << files.n_lgg << " LGG\nmanifest: " << files.manifest.string()
                << "\nconfig: " << files.config.string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
