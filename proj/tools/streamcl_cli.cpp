// streamcl command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "streamcl/streamcl.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int report(streamcl_status status, const char* what) {
  if (status == STREAMCL_OK) return kExitOk;
  std::fprintf(stderr, "streamcl %s: %s: %s\n", what, streamcl_status_name(status),
               streamcl_last_error());
  return status == STREAMCL_E_CONFIG || status == STREAMCL_E_INVALID_ARGUMENT ? kExitUsage
                                                                              : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exemplar-free online class-incremental learning over embeddings"};
  app.set_version_flag("--version", std::string(streamcl_version()));
  app.require_subcommand(1);

  streamcl_synthetic_params gen{};
  gen.cluster_spread = 0.05;
  gen.mean_scale = 1.0;
  std::string gen_out = ".";
  std::string gen_name = "synthetic";
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic Gaussian-cluster dataset");
  gen_cmd->add_option("--classes", gen.num_classes, "Number of classes")->required()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dim", gen.dim, "Embedding dimension")->required()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class-train", gen.per_class_train, "Training records per class")
      ->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class-test", gen.per_class_test, "Test records per class")
      ->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->required();
  gen_cmd->add_option("--spread", gen.cluster_spread, "Per-class standard deviation")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--mean-scale", gen.mean_scale, "Norm of each class center")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen_cmd->add_option("--name", gen_name, "Base file name")->capture_default_str();

  std::string run_config;
  std::string run_out;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment from a JSON config");
  run_cmd->add_option("config", run_config, "Run config (JSON)")->required();
  run_cmd->add_option("--out", run_out, "Output directory (overrides the config)");

  std::string sweep_spec;
  bool sweep_parallel = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a sweep over M, Q or method");
  sweep_cmd->add_option("spec", sweep_spec, "Sweep spec (JSON)")->required();
  sweep_cmd->add_flag("--parallel", sweep_parallel, "Run sweep points concurrently");

  std::string check_file;
  std::string check_manifest;
  auto* check_cmd = app.add_subcommand("export-check", "Validate an embedding file");
  check_cmd->add_option("file", check_file, "Embedding file (.ocle)")->required();
  check_cmd->add_option("--manifest", check_manifest, "Also cross-check this manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*gen_cmd) {
    char manifest[4096];
    const int rc = report(streamcl_generate_synthetic(&gen, gen_out.c_str(), gen_name.c_str(),
                                                      manifest, sizeof manifest),
                          "gen");
    if (rc == kExitOk) std::printf("%s\n", manifest);
    return rc;
  }
  if (*run_cmd) {
    streamcl_run_summary summary{};
    const int rc = report(streamcl_run_config_file(run_config.c_str(),
                                                   run_out.empty() ? nullptr : run_out.c_str(),
                                                   &summary),
                          "run");
    if (rc == kExitOk) {
      std::printf("steps=%u avg=%.6f last=%.6f single_pass=%s\n", summary.num_steps, summary.avg,
                  summary.last, summary.single_pass_ok ? "yes" : "n/a");
    }
    return rc;
  }
  if (*sweep_cmd) {
    size_t points = 0;
    const int rc =
        report(streamcl_run_sweep_file(sweep_spec.c_str(), sweep_parallel ? 1 : -1, &points),
               "sweep");
    if (rc == kExitOk) std::printf("points=%zu\n", points);
    return rc;
  }
  if (*check_cmd) {
    streamcl_file_report r{};
    const int rc = report(
        streamcl_check_embedding_file(check_file.c_str(),
                                      check_manifest.empty() ? nullptr : check_manifest.c_str(),
                                      &r),
        "export-check");
    if (rc == kExitOk) {
      std::printf("ok: dim=%u records=%llu max_label=%u", r.dim,
                  static_cast<unsigned long long>(r.num_records), r.max_label);
      if (!check_manifest.empty()) {
        std::printf(" train=%llu test=%llu", static_cast<unsigned long long>(r.num_train),
                    static_cast<unsigned long long>(r.num_test));
      }
      std::printf("\n");
    }
    return rc;
  }
  return kExitUsage;
}
