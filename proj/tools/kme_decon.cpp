#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <kmedecon/experiments.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config_path;
  unsigned seed = 0;
  std::string out_dir = "out";
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "JSON config file")
      ->required();
  cmd->add_option("--seed", args->seed, "random seed");
  cmd->add_option("--out", args->out_dir, "output directory");
  cmd->add_flag("--dry-run", args->dry_run,
                "validate the config, echo it, and exit");
}

int dispatch(const std::string& name, const CommonArgs& args, double perturb) {
  kmedecon::Json config = kmedecon::load_json_file(args.config_path);
  kmedecon::RunContext ctx;
  ctx.out_dir = args.out_dir;
  ctx.seed = args.seed;
  ctx.dry_run = args.dry_run;
  ctx.perturb = perturb;

  int code;
  if (name == "ttr") {
    code = kmedecon::run_ttr(config, ctx);
  } else if (name == "sparse") {
    code = kmedecon::run_sparse(config, ctx);
  } else if (name == "lfi") {
    code = kmedecon::run_lfi(config, ctx);
  } else {
    code = kmedecon::run_equivalence_suite(config, ctx);
  }
  if (args.dry_run && code == kExitOk) {
    std::cout << config.dump(2) << "\n";
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deconditional kernel mean embedding experiment runner"};
  app.require_subcommand(1);

  if (const char* threads = std::getenv("KME_DECON_THREADS")) {
    const int t = std::atoi(threads);
    if (t > 0) Eigen::setNbThreads(t);
  }

  CommonArgs ttr_args, sparse_args, lfi_args, equiv_args;
  double perturb = 0.0;

  auto* ttr = app.add_subcommand("ttr", "task transformed regression toy run");
  add_common(ttr, &ttr_args);
  auto* sparse =
      app.add_subcommand("sparse", "sparse inducing-point representation run");
  add_common(sparse, &sparse_args);
  auto* lfi =
      app.add_subcommand("lfi", "likelihood-free inference (exponential-gamma)");
  add_common(lfi, &lfi_args);
  auto* equiv = app.add_subcommand("equivalence-suite",
                                   "cross-form equivalence checks");
  add_common(equiv, &equiv_args);
  equiv->add_option("--perturb", perturb,
                    "inject a deviation into one check (fault-injection test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const CommonArgs* args = &ttr_args;
  std::string name = "ttr";
  if (sparse->parsed()) {
    args = &sparse_args;
    name = "sparse";
  } else if (lfi->parsed()) {
    args = &lfi_args;
    name = "lfi";
  } else if (equiv->parsed()) {
    args = &equiv_args;
    name = "equivalence-suite";
  }

  try {
    return dispatch(name, *args, perturb);
  } catch (const kmedecon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kmedecon::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kmedecon::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const kmedecon::SingularSystemError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const kmedecon::OptimizationFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
