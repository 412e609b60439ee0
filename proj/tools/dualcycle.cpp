#include <iostream>

#include "CLI11.hpp"
#include "dualcycle/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = dualcycle::cli;
  CLI::App app{"Cyclic dual-sequential hyperparameter optimization for retrieval-augmented generation"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out, "output directory");

  std::string methods = "cds,joint,random";
  std::size_t repeats = 10;
  std::uint64_t seed_base = 0;
  auto* compare = app.add_subcommand("compare", "repeat several methods and summarize final best M");
  compare->add_option("config", config, "experiment config (JSON)")->required();
  compare->add_option("--methods", methods, "comma list of cds, cds-noseed, joint, random")->capture_default_str();
  compare->add_option("--repeats", repeats, "runs per method")->capture_default_str();
  compare->add_option("--seed-base", seed_base, "first seed")->capture_default_str();
  compare->add_option("--out", out, "output directory");

  std::string values = "5,10,15";
  auto* sweep = app.add_subcommand("sweep-n", "repeat cds for several generator caps N");
  sweep->add_option("config", config, "experiment config (JSON)")->required();
  sweep->add_option("--values", values, "comma list of N")->capture_default_str();
  sweep->add_option("--repeats", repeats, "runs per N")->capture_default_str();
  sweep->add_option("--seed-base", seed_base, "first seed")->capture_default_str();
  sweep->add_option("--out", out, "output directory");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "correlation and budget digest of a finished run");
  report->add_option("run_dir", run_dir, "directory written by run")->required();

  auto* validate = app.add_subcommand("validate-config", "check a config and print it fully resolved");
  validate->add_option("config", config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsage;
  }

  std::optional<std::filesystem::path> out_path;
  if (out) out_path = *out;
  try {
    if (*run) return cli::cmd_run(config, seed, out_path, std::cout, std::cerr);
    if (*compare)
      return cli::cmd_compare(config, cli::split_list(methods), repeats, seed_base, out_path, std::cout, std::cerr);
    if (*sweep) {
      std::vector<std::size_t> ns;
      for (const auto& v : cli::split_list(values)) {
        try {
          std::size_t pos = 0;
          const long long n = std::stoll(v, &pos);
          if (pos != v.size() || n < 0) throw std::invalid_argument(v);
          ns.push_back(static_cast<std::size_t>(n));
        } catch (const std::exception&) {
          std::cerr << "usage error: --values entry '" << v << "' is not a non-negative integer\n";
          return cli::kUsage;
        }
      }
      return cli::cmd_sweep_n(config, ns, repeats, seed_base, out_path, std::cout, std::cerr);
    }
    if (*report) return cli::cmd_report(run_dir, std::cout, std::cerr);
    if (*validate) return cli::cmd_validate_config(config, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return cli::kUsage;
}
