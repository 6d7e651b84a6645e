#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pseudopilot/errors.hpp"
#include "pseudopilot/experiment.hpp"
#include "pseudopilot/selfcheck.hpp"

namespace {

using namespace pseudopilot;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& part : split_list(text)) {
    if (part.empty()) throw ConfigError("--seeds: empty entry");
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::exception&) {
      throw ConfigError("--seeds: not an integer: \"" + part + "\"");
    }
    if (used != part.size()) throw ConfigError("--seeds: not an integer: \"" + part + "\"");
    seeds.push_back(v);
  }
  return seeds;
}

std::vector<Method> parse_method_list(const std::string& text) {
  std::vector<Method> methods;
  for (const std::string& part : split_list(text)) {
    const auto m = parse_method(part);
    if (!m) throw ConfigError("--methods: unknown method \"" + part + "\"");
    methods.push_back(*m);
  }
  return methods;
}

ExperimentSpec default_spec() {
  ExperimentSpec spec;
  spec.blobs = standard_blobs(7);
  spec.run = standard_run_config();
  spec.out_dir = "out";
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "pseudopilot: desk-scale semi-supervised domain adaptation runs with "
      "margin losses and Q-learning pseudo-label selection"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string seeds_arg;
  std::string methods_arg;
  std::size_t jobs = 0;

  auto add_common = [&](CLI::App* sub, bool with_grid) {
    sub->add_option("--config", config, "JSON experiment config (default: built-in benchmark)");
    sub->add_option("--out", out, "output directory (overrides the config)");
    if (with_grid) {
      sub->add_option("--seeds", seeds_arg, "comma-separated seed list override");
      sub->add_option("--methods", methods_arg, "comma-separated method list override");
      sub->add_option("--jobs", jobs, "worker threads for independent runs")
          ->check(CLI::PositiveNumber);
    }
  };

  CLI::App* run = app.add_subcommand("run", "execute the method x seed grid; write results.csv and summary.csv");
  add_common(run, true);
  CLI::App* sweep = app.add_subcommand("sweep-kshot", "accuracy vs labeled-samples-per-class curve; write curve.csv");
  add_common(sweep, true);
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  add_common(gen, false);
  app.add_subcommand("validate", "run the numeric self-check suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // help text, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand("validate")) return pseudopilot::cmd_validate(std::cout);

    ExperimentSpec spec = config.empty() ? default_spec() : load_spec(config);
    if (!out.empty()) spec.out_dir = out;
    if (!seeds_arg.empty()) spec.seeds = parse_seed_list(seeds_arg);
    if (!methods_arg.empty()) spec.methods = parse_method_list(methods_arg);
    if (jobs > 0) spec.jobs = jobs;

    if (app.got_subcommand("run")) return cmd_run(spec, std::cout);
    if (app.got_subcommand("sweep-kshot")) return cmd_sweep_kshot(spec, std::cout);
    if (app.got_subcommand("gen-data")) return cmd_gen_data(spec, std::cout);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 2;
  }
}
