// eve: desk-scale variational LM pipeline driver (links the C API only).
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "eve_capi.h"

namespace {

struct Options {
  std::string config;
  std::string out_dir = "out";
  std::string sweep;
  long long seed_override = 0;
  bool has_seed_override = false;
};

int run_stage(const Options& opt, const std::string& stage) {
  char errbuf[1024] = {0};
  eve_run* run = eve_run_open(opt.config.c_str(), opt.out_dir.c_str(), errbuf, sizeof(errbuf));
  if (!run) {
    std::fprintf(stderr, "eve: config error: %s\n", errbuf);
    return EVE_ERR_CONFIG;
  }
  eve_status st = EVE_OK;
  if (opt.has_seed_override) st = eve_run_set_seed_override(run, opt.seed_override);
  if (st == EVE_OK && !opt.sweep.empty()) st = eve_run_set_sweep(run, opt.sweep.c_str());
  if (st == EVE_OK) st = eve_run_stage(run, stage.c_str());
  if (st != EVE_OK)
    std::fprintf(stderr, "eve: %s (exit %d)\n", eve_run_last_error(run), static_cast<int>(st));
  else
    std::fprintf(stdout, "eve: stage '%s' done (out: %s)\n", stage.c_str(),
                 opt.out_dir.c_str());
  eve_run_close(run);
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("eve ") + eve_version() +
               " - variational next-token pipeline with homeostatic regulation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Options opt;
  std::string stage_flag;

  app.add_option("--config", opt.config, "config file (key = value)")->required();
  app.add_option("--out", opt.out_dir, "output directory (default: out)");
  app.add_option("--seed-override", opt.seed_override, "restrict to a single training seed")
      ->each([&](const std::string&) { opt.has_seed_override = true; });

  const char* stages[] = {"prepare-data", "train",        "evaluate", "select",
                          "calibrate",    "agentic-eval", "report",   "run"};
  for (const char* s : stages) {
    auto* sub = app.add_subcommand(s, std::string("run the '") + s + "' stage");
    if (std::string(s) == "train")
      sub->add_option("--sweep", opt.sweep, "KEY=V1,V2,... stage-1 search values");
    if (std::string(s) == "run")
      sub->add_option("--stage", stage_flag, "run a single named stage instead");
  }

  CLI11_PARSE(app, argc, argv);

  std::string stage = app.get_subcommands().front()->get_name();
  if (stage == "run" && !stage_flag.empty()) stage = stage_flag;
  return run_stage(opt, stage);
}
