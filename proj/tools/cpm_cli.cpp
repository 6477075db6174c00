#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cpm/cli_io.hpp"
#include "cpm/errors.hpp"

namespace {

struct Flags {
  std::string config;
  double dx = 0.0;
  int threads = 0;
  bool deterministic = false;
  std::string output_dir;
};

// Flag > config file > CPM_THREADS.
int env_threads() {
  const char* s = std::getenv("CPM_THREADS");
  if (!s || !*s) return 0;
  try {
    std::size_t pos = 0;
    const int n = std::stoi(s, &pos);
    if (pos != std::string(s).size() || n < 0) throw std::invalid_argument(s);
    return n;
  } catch (const std::exception&) {
    cpm::fail(cpm::ErrorCode::InvalidConfig, std::string("CPM_THREADS must be a nonnegative integer, got '") + s + "'");
  }
}

int execute(const std::string& command, const Flags& f, CLI::App& sub) {
  try {
    nlohmann::json doc = nlohmann::json::object();
    std::string base_dir;
    if (!f.config.empty()) {
      doc = cpm::read_config_file(f.config);
      base_dir = std::filesystem::path(f.config).parent_path().string();
    }
    if (sub.count("--dx")) doc["dx"] = f.dx;
    if (sub.count("--threads")) doc["threads"] = f.threads;
    if (sub.count("--deterministic")) doc["deterministic"] = true;
    if (sub.count("--output-dir")) doc["output_dir"] = f.output_dir;
    cpm::RunConfig cfg = cpm::parse_config(command, doc);
    cfg.base_dir = base_dir;
    if (cfg.threads == 0) cfg.threads = env_threads();
    return cpm::run_guarded(cfg, std::cerr);
  } catch (const cpm::Error& e) {
    cpm::print_error_record(std::cerr, e.code(), e.what());
    return cpm::exit_code(e.code());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closest point method solver with interior boundary conditions"};
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const std::string& name : cpm::subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--dx", flags.dx, "Grid spacing (overrides the config)");
    sub->add_option("--threads", flags.threads, "OpenMP threads (default: CPM_THREADS, then the runtime default)");
    sub->add_flag("--deterministic", flags.deterministic, "Omit timings so repeated runs give identical files");
    sub->add_option("--output-dir", flags.output_dir, "Directory for PLY, CSV and summary.json");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return cpm::exit_code(cpm::ErrorCode::InvalidConfig);
  }
  return execute(chosen, flags, *app.get_subcommand(chosen));
}
