// fpp_lab: run one first-passage experiment from a JSON config.
//
// Exit codes: 0 ok, 2 bad config (nothing written), 3 compute failure or
// empty result set, 4 search budget exhausted.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fpp/config.hpp"
#include "fpp/io.hpp"
#include "fpp/passage.hpp"
#include "fpp/runner.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCompute = 3;
constexpr int kExitBudget = 4;

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> budget;
  std::string log_level = "info";
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Loads and validates; applies CLI and environment overrides.
fpp::ExperimentConfig load(const Flags& f, const std::string& text, const std::optional<std::string>& expect_kind) {
  auto cfg = fpp::parse_config_text(text);
  if (expect_kind && cfg.kind != *expect_kind)
    throw fpp::ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" + *expect_kind + "'");
  if (const char* env = std::getenv("FPP_OUT_DIR"); env && *env) cfg.output_dir = env;
  if (f.out) cfg.output_dir = *f.out;
  if (f.workers) {
    if (*f.workers < 1) throw fpp::ConfigError("--workers must be positive");
    cfg.workers = *f.workers;
  }
  if (f.budget) {
    if (*f.budget < 1) throw fpp::ConfigError("--budget must be positive");
    cfg.budget = *f.budget;
  }
  return cfg;
}

int run(const Flags& f, const std::optional<std::string>& expect_kind, bool validate_only) {
  auto err = spdlog::stderr_color_mt("fpp_lab");
  err->set_level(spdlog::level::from_str(f.log_level));
  std::string text;
  fpp::ExperimentConfig cfg;
  try {
    text = fpp::read_file(f.config);
    cfg = load(f, text, expect_kind);
  } catch (const std::exception& e) {
    err->error("config error: {}", e.what());
    return kExitConfig;
  }
  if (validate_only) {
    std::cout << "ok: kind=" << cfg.kind << " d=" << cfg.dimension << "\n";
    return 0;
  }

  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    err->error("cannot create output directory {}: {}", dir.string(), ec.message());
    return kExitCompute;
  }
  auto file_sink = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "run.log").string(), true);
  err->sinks().push_back(file_sink);
  err->flush_on(spdlog::level::info);

  const std::string started = utc_now();
  fpp::ojson manifest{{"tool", "fpp_lab"},
                      {"tool_version", FPP_VERSION},
                      {"config_path", f.config},
                      {"config_sha256", fpp::sha256_hex(text)},
                      {"kind", cfg.kind},
                      {"workers", cfg.workers},
                      {"started_utc", started}};
  int code = 0;
  fpp::ojson artifacts = fpp::ojson::array();
  auto write = [&](const std::string& name, const std::string& content) {
    fpp::write_file(dir / name, content);
    artifacts.push_back({{"name", name}, {"bytes", content.size()}, {"sha256", fpp::sha256_hex(content)}});
  };
  try {
    const auto out = fpp::run_experiment(cfg, [&](const std::string& m) { err->info(m); });
    write("results.json", out.results.dump(2) + "\n");
    for (const auto& [name, content] : out.files) write(name, content);
    err->info("wrote {} artifacts to {}", artifacts.size(), dir.string());
  } catch (const fpp::BudgetExhausted& e) {
    err->error("budget exhausted: {}", e.what());
    code = kExitBudget;
  } catch (const fpp::ConfigError& e) {
    err->error("config error: {}", e.what());
    code = kExitConfig;
  } catch (const std::exception& e) {
    err->error("compute error: {}", e.what());
    code = kExitCompute;
  }
  manifest["finished_utc"] = utc_now();
  manifest["exit_code"] = code;
  manifest["artifacts"] = artifacts;
  manifest["log"] = "run.log";
  fpp::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return code;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("-c,--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--out", f.out, "output directory (overrides FPP_OUT_DIR and the config)");
  sub->add_option("-w,--workers", f.workers, "worker threads");
  sub->add_option("-b,--budget", f.budget, "vertex budget per search");
  sub->add_option("--log-level", f.log_level, "trace|debug|info|warn|error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"first-passage percolation experiments"};
  app.set_version_flag("--version", std::string(FPP_VERSION));
  app.require_subcommand(1);

  Flags flags;
  std::optional<std::string> expect;
  bool validate_only = false;

  add_common(app.add_subcommand("run", "run the experiment named by the config"), flags);
  add_common(app.add_subcommand("validate", "check a config without computing")
                 ->callback([&] { validate_only = true; }),
             flags);
  add_common(app.add_subcommand("oracle", "exact enumeration on a small box")
                 ->callback([&] { expect = "exact_oracle"; }),
             flags);
  for (const auto& kind : fpp::experiment_kinds()) {
    auto* sub = app.add_subcommand(kind, "run a '" + kind + "' experiment");
    sub->callback([&expect, kind] { expect = kind; });
    add_common(sub, flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  return run(flags, expect, validate_only);
}
