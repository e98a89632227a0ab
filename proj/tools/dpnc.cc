//
// Copyright 2026 The dpnc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// dpnc run <config> [--jobs N] [--seed S] [--out DIR] [--key=value ...]
// dpnc verify <results.csv>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/strip.h"
#include "dpnc/harness.h"

namespace {

std::optional<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

int Run(const std::string& config_path, int jobs,
        const std::optional<uint64_t>& seed,
        const std::optional<std::string>& out,
        const std::vector<std::string>& overrides) {
  std::optional<std::string> text = ReadFile(config_path);
  if (!text) {
    std::cerr << "cannot read " << config_path << "\n";
    return 2;
  }
  absl::StatusOr<dpnc::ExperimentConfig> config = dpnc::ParseConfig(*text);
  if (!config.ok()) {
    std::cerr << config.status() << "\n";
    return 2;
  }
  for (const std::string& arg : overrides) {
    absl::string_view kv = arg;
    if (!absl::ConsumePrefix(&kv, "--")) {
      std::cerr << "unexpected argument '" << arg << "'\n";
      return 2;
    }
    const size_t eq = kv.find('=');
    if (eq == absl::string_view::npos) {
      std::cerr << "override '" << arg << "' needs --key=value\n";
      return 2;
    }
    if (absl::Status s = dpnc::ApplyOverride(*config, kv.substr(0, eq),
                                             kv.substr(eq + 1));
        !s.ok()) {
      std::cerr << s << "\n";
      return 2;
    }
  }
  if (seed) config->seed = *seed;
  if (out) config->out = *out;

  absl::StatusOr<dpnc::ResultsTable> table = dpnc::RunExperiment(*config, jobs);
  if (!table.ok()) {
    std::cerr << table.status() << "\n";
    return 2;
  }
  if (absl::Status s = dpnc::EmitReport(*table, config->out); !s.ok()) {
    std::cerr << s << "\n";
    return 1;
  }
  int64_t ok = 0;
  for (const dpnc::ResultRow& row : table->rows) ok += row.status == "ok";
  std::cout << dpnc::ExperimentKindName(config->experiment) << ": " << ok
            << "/" << table->rows.size() << " trials ok";
  if (table->fit_slope) std::cout << ", fit slope " << *table->fit_slope;
  std::cout << ", wrote " << config->out << "\n";
  return 0;
}

int Verify(const std::string& path) {
  std::optional<std::string> text = ReadFile(path);
  if (!text) {
    std::cerr << "cannot read " << path << "\n";
    return 2;
  }
  absl::StatusOr<dpnc::VerifyReport> report = dpnc::VerifyResultsCsv(*text);
  if (!report.ok()) {
    std::cerr << report.status() << "\n";
    return 1;
  }
  for (const std::string& failure : report->failures) {
    std::cerr << failure << "\n";
  }
  std::cout << report->rows << " rows, " << report->checked_certificates
            << " certificates checked, " << report->failures.size()
            << " failures\n";
  return report->ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private nonconvex optimization experiments"};
  app.require_subcommand(1);

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  std::string config_path;
  int jobs = 1;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--jobs", jobs, "concurrent trials")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "master seed");
  run->add_option("--out", out, "output directory");
  run->allow_extras();

  CLI::App* verify =
      app.add_subcommand("verify", "re-check certificates in results.csv");
  std::string results_path;
  verify->add_option("results", results_path, "results.csv")->required();

  CLI11_PARSE(app, argc, argv);
  if (run->parsed()) {
    return Run(config_path, jobs, seed, out, run->remaining());
  }
  return Verify(results_path);
}
