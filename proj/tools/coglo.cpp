// coglo: simulate, compare, generate scenarios and serve the advisor API.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "coglo/service.h"
#include "coglo/simulator.h"

namespace {

using nlohmann::json;

constexpr int kValidation = 2;
constexpr int kRuntime = 3;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw coglo::Error(coglo::ErrorCode::validation, "cannot read '" + path + "'", path);
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw coglo::Error(coglo::ErrorCode::validation, path + ": " + ex.what(), path);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cognitive logistics advisor"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("sim", "Simulate a day and compare reports");
  sim->require_subcommand(1);

  std::string scenario_path, policy = "reactive", out_path, trace_path;
  std::optional<std::uint64_t> seed;
  auto* sim_run = sim->add_subcommand("run", "Run one policy over a scenario");
  sim_run->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  sim_run->add_option("--policy", policy, "static | reactive | anticipatory")
      ->check(CLI::IsMember({"static", "reactive", "anticipatory"}));
  sim_run->add_option("--seed", seed, "Overrides the scenario seed");
  sim_run->add_option("--out", out_path, "KPI report JSON")->required();
  sim_run->add_option("--trace", trace_path, "Trace as JSON Lines");

  std::string report_a, report_b, format = "table";
  auto* sim_compare = sim->add_subcommand("compare", "Per-KPI deltas of b against a");
  sim_compare->add_option("a", report_a, "Baseline report")->required();
  sim_compare->add_option("b", report_b, "Managed report")->required();
  sim_compare->add_option("--format", format, "table | json")
      ->check(CLI::IsMember({"table", "json"}));

  auto* gen = app.add_subcommand("gen", "Generate scenarios");
  gen->require_subcommand(1);
  coglo::XbParams params;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen_xb = gen->add_subcommand("xb", "Two-country cross-border scenario");
  gen_xb->add_option("--seed", gen_seed)->required();
  gen_xb->add_option("--near", params.near, "Parcels between the border clusters");
  gen_xb->add_option("--inland", params.inland, "Parcels between the office hinterlands");
  gen_xb->add_option("--miss", params.miss_probability, "Delivery miss probability")
      ->check(CLI::Range(0.0, 1.0));
  gen_xb->add_option("--demand", params.demand_rate_per_hour, "Extra orders per hour")
      ->check(CLI::NonNegativeNumber);
  gen_xb->add_option("--out", gen_out)->required();

  int port = 8080;
  std::string host = "127.0.0.1", serve_scenario;
  auto* serve = app.add_subcommand("serve", "HTTP/JSON advisor service");
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--scenario", serve_scenario, "Scenario loaded at startup");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidation;
  }

  try {
    if (sim_run->parsed()) {
      coglo::Scenario sc = coglo::scenario_from_json(read_json(scenario_path));
      if (seed) sc.seed = *seed;
      const coglo::SimResult r = coglo::run(sc, coglo::policy_from_string(policy));
      json report = coglo::kpis_to_json(r.report);
      report["policy"] = policy;
      report["seed"] = sc.seed;
      write_text(out_path, report.dump(2) + "\n");
      if (!trace_path.empty()) write_text(trace_path, coglo::trace_to_jsonl(r.trace));
      if (!r.plan_violations.empty()) {
        for (const auto& v : r.plan_violations) std::cerr << "plan violation: " << v << '\n';
        return kRuntime;
      }
    } else if (sim_compare->parsed()) {
      const auto a = coglo::kpis_from_json(read_json(report_a));
      const auto b = coglo::kpis_from_json(read_json(report_b));
      const auto delta = coglo::compare(a, b);
      if (format == "json") {
        std::cout << coglo::delta_to_json(delta).dump(2) << '\n';
      } else {
        std::cout << coglo::delta_table(delta);
      }
    } else if (gen_xb->parsed()) {
      const auto sc = coglo::generate_xb_scenario(gen_seed, params);
      write_text(gen_out, coglo::scenario_to_json(sc).dump(2) + "\n");
    } else if (serve->parsed()) {
      coglo::Service service;
      if (!serve_scenario.empty()) {
        std::cout << "scenario " << service.load(read_json(serve_scenario)) << '\n';
      }
      std::cout << "listening on " << host << ':' << port << std::endl;
      if (!service.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ':' << port << '\n';
        return kRuntime;
      }
    }
  } catch (const coglo::Error& e) {
    std::cerr << coglo::to_string(e.code()) << ": " << e.what() << '\n';
    const bool input = e.code() == coglo::ErrorCode::validation ||
                       e.code() == coglo::ErrorCode::not_found;
    return input ? kValidation : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return 0;
}
