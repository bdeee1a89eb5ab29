// Command line front end: simulation grids, sensitivity sweeps, schema
// validation, offline recommendations and the HTTP service.
//
// Exit codes: 0 success, 2 validation, 3 runtime/numerical.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "procrm/api_service.hpp"
#include "procrm/json_io.hpp"
#include "procrm/sim_engine.hpp"
#include "procrm/trial_store.hpp"

namespace fs = std::filesystem;
using namespace procrm;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_configuration:
    case ErrorCode::validation:
    case ErrorCode::not_found:
    case ErrorCode::integrity:
    case ErrorCode::conflict:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

// Error message with "file:line:" prefix when the failure points into a file.
std::string located(const Error& e, const std::string& file, const std::string& text) {
  if (const auto* field = dynamic_cast<const FieldError*>(&e); field != nullptr && !text.empty()) {
    try {
      const auto lines = json_pointer_lines(text);
      std::string pointer = field->pointer();
      // Fall back to the closest enclosing value that exists in the text.
      while (true) {
        const auto it = lines.find(pointer);
        if (it != lines.end()) return file + ":" + std::to_string(it->second) + ": " + e.what();
        const auto slash = pointer.find_last_of('/');
        if (slash == std::string::npos) break;
        pointer.resize(slash);
      }
    } catch (...) {
    }
  }
  return file + ": " + e.what();
}

std::string fixed(double v, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, v);
  return buffer;
}

// Shortest text that parses back to the same double.
std::string exact(double v) {
  char buffer[64];
  const auto r = std::to_chars(buffer, buffer + sizeof buffer, v);
  return std::string(buffer, r.ptr);
}

std::string csv_header(int levels) {
  std::string h = "scenario,design,n,true_dose";
  for (int j = 1; j <= levels; ++j) h += ",sel_" + std::to_string(j);
  return h + ",pcs,no_od,no_pat_dlt,no_clin_dlt,no_mtd,duration_weeks";
}

std::string csv_row(const std::string& scenario, DesignKind kind, int n, const OperatingCharacteristics& oc) {
  std::string row = scenario + "," + std::string(display_name(kind)) + "," + std::to_string(n) + "," +
                    (oc.true_dose ? std::to_string(*oc.true_dose) : std::string("none"));
  for (double p : oc.selection_pct) row += "," + fixed(p, 1);
  row += "," + fixed(oc.pcs, 1) + "," + fixed(oc.mean_overdose_patients, 2) + "," +
         fixed(oc.mean_pat_dlt, 2) + "," + fixed(oc.mean_clin_dlt, 2) + "," +
         fixed(oc.mean_mtd_patients, 2) + "," + fixed(oc.mean_duration_weeks, 2);
  return row;
}

std::vector<DesignKind> parse_designs(const std::string& list) {
  std::vector<DesignKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "all") {
      out = {DesignKind::tite_crm, DesignKind::pro_crm, DesignKind::tite_pro_crm,
             DesignKind::tite_crm_plus_pro};
      continue;
    }
    if (!item.empty()) out.push_back(parse_design_kind(item));
  }
  if (out.empty()) fail(ErrorCode::validation, "no designs given");
  return out;
}

struct Inputs {
  std::vector<Scenario> scenarios;
  std::optional<DesignConfig> base_design;
};

Inputs read_inputs(const std::string& scenarios_file, const std::string& design_file) {
  Inputs in;
  {
    const std::string text = read_text_file(scenarios_file);
    try {
      in.scenarios = scenario_set_from_json(parse_json_text(text, scenarios_file));
    } catch (const Error& e) {
      throw Error(e.code(), located(e, scenarios_file, text));
    }
  }
  if (!design_file.empty()) {
    const std::string text = read_text_file(design_file);
    try {
      in.base_design = design_config_from_json(parse_json_text(text, design_file));
    } catch (const Error& e) {
      throw Error(e.code(), located(e, design_file, text));
    }
  }
  return in;
}

DesignConfig design_for(const Inputs& in, DesignKind kind, int n) {
  DesignConfig d = in.base_design ? *in.base_design : reference_design(kind, n);
  d.kind = kind;
  return d;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::state, "cannot write '" + path.string() + "'");
  out << content;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  return s;
}

struct SimulateArgs {
  std::string scenarios;
  std::string design_config;
  std::string designs = "all";
  int replicates = 2000;
  std::uint64_t seed = 20240101;
  std::string out = "out";
  int n = 18;
  int threads = 1;
  std::string format = "csv";
  std::vector<std::string> only;
};

int cmd_simulate(const SimulateArgs& a) {
  const Inputs in = read_inputs(a.scenarios, a.design_config);
  const auto kinds = parse_designs(a.designs);
  fs::create_directories(a.out);

  std::string table;
  json all = json::array();
  bool header = false;
  for (const auto& scenario : in.scenarios) {
    if (!a.only.empty() && std::find(a.only.begin(), a.only.end(), scenario.name) == a.only.end()) continue;
    for (const auto kind : kinds) {
      SimJob job{scenario, design_for(in, kind, a.n), a.replicates, a.seed};
      const auto oc = run_simulation(job, a.threads);
      const int levels = job.design.dose_levels();
      if (!header) {
        table = csv_header(levels) + "\n";
        header = true;
      }
      const std::string row = csv_row(scenario.name, kind, job.design.n_max, oc);
      table += row + "\n";
      const std::string stem = safe_name(scenario.name) + "_" + std::string(to_string(kind));
      if (a.format == "json") {
        json cell = {{"scenario", scenario.name}, {"design", display_name(kind)}, {"result", to_json(oc)}};
        write_file(fs::path(a.out) / (stem + ".json"), cell.dump(2) + "\n");
        all.push_back(cell);
      } else {
        write_file(fs::path(a.out) / (stem + ".csv"), csv_header(levels) + "\n" + row + "\n");
      }
      std::cout << row << "\n";
    }
  }
  write_file(fs::path(a.out) / "table.csv", table);
  if (a.format == "json") write_file(fs::path(a.out) / "table.json", all.dump(2) + "\n");
  return 0;
}

struct SensitivityArgs {
  SimulateArgs sim;
  std::string axis;
  std::vector<double> values;
};

int cmd_sensitivity(const SensitivityArgs& a) {
  const Inputs in = read_inputs(a.sim.scenarios, a.sim.design_config);
  const auto kinds = parse_designs(a.sim.designs);
  std::vector<double> values = a.values;
  if (values.empty()) {
    if (a.axis == "accrual") values = {2.0, 4.0};
    if (a.axis == "shape") values = {1.0, 0.3, 3.0};
    if (a.axis == "theta") values = {0.1, 0.9};
  }
  std::string csv = "scenario,design,n,axis,value,pcs\n";
  for (const auto& base : in.scenarios) {
    if (!a.sim.only.empty() && std::find(a.sim.only.begin(), a.sim.only.end(), base.name) == a.sim.only.end()) {
      continue;
    }
    for (const auto kind : kinds) {
      for (double v : values) {
        Scenario s = base;
        if (a.axis == "accrual") s.accrual_per_window = v;
        if (a.axis == "shape") s.hazard_shape = v;
        if (a.axis == "theta") s.copula_theta = v;
        SimJob job{s, design_for(in, kind, a.sim.n), a.sim.replicates, a.sim.seed};
        const auto oc = run_simulation(job, a.sim.threads);
        csv += base.name + "," + std::string(display_name(kind)) + "," + std::to_string(job.design.n_max) +
               "," + a.axis + "," + exact(v) + "," + fixed(oc.pcs, 1) + "\n";
      }
    }
  }
  if (a.sim.out == "-") {
    std::cout << csv;
  } else {
    const fs::path out(a.sim.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, csv);
    std::cout << csv;
  }
  return 0;
}

int cmd_validate(const std::string& file) {
  const std::string text = read_text_file(file);
  try {
    const json j = parse_json_text(text, file);
    std::string schema = j.is_object() && j.contains("schema") && j["schema"].is_string()
                             ? j["schema"].get<std::string>()
                             : "";
    if (schema.empty() && j.is_object()) {
      if (j.contains("scenarios")) schema = "scenario_set";
      else if (j.contains("events")) schema = "trial_document";
      else if (j.contains("n_replicates")) schema = "sim_job";
      else if (j.contains("clin_probs")) schema = "scenario";
      else schema = "design_config";
    }
    if (schema == "scenario_set") {
      scenario_set_from_json(j);
    } else if (schema == "trial_document") {
      trial_document_from_json(j);
    } else if (schema == "sim_job") {
      sim_job_from_json(j);
    } else if (schema == "scenario") {
      scenario_from_json(j);
    } else if (schema == "design_config") {
      design_config_from_json(j);
    } else {
      throw FieldError(ErrorCode::validation, "/schema", "unknown schema '" + schema + "'");
    }
    std::cout << file << ": valid " << schema << "\n";
  } catch (const Error& e) {
    throw Error(e.code(), located(e, file, text));
  }
  return 0;
}

int cmd_recommend(const std::string& file, std::optional<double> at, const std::string& format) {
  const TrialDocument doc = load(file);
  const double when = at ? *at : doc.state().now;
  const Recommendation rec = recommendation(doc, when);
  if (format == "json") {
    std::cout << to_json(rec, doc.state().config).dump(2) << "\n";
  } else {
    std::cout << (rec.phase == Recommendation::Phase::next ? "next_dose " : "final_dose ")
              << rec.decision.dose << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dose-finding with clinician- and patient-reported toxicity"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto add_sim_options = [](CLI::App* cmd, SimulateArgs& a) {
    cmd->add_option("--scenarios", a.scenarios, "Scenario set file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--design-config", a.design_config, "Design settings (kind is overridden)");
    cmd->add_option("--designs", a.designs, "Comma-separated design kinds or 'all'");
    cmd->add_option("--replicates", a.replicates, "Replicates per cell")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Base seed");
    cmd->add_option("--n", a.n, "Sample size preset (18, 30, 40)");
    cmd->add_option("--threads", a.threads, "Worker threads (0 = all cores)");
    cmd->add_option("--scenario", a.only, "Restrict to named scenarios");
  };

  auto* simulate = app.add_subcommand("simulate", "Operating characteristics per scenario and design");
  add_sim_options(simulate, sim);
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--format", sim.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  SensitivityArgs sens;
  auto* sensitivity = app.add_subcommand("sensitivity", "PCS grid along one data-generation axis");
  add_sim_options(sensitivity, sens.sim);
  sens.sim.designs = "TITE_PRO_CRM";
  sensitivity->add_option("--axis", sens.axis, "accrual, shape or theta")
      ->required()
      ->check(CLI::IsMember({"accrual", "shape", "theta"}));
  sensitivity->add_option("--values", sens.values, "Override the default axis values");
  sensitivity->add_option("--out", sens.sim.out, "Output CSV file ('-' for stdout)");
  sens.sim.out = "-";

  ServiceOptions service;
  std::string data_dir = "trials";
  std::string ui_dir;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--port", service.port, "Listen port")->envname("PROCRM_PORT");
  serve->add_option("--host", service.host, "Bind address")->envname("PROCRM_HOST");
  serve->add_option("--data-dir", data_dir, "Trial document directory")->envname("PROCRM_DATA_DIR");
  serve->add_option("--workers", service.workers, "Simulation worker threads")->envname("PROCRM_WORKERS");
  serve->add_option("--ui-dir", ui_dir, "Static UI assets")->envname("PROCRM_UI_DIR");
  serve->add_option("--cors-origin", service.cors_origin, "Allowed browser origin")
      ->envname("PROCRM_CORS_ORIGIN");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a configuration or trial document");
  validate->add_option("file", validate_file)->required();

  std::string trial_file;
  std::optional<double> at;
  std::string rec_format = "text";
  auto* recommend = app.add_subcommand("recommend", "Next dose for a persisted trial document");
  recommend->add_option("--trial", trial_file)->required();
  recommend->add_option("--at", at, "Decision time in trial weeks (default: document clock)");
  recommend->add_option("--format", rec_format)->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*sensitivity) return cmd_sensitivity(sens);
    if (*validate) return cmd_validate(validate_file);
    if (*recommend) return cmd_recommend(trial_file, at, rec_format);
    if (*serve) {
      service.data_dir = data_dir;
      if (!ui_dir.empty()) service.ui_dir = ui_dir;
      ApiService api(service);
      std::cerr << "listening on " << service.host << ":" << service.port << "\n";
      return api.listen() ? 0 : kExitRuntime;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "] " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
