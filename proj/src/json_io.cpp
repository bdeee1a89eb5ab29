#include "procrm/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace procrm {

namespace {

std::string escape_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

const char* type_label(const json& v) { return v.type_name(); }

// Minimal scanner recording the line on which every value starts.
class LineScanner {
 public:
  explicit LineScanner(std::string_view text) : text_(text) {}

  std::map<std::string, int> run() {
    skip_ws();
    value("");
    return std::move(lines_);
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') {
        ++line_;
      } else if (c != ' ' && c != '\t' && c != '\r') {
        break;
      }
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        out += text_[pos_ + 1];
        pos_ += 2;
        continue;
      }
      out += text_[pos_++];
    }
    ++pos_;  // closing quote
    return out;
  }

  void value(const std::string& pointer) {
    if (pos_ >= text_.size()) return;
    lines_.emplace(pointer, line_);
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string_token();
        skip_ws();
        ++pos_;  // colon
        skip_ws();
        value(pointer + "/" + escape_token(key));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      int index = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(pointer + "/" + std::to_string(index++));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && std::string_view(",}] \t\r\n").find(text_[pos_]) == std::string_view::npos) {
        ++pos_;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

template <typename F>
auto with_pointer(const std::string& pointer, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FieldError&) {
    throw;
  } catch (const Error& e) {
    throw FieldError(e.code(), pointer, e.what());
  }
}

}  // namespace

ObjectReader::ObjectReader(const json& value, std::string pointer)
    : value_(value), pointer_(std::move(pointer)) {
  if (!value_.is_object()) {
    throw FieldError(ErrorCode::validation, pointer_,
                     std::string("expected an object, found ") + type_label(value_));
  }
}

std::string ObjectReader::pointer_to(std::string_view key) const {
  return pointer_ + "/" + escape_token(key);
}

void ObjectReader::error(std::string_view key, const std::string& message) const {
  throw FieldError(ErrorCode::validation, pointer_to(key), message);
}

const json* ObjectReader::find(std::string_view key) {
  const auto it = value_.find(std::string(key));
  if (it == value_.end()) return nullptr;
  seen_.emplace_back(key);
  return &*it;
}

const json& ObjectReader::require(std::string_view key) {
  const json* v = find(key);
  if (v == nullptr) error(key, "missing required field");
  return *v;
}

double ObjectReader::number(std::string_view key) {
  const json& v = require(key);
  if (!v.is_number()) error(key, std::string("expected a number, found ") + type_label(v));
  return v.get<double>();
}

double ObjectReader::number_or(std::string_view key, double fallback) {
  return find(key) != nullptr ? number(key) : fallback;
}

int ObjectReader::integer(std::string_view key) {
  const json& v = require(key);
  if (!v.is_number_integer()) error(key, std::string("expected an integer, found ") + type_label(v));
  return v.get<int>();
}

int ObjectReader::integer_or(std::string_view key, int fallback) {
  return find(key) != nullptr ? integer(key) : fallback;
}

std::uint64_t ObjectReader::unsigned_integer(std::string_view key) {
  const json& v = require(key);
  if (!v.is_number_unsigned()) error(key, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool ObjectReader::boolean_or(std::string_view key, bool fallback) {
  const json* v = find(key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) error(key, std::string("expected a boolean, found ") + type_label(*v));
  return v->get<bool>();
}

std::string ObjectReader::string(std::string_view key) {
  const json& v = require(key);
  if (!v.is_string()) error(key, std::string("expected a string, found ") + type_label(v));
  return v.get<std::string>();
}

std::string ObjectReader::string_or(std::string_view key, std::string fallback) {
  return find(key) != nullptr ? string(key) : fallback;
}

std::vector<double> ObjectReader::numbers(std::string_view key) {
  const json& v = require(key);
  if (!v.is_array()) error(key, std::string("expected an array, found ") + type_label(v));
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw FieldError(ErrorCode::validation, pointer_to(key) + "/" + std::to_string(i),
                       "expected a number");
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

void ObjectReader::header(std::string_view schema) {
  if (find("schema") != nullptr && string("schema") != schema) {
    error("schema", "expected schema '" + std::string(schema) + "'");
  }
  if (find("version") != nullptr && string("version") != kSchemaVersion) {
    error("version", "unsupported version, expected \"" + std::string(kSchemaVersion) + "\"");
  }
}

void ObjectReader::finish() const {
  for (auto it = value_.begin(); it != value_.end(); ++it) {
    if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
      error(it.key(), "unknown field");
    }
  }
}

json to_json(const DesignConfig& c) {
  return {
      {"kind", to_string(c.kind)},
      {"n_max", c.n_max},
      {"window", c.window},
      {"clinician_target", c.clinician_target.value()},
      {"patient_target", c.patient_target.value()},
      {"clinician_skeleton", c.clinician_skeleton.values()},
      {"patient_skeleton", c.patient_skeleton.values()},
      {"clinician_prior_sd", c.clinician_prior.sd()},
      {"patient_prior_sd", c.patient_prior.sd()},
      {"start_dose", c.start_dose},
      {"no_skip", c.no_skip},
  };
}

DesignConfig design_config_from_json(const json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  r.header("design_config");
  DesignConfig c;
  const std::string kind = r.string("kind");
  c.kind = with_pointer(r.pointer_to("kind"), [&] { return parse_design_kind(kind); });
  c.n_max = r.integer("n_max");
  c.window = r.number("window");
  auto target = [&](std::string_view key) {
    const double v = r.number(key);
    return with_pointer(r.pointer_to(key), [&] { return ToxicityTarget(v); });
  };
  auto skeleton = [&](std::string_view key) {
    auto v = r.numbers(key);
    return with_pointer(r.pointer_to(key), [&] { return Skeleton(std::move(v)); });
  };
  auto prior = [&](std::string_view key) {
    const double v = r.number(key);
    return with_pointer(r.pointer_to(key), [&] { return PriorSpec(v); });
  };
  c.clinician_target = target("clinician_target");
  c.patient_target = target("patient_target");
  c.clinician_skeleton = skeleton("clinician_skeleton");
  c.patient_skeleton = skeleton("patient_skeleton");
  c.clinician_prior = prior("clinician_prior_sd");
  c.patient_prior = prior("patient_prior_sd");
  c.start_dose = r.integer_or("start_dose", 1);
  c.no_skip = r.boolean_or("no_skip", true);
  r.finish();
  with_pointer(pointer, [&] { c.validate(); });
  return c;
}

json to_json(const Scenario& s) {
  return {
      {"name", s.name},
      {"clin_probs", s.clin_probs},
      {"pat_probs", s.pat_probs},
      {"hazard_shape", s.hazard_shape},
      {"copula_theta", s.copula_theta},
      {"accrual_per_window", s.accrual_per_window},
  };
}

Scenario scenario_from_json(const json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  r.header("scenario");
  Scenario s;
  s.name = r.string_or("name", "");
  s.clin_probs = r.numbers("clin_probs");
  s.pat_probs = r.numbers("pat_probs");
  s.hazard_shape = r.number_or("hazard_shape", 1.0);
  s.copula_theta = r.number_or("copula_theta", 0.1);
  s.accrual_per_window = r.number_or("accrual_per_window", 2.0);
  r.finish();
  with_pointer(pointer, [&] { s.validate(); });
  return s;
}

json scenario_set_to_json(const std::vector<Scenario>& scenarios) {
  json list = json::array();
  for (const auto& s : scenarios) list.push_back(to_json(s));
  return {{"schema", "scenario_set"}, {"version", kSchemaVersion}, {"scenarios", list}};
}

std::vector<Scenario> scenario_set_from_json(const json& j) {
  ObjectReader r(j, "");
  r.header("scenario_set");
  const json& list = r.require("scenarios");
  if (!list.is_array() || list.empty()) r.error("scenarios", "expected a non-empty array");
  std::vector<Scenario> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.push_back(scenario_from_json(list[i], "/scenarios/" + std::to_string(i)));
  }
  r.finish();
  return out;
}

json to_json(const SimJob& job) {
  return {{"scenario", to_json(job.scenario)},
          {"design", to_json(job.design)},
          {"n_replicates", job.n_replicates},
          {"seed", job.seed}};
}

SimJob sim_job_from_json(const json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  r.header("sim_job");
  SimJob job;
  job.scenario = scenario_from_json(r.require("scenario"), r.pointer_to("scenario"));
  job.design = design_config_from_json(r.require("design"), r.pointer_to("design"));
  job.n_replicates = r.integer("n_replicates");
  if (job.n_replicates < 1) r.error("n_replicates", "must be at least 1");
  job.seed = r.unsigned_integer("seed");
  r.finish();
  if (job.scenario.clin_probs.size() != static_cast<std::size_t>(job.design.dose_levels())) {
    throw FieldError(ErrorCode::invalid_configuration, pointer + "/scenario",
                     "scenario and design disagree on the number of dose levels");
  }
  return job;
}

json to_json(const OperatingCharacteristics& oc) {
  return {
      {"n_replicates", oc.n_replicates},
      {"true_dose", oc.true_dose ? json(*oc.true_dose) : json(nullptr)},
      {"selection_pct", oc.selection_pct},
      {"pcs", oc.pcs},
      {"mean_overdose_patients", oc.mean_overdose_patients},
      {"mean_mtd_patients", oc.mean_mtd_patients},
      {"mean_clin_dlt", oc.mean_clin_dlt},
      {"mean_pat_dlt", oc.mean_pat_dlt},
      {"mean_duration_weeks", oc.mean_duration_weeks},
  };
}

std::map<std::string, int> json_pointer_lines(std::string_view text) { return LineScanner(text).run(); }

json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::validation, std::string(what) + ": " + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace procrm
