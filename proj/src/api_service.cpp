#include "procrm/api_service.hpp"

#include <httplib.h>

namespace procrm {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& handler) {
  try {
    handler();
  } catch (const Error& e) {
    send_json(res, http_status(e.code()), error_body(e));
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
  }
}

json parse_body(const httplib::Request& req) { return parse_json_text(req.body, "request body"); }

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_configuration:
    case ErrorCode::validation:
      return 400;
    case ErrorCode::not_found:
      return 404;
    case ErrorCode::conflict:
      return 409;
    case ErrorCode::trial_complete:
    case ErrorCode::not_ready:
    case ErrorCode::state:
      return 422;
    case ErrorCode::numerical:
    case ErrorCode::integrity:
      return 500;
  }
  return 500;
}

json error_body(const Error& error) {
  json body = {{"code", to_string(error.code())}, {"message", error.what()}};
  if (const auto* field = dynamic_cast<const FieldError*>(&error)) {
    body["detail"] = {{"pointer", field->pointer()}};
  } else if (const auto* integrity = dynamic_cast<const IntegrityError*>(&error)) {
    body["detail"] = {{"first_bad_seq", integrity->first_bad_seq()}};
  }
  return {{"error", body}};
}

std::string_view to_string(SimulationJobs::Status status) {
  switch (status) {
    case SimulationJobs::Status::queued: return "queued";
    case SimulationJobs::Status::running: return "running";
    case SimulationJobs::Status::done: return "done";
    case SimulationJobs::Status::failed: return "failed";
  }
  return "unknown";
}

SimulationJobs::SimulationJobs(int workers) {
  for (int i = 0; i < std::max(1, workers); ++i) {
    workers_.emplace_back([this](std::stop_token stop) { work(stop); });
  }
}

SimulationJobs::~SimulationJobs() {
  for (auto& w : workers_) w.request_stop();
  ready_.notify_all();
}

std::string SimulationJobs::submit(SimJob job) {
  job.design.validate();
  job.scenario.validate();
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "sim-" + std::to_string(++counter_);
    Entry entry;
    entry.job = std::move(job);
    entries_[id] = std::move(entry);
    queue_.push_back(id);
  }
  ready_.notify_one();
  return id;
}

json SimulationJobs::status(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(id);
  if (it == entries_.end()) fail(ErrorCode::not_found, "unknown simulation job '" + id + "'");
  const Entry& e = it->second;
  json body = {{"job_id", id}, {"status", to_string(e.status)}, {"job", to_json(e.job)}};
  if (e.result) body["result"] = to_json(*e.result);
  if (!e.error.empty()) body["error"] = e.error;
  return body;
}

void SimulationJobs::work(std::stop_token stop) {
  while (true) {
    std::string id;
    SimJob job;
    {
      std::unique_lock lock(mutex_);
      if (!ready_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      id = queue_.front();
      queue_.pop_front();
      entries_[id].status = Status::running;
      job = entries_[id].job;
    }
    try {
      auto result = run_simulation(job, 1);
      std::lock_guard lock(mutex_);
      entries_[id].result = std::move(result);
      entries_[id].status = Status::done;
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      entries_[id].error = e.what();
      entries_[id].status = Status::failed;
    }
  }
}

ApiService::ApiService(ServiceOptions options)
    : options_(std::move(options)),
      store_(options_.data_dir),
      jobs_(options_.workers),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

ApiService::~ApiService() { stop(); }

void ApiService::routes() {
  auto& srv = *server_;
  const std::string origin = options_.cors_origin;

  srv.set_post_routing_handler([origin](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Origin") == origin) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    }
  });
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Post("/trials", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const DesignConfig config = design_config_from_json(parse_body(req));
      const TrialDocument doc = store_.create(config);
      send_json(res, 201, {{"trial_id", doc.trial_id()}, {"document", to_json(doc)}});
    });
  });

  srv.Get(R"(/trials/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(store_.get(req.matches[1]))); });
  });

  srv.Post(R"(/trials/([A-Za-z0-9_-]+)/events)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               const TrialEvent event = trial_event_from_json(parse_body(req), "", true);
               if (std::holds_alternative<TrialCreated>(event.payload)) {
                 fail(ErrorCode::validation, "trials are created through POST /trials");
               }
               send_json(res, 201, to_json(store_.append(req.matches[1], event)));
             });
           });

  srv.Get(R"(/trials/([A-Za-z0-9_-]+)/recommendation)",
          [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
              const TrialDocument doc = store_.get(req.matches[1]);
              double at = doc.state().now;
              if (req.has_param("at")) {
                const std::string text = req.get_param_value("at");
                std::size_t used = 0;
                try {
                  at = std::stod(text, &used);
                } catch (const std::exception&) {
                  used = 0;
                }
                if (used == 0 || used != text.size()) {
                  fail(ErrorCode::validation, "query parameter 'at' must be a number of weeks");
                }
              }
              send_json(res, 200, to_json(recommendation(doc, at), doc.state().config));
            });
          });

  srv.Post("/simulations", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = jobs_.submit(sim_job_from_json(parse_body(req)));
      send_json(res, 202, {{"job_id", id}});
    });
  });

  srv.Get(R"(/simulations/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, jobs_.status(req.matches[1])); });
  });

  if (options_.ui_dir && std::filesystem::is_directory(*options_.ui_dir)) {
    srv.set_mount_point("/", options_.ui_dir->string());
  }
}

bool ApiService::listen() { return server_->listen(options_.host, options_.port); }

int ApiService::start_background() {
  const int port = server_->bind_to_any_port(options_.host);
  if (port < 0) return port;
  background_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ApiService::stop() {
  if (server_) server_->stop();
  if (background_.joinable()) background_.join();
}

}  // namespace procrm
