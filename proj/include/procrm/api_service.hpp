#pragma once

// HTTP/JSON front end over the trial store and the simulation engine.
//
//   POST /trials                         DesignConfig -> {trial_id, document}
//   GET  /trials/{id}                    trial document
//   POST /trials/{id}/events             event without seq -> applied event
//   GET  /trials/{id}/recommendation     ?at=<weeks>
//   POST /simulations                    SimJob -> {job_id}
//   GET  /simulations/{id}               {status, result?}

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "procrm/json_io.hpp"
#include "procrm/sim_engine.hpp"
#include "procrm/trial_store.hpp"

namespace httplib {
class Server;
}

namespace procrm {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8173;
  std::filesystem::path data_dir = "trials";
  int workers = 2;
  std::string cors_origin = "http://localhost:8173";
  std::optional<std::filesystem::path> ui_dir;
};

// HTTP status and machine code for an engine error.
int http_status(ErrorCode code);
json error_body(const Error& error);

// Bounded pool of simulation workers with an in-memory job registry.
class SimulationJobs {
 public:
  enum class Status { queued, running, done, failed };

  explicit SimulationJobs(int workers);
  ~SimulationJobs();
  SimulationJobs(const SimulationJobs&) = delete;
  SimulationJobs& operator=(const SimulationJobs&) = delete;

  std::string submit(SimJob job);
  // Throws not_found for unknown ids.
  json status(const std::string& id) const;

 private:
  struct Entry {
    SimJob job;
    Status status = Status::queued;
    std::optional<OperatingCharacteristics> result;
    std::string error;
  };

  void work(std::stop_token stop);

  mutable std::mutex mutex_;
  std::condition_variable_any ready_;
  std::deque<std::string> queue_;
  std::map<std::string, Entry> entries_;
  long counter_ = 0;
  std::vector<std::jthread> workers_;
};

class ApiService {
 public:
  explicit ApiService(ServiceOptions options);
  ~ApiService();

  // Binds and serves until stop(); returns false if the port cannot be bound.
  bool listen();
  // Binds to an ephemeral port and serves on a background thread.
  int start_background();
  void stop();

  TrialStore& store() { return store_; }
  SimulationJobs& jobs() { return jobs_; }

 private:
  void routes();

  ServiceOptions options_;
  TrialStore store_;
  SimulationJobs jobs_;
  std::unique_ptr<httplib::Server> server_;
  std::thread background_;
};

}  // namespace procrm
