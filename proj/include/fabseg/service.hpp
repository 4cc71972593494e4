#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "fabseg/corpus.hpp"

namespace fabseg {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8787;  // 0 picks a free port
  int workers = 2;  // compute jobs in flight
  double sync_seconds = 10.0;       // longer segment jobs answer 202 and are polled
  double session_idle_hours = 24.0;
  std::string persist_dir;          // write-through session state when set
  std::string cors_origin = "*";
  std::uint64_t seed = 0;
  long default_resolution = 25000;  // faces, for /process without a body
};

/// HTTP JSON API over the pipeline. Sessions are keyed by the X-Session-Id
/// request header ("default" when absent).
class Service {
 public:
  Service(ServiceOptions options, std::shared_ptr<const CorpusIndex> corpus);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket and returns the port.
  int bind();
  /// Serves until stop(); call bind() first.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fabseg
