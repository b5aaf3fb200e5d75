#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "promptguard/predictor.hpp"

namespace promptguard::service {

inline constexpr std::size_t kMaxTextBytes = 32 * 1024;
inline constexpr std::size_t kQueueBound = 64;
inline constexpr std::size_t kMaxBodyBytes = 1 << 20;
inline constexpr const char* kDefaultListen = "127.0.0.1:8722";

struct Response {
  int status = 200;
  std::string body;  // always JSON
};

// Request handling without any socket code, so it can be driven directly.
// The predictor is immutable once installed; an exclusive embedder is
// serialised behind a mutex with at most kQueueBound callers waiting.
class GuardService {
 public:
  explicit GuardService(std::size_t queue_bound = kQueueBound) : queue_bound_(queue_bound) {}
  ~GuardService();

  void set_predictor(std::shared_ptr<const Predictor> predictor);
  // Runs `loader` on a background thread; /healthz answers 503 until it
  // returns. A loader exception is kept and reported by load_error().
  void load_async(std::function<std::shared_ptr<const Predictor>()> loader);
  bool ready() const;
  std::string load_error() const;
  // Blocks until an async load finishes; rethrows its exception.
  void wait_loaded();

  Response handle_classify(std::string_view body) const;
  Response handle_health() const;
  // Callers currently waiting for the exclusive embedder.
  std::size_t queued() const { return waiting_.load(); }

 private:
  std::shared_ptr<const Predictor> predictor() const;

  std::size_t queue_bound_;
  mutable std::mutex state_mu_;
  std::shared_ptr<const Predictor> predictor_;
  std::string load_error_;
  std::future<void> loading_;

  mutable std::mutex embed_mu_;
  mutable std::atomic<std::size_t> waiting_{0};
};

struct ListenAddress {
  std::string host;
  int port = 0;
};
// "host:port"; a bare ":port" means 127.0.0.1.
ListenAddress parse_listen(std::string_view spec);

// HTTP front end: POST /v1/classify, GET /healthz, 404 elsewhere.
class HttpServer {
 public:
  explicit HttpServer(GuardService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free port. Returns the bound port.
  int bind(const ListenAddress& address);
  // Serves until stop(). Blocking.
  void run();
  // bind() + run() on a background thread.
  int start(const ListenAddress& address);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptguard::service
