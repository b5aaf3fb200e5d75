#include "promptguard/service.hpp"

#include <charconv>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptguard/error.hpp"

namespace promptguard::service {

using ojson = nlohmann::ordered_json;

namespace {

Response error_response(int status, std::string_view message) {
  return {status, ojson{{"error", message}}.dump()};
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace

GuardService::~GuardService() {
  if (loading_.valid()) loading_.wait();
}

void GuardService::set_predictor(std::shared_ptr<const Predictor> predictor) {
  std::lock_guard lock(state_mu_);
  predictor_ = std::move(predictor);
}

void GuardService::load_async(std::function<std::shared_ptr<const Predictor>()> loader) {
  loading_ = std::async(std::launch::async, [this, loader = std::move(loader)] {
    try {
      set_predictor(loader());
    } catch (const std::exception& e) {
      std::lock_guard lock(state_mu_);
      load_error_ = e.what();
      throw;
    }
  });
}

bool GuardService::ready() const { return predictor() != nullptr; }

std::string GuardService::load_error() const {
  std::lock_guard lock(state_mu_);
  return load_error_;
}

void GuardService::wait_loaded() {
  if (loading_.valid()) loading_.get();
}

std::shared_ptr<const Predictor> GuardService::predictor() const {
  std::lock_guard lock(state_mu_);
  return predictor_;
}

Response GuardService::handle_health() const {
  const auto p = predictor();
  if (!p) return {503, ojson{{"status", "loading"}}.dump()};
  return {200, ojson{{"status", "ok"}, {"model_kind", to_string(p->model().model_kind())}}.dump()};
}

Response GuardService::handle_classify(std::string_view body) const {
  const auto p = predictor();
  if (!p) return error_response(503, "model not loaded");

  const auto request = ojson::parse(body.begin(), body.end(), nullptr, false);
  if (request.is_discarded() || !request.is_object()) return error_response(400, "body must be a JSON object");
  const auto it = request.find("text");
  if (it == request.end() || !it->is_string()) return error_response(400, "missing string field \"text\"");
  const auto& text = it->get_ref<const std::string&>();
  if (blank(text)) return error_response(400, "text is empty");
  if (text.size() > kMaxTextBytes) return error_response(413, "text exceeds 32 KiB");

  Decision decision{};
  try {
    if (p->exclusive()) {
      if (waiting_.fetch_add(1) >= queue_bound_) {
        waiting_.fetch_sub(1);
        return error_response(429, "queue full");
      }
      std::lock_guard lock(embed_mu_);
      waiting_.fetch_sub(1);
      decision = p->classify(text);
    } else {
      decision = p->classify(text);
    }
  } catch (const std::exception& e) {
    return error_response(500, std::string("embedder failure: ") + e.what());
  }

  ojson out;
  out["label"] = label_name(decision.label);
  out["score"] = round_score(decision.score);
  out["model_kind"] = to_string(p->model().model_kind());
  out["schema_version"] = p->model().schema_version;
  return {200, out.dump()};
}

ListenAddress parse_listen(std::string_view spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string_view::npos) throw UsageError("--listen expects host:port, got \"" + std::string(spec) + "\"");
  ListenAddress addr;
  addr.host = colon == 0 ? "127.0.0.1" : std::string(spec.substr(0, colon));
  const auto port = spec.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), addr.port);
  if (ec != std::errc{} || ptr != port.data() + port.size() || addr.port < 0 || addr.port > 65535) {
    throw UsageError("invalid port in --listen: \"" + std::string(port) + "\"");
  }
  return addr;
}

struct HttpServer::Impl {
  GuardService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(GuardService& s) : service(s) {
    server.set_payload_max_length(kMaxBodyBytes);
    server.Post("/v1/classify", [this](const httplib::Request& req, httplib::Response& res) {
      reply(res, service.handle_classify(req.body));
    });
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      reply(res, service.handle_health());
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const auto status = res.status;
        reply(res, error_response(status, status == 404 ? "not found" : httplib::status_message(status)));
      }
    });
  }

  static void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  }
};

HttpServer::HttpServer(GuardService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const ListenAddress& address) {
  int port = address.port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(address.host);
    if (port < 0) throw Error("cannot bind " + address.host);
  } else if (!impl_->server.bind_to_port(address.host, port)) {
    throw Error("cannot bind " + address.host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

int HttpServer::start(const ListenAddress& address) {
  const int port = bind(address);
  impl_->thread = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace promptguard::service
