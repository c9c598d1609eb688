#include "thetastream/cis/http_stubs.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "httplib.h"

namespace thetastream::cis {

struct PriceStubServer::Impl {
  std::map<std::string, PriceTable> tables;
  httplib::Server svr;
  std::thread th;
  int port = 0;
  std::atomic<long long> hits{0};
};

PriceStubServer::PriceStubServer(std::map<std::string, PriceTable> tables) : impl_(new Impl) {
  impl_->tables = std::move(tables);
  impl_->svr.Get(R"(/prices/([^/]+))", [impl = impl_.get()](const httplib::Request& req,
                                                            httplib::Response& res) {
    ++impl->hits;
    auto it = impl->tables.find(req.matches[1]);
    if (it == impl->tables.end()) {
      res.status = 404;
      return;
    }
    engine::Value body = engine::Value::object();
    for (const auto& [kind, price] : it->second) body[to_string(kind)] = price;
    res.set_content(body.dump(), "application/json");
  });
  impl_->port = impl_->svr.bind_to_any_port("127.0.0.1");
  impl_->th = std::thread([impl = impl_.get()] { impl->svr.listen_after_bind(); });
  impl_->svr.wait_until_ready();
}

PriceStubServer::~PriceStubServer() {
  impl_->svr.stop();
  impl_->th.join();
}

int PriceStubServer::port() const { return impl_->port; }

long long PriceStubServer::hits() const { return impl_->hits.load(); }

struct NotifyStubServer::Impl {
  httplib::Server svr;
  std::thread th;
  int port = 0;
  std::atomic<int> fail_remaining{0};
  mutable std::mutex mu;
  std::vector<engine::Value> received;
};

NotifyStubServer::NotifyStubServer() : impl_(new Impl) {
  impl_->svr.Post("/notify", [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) {
    if (impl->fail_remaining.load() > 0) {
      --impl->fail_remaining;
      res.status = 500;
      return;
    }
    auto doc = engine::Value::parse(req.body, nullptr, false);
    if (doc.is_discarded()) {
      res.status = 400;
      return;
    }
    {
      std::lock_guard<std::mutex> lock(impl->mu);
      impl->received.push_back(std::move(doc));
    }
    res.set_content("{\"ok\":true}", "application/json");
  });
  impl_->port = impl_->svr.bind_to_any_port("127.0.0.1");
  impl_->th = std::thread([impl = impl_.get()] { impl->svr.listen_after_bind(); });
  impl_->svr.wait_until_ready();
}

NotifyStubServer::~NotifyStubServer() {
  impl_->svr.stop();
  impl_->th.join();
}

int NotifyStubServer::port() const { return impl_->port; }

void NotifyStubServer::fail_next(int n) { impl_->fail_remaining = n; }

std::vector<engine::Value> NotifyStubServer::received() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  return impl_->received;
}

PriceFetchFn http_price_fetch(std::string host, int port) {
  return [host = std::move(host), port](const std::string& station_id) -> std::optional<PriceTable> {
    httplib::Client cli(host, port);
    auto res = cli.Get("/prices/" + station_id);
    if (!res || res->status != 200) return std::nullopt;
    auto doc = engine::Value::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    PriceTable table;
    for (const auto& [key, value] : doc.items()) {
      auto kind = fuel_kind_from(key);
      if (kind && value.is_number()) table[*kind] = value.get<double>();
    }
    return table;
  };
}

DeliverFn http_notify_deliver(std::string host, int port) {
  return [host = std::move(host), port](const Notification& n) {
    httplib::Client cli(host, port);
    auto res = cli.Post("/notify", to_value(n).dump(), "application/json");
    return res && res->status == 200;
  };
}

}  // namespace thetastream::cis
