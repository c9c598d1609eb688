#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "thetastream/cis/notify.hpp"
#include "thetastream/cis/prices.hpp"

namespace thetastream::cis {

// Loopback price service: GET /prices/<station_id> answers
// {"e5":…,"e10":…,"diesel":…} (only the kinds the station sells), 404 for
// unknown stations. Listens on an ephemeral 127.0.0.1 port.
class PriceStubServer {
 public:
  explicit PriceStubServer(std::map<std::string, PriceTable> tables);
  ~PriceStubServer();

  int port() const;
  long long hits() const;  // requests served, cache-miss meter for tests

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Loopback receiver for POST /notify bodies
// {"vehicleid":…,"station_id":…,"price":…,"expected_cost":…}.
class NotifyStubServer {
 public:
  NotifyStubServer();
  ~NotifyStubServer();

  int port() const;
  // The next n posts answer 500 and are dropped; exercises redelivery.
  void fail_next(int n);
  std::vector<engine::Value> received() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// PriceCache fetch function backed by GET /prices/<id>; nullopt on any
// non-200 answer or transport error.
PriceFetchFn http_price_fetch(std::string host, int port);

// Delivery via POST /notify; true only on a 200 answer.
DeliverFn http_notify_deliver(std::string host, int port);

}  // namespace thetastream::cis
