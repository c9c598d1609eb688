#pragma once

#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "thetastream/cis/types.hpp"
#include "thetastream/theta/broker.hpp"

namespace thetastream::cis {

// Outbound message for one recommendation.
struct Notification {
  std::string vehicle_id;
  std::string station_id;
  double price_per_liter = 0.0;
  double expected_fill_cost = 0.0;
};

// Wire shape {"vehicleid","station_id","price","expected_cost"}.
engine::Value to_value(const Notification& n);
Notification notification_from_value(const engine::Value& v);

// True on success; false or a throw leaves the message unacked for a retry.
using DeliverFn = std::function<bool(const Notification&)>;

// Queues one message per recommendation, stamped with the producing batch so
// consumers can suppress replays.
void publish_notifications(theta::Broker& broker, const std::string& topic, long long batch_id,
                           const std::vector<Recommendation>& recs, long long now_ms);

// Drains the notification topic and hands each message to the transport.
// Acks only after a successful delivery, so failures redeliver; a
// (writer_batch_id, vehicle_id) already delivered is acked without a second
// send. Net effect: exactly one outbound message per recommendation, even
// across replayed batches and transport retries.
class NotificationSink {
 public:
  NotificationSink(theta::Broker* broker, std::string group, std::string topic, DeliverFn deliver);

  // Settles what is deliverable now; returns how many messages were acked.
  int drain(long long now_ms);

  long long delivered() const { return delivered_; }
  long long suppressed() const { return suppressed_; }

 private:
  theta::Broker* broker_;
  std::string group_;
  std::string topic_;
  DeliverFn deliver_;
  std::set<std::pair<std::string, std::string>> seen_;  // (writer_batch_id, vehicle_id)
  long long delivered_ = 0;
  long long suppressed_ = 0;
};

}  // namespace thetastream::cis
