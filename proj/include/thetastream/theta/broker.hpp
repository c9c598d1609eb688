#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace thetastream::theta {

struct ThetaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownDelivery : ThetaError {
  explicit UnknownDelivery(long long id)
      : ThetaError("ack for unknown or already-settled delivery " + std::to_string(id)) {}
};

// One delivery attempt of a published message.
struct Envelope {
  long long delivery_id = 0;   // unique per attempt
  std::string message_id;      // stable across redeliveries
  std::string topic;
  std::string payload;         // UTF-8 JSON document
  long long publish_ts = 0;    // virtual ms
  int redelivery_count = 0;
};

struct TopicGroupStats {
  std::size_t pending = 0;
  std::size_t unacked = 0;
  std::size_t acked = 0;
  std::size_t published = 0;
};

// In-memory topic broker with consumer groups and at-least-once delivery.
// A consumed message stays invisible until acked; past the visibility timeout
// it returns to the front of the pending queue with redelivery_count + 1.
// Fire-and-forget consumption (ack-free sources) is settled at delivery.
class Broker {
 public:
  static constexpr long long kVisibilityTimeoutMs = 5000;

  void publish(const std::string& topic, const std::string& message_id,
               std::string payload, long long now_ms);

  // Registers the group if new. Groups see messages published after their
  // first subscription.
  void subscribe(const std::string& group, const std::string& topic);

  std::optional<Envelope> consume(const std::string& group, const std::string& topic,
                                  long long now_ms);
  // At-most-once variant: message is settled immediately, never redelivered.
  std::optional<Envelope> consume_fire_and_forget(const std::string& group,
                                                  const std::string& topic,
                                                  long long now_ms);

  void ack(const std::string& group, long long delivery_id);

  // Moves visibility-expired deliveries back to pending. Deterministic given
  // call order; the simulation calls this on every clock tick.
  void redeliver_expired(const std::string& group, const std::string& topic,
                         long long now_ms);

  TopicGroupStats stats(const std::string& group, const std::string& topic) const;
  std::size_t published_total(const std::string& topic) const;

 private:
  struct Stored {
    std::string message_id;
    std::string payload;
    long long publish_ts = 0;
    int redeliveries = 0;
  };
  struct GroupQueue {
    std::deque<Stored> pending;
    // delivery_id -> (message, visibility deadline)
    std::map<long long, std::pair<Stored, long long>> unacked;
    std::size_t acked = 0;
    std::size_t seen = 0;  // published messages routed to this group
  };

  GroupQueue& queue(const std::string& group, const std::string& topic);

  std::map<std::string, std::vector<Stored>> topics_;  // retained log per topic
  // (topic, group) -> queue
  std::map<std::pair<std::string, std::string>, GroupQueue> queues_;
  // delivery -> (topic, group) for ack routing
  std::map<long long, std::pair<std::string, std::string>> delivery_route_;
  long long next_delivery_id_ = 1;
};

}  // namespace thetastream::theta
