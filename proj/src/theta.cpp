#include "thetastream/theta/app_service.hpp"
#include "thetastream/theta/broker.hpp"
#include "thetastream/theta/immutable_store.hpp"
#include "thetastream/theta/serving_view.hpp"

#include <filesystem>

namespace thetastream::theta {

// --- broker ---

void Broker::publish(const std::string& topic, const std::string& message_id,
                     std::string payload, long long now_ms) {
  Stored s{message_id, std::move(payload), now_ms, 0};
  topics_[topic].push_back(s);
  for (auto& [key, q] : queues_) {
    if (key.first != topic) continue;
    q.pending.push_back(s);
    q.seen++;
  }
}

void Broker::subscribe(const std::string& group, const std::string& topic) {
  queues_.try_emplace({topic, group});
}

Broker::GroupQueue& Broker::queue(const std::string& group, const std::string& topic) {
  return queues_[{topic, group}];
}

std::optional<Envelope> Broker::consume(const std::string& group, const std::string& topic,
                                        long long now_ms) {
  auto& q = queue(group, topic);
  if (q.pending.empty()) return std::nullopt;
  Stored s = q.pending.front();
  q.pending.pop_front();
  Envelope env;
  env.delivery_id = next_delivery_id_++;
  env.message_id = s.message_id;
  env.topic = topic;
  env.payload = s.payload;
  env.publish_ts = s.publish_ts;
  env.redelivery_count = s.redeliveries;
  q.unacked.emplace(env.delivery_id, std::make_pair(s, now_ms + kVisibilityTimeoutMs));
  delivery_route_[env.delivery_id] = {topic, group};
  return env;
}

std::optional<Envelope> Broker::consume_fire_and_forget(const std::string& group,
                                                        const std::string& topic,
                                                        long long /*now_ms*/) {
  auto& q = queue(group, topic);
  if (q.pending.empty()) return std::nullopt;
  Stored s = q.pending.front();
  q.pending.pop_front();
  Envelope env;
  env.delivery_id = next_delivery_id_++;
  env.message_id = s.message_id;
  env.topic = topic;
  env.payload = s.payload;
  env.publish_ts = s.publish_ts;
  env.redelivery_count = s.redeliveries;
  q.acked++;  // settled at delivery: no ack protocol, no redelivery
  return env;
}

void Broker::ack(const std::string& group, long long delivery_id) {
  auto route = delivery_route_.find(delivery_id);
  if (route == delivery_route_.end() || route->second.second != group)
    throw UnknownDelivery(delivery_id);
  auto& q = queues_.at({route->second.first, group});
  auto it = q.unacked.find(delivery_id);
  if (it == q.unacked.end()) throw UnknownDelivery(delivery_id);
  q.unacked.erase(it);
  q.acked++;
  delivery_route_.erase(route);
}

void Broker::redeliver_expired(const std::string& group, const std::string& topic,
                               long long now_ms) {
  auto& q = queue(group, topic);
  // Collect expired in delivery order, then push to the queue front so the
  // oldest expired message is consumed first.
  std::vector<long long> expired;
  for (auto& [id, entry] : q.unacked)
    if (entry.second <= now_ms) expired.push_back(id);
  for (auto it = expired.rbegin(); it != expired.rend(); ++it) {
    auto entry = q.unacked.at(*it);
    entry.first.redeliveries++;
    q.pending.push_front(entry.first);
    q.unacked.erase(*it);
    delivery_route_.erase(*it);
  }
}

TopicGroupStats Broker::stats(const std::string& group, const std::string& topic) const {
  TopicGroupStats st;
  auto it = queues_.find({topic, group});
  if (it == queues_.end()) return st;
  st.pending = it->second.pending.size();
  st.unacked = it->second.unacked.size();
  st.acked = it->second.acked;
  st.published = it->second.seen;
  return st;
}

std::size_t Broker::published_total(const std::string& topic) const {
  auto it = topics_.find(topic);
  return it == topics_.end() ? 0 : it->second.size();
}

// --- immutable store ---

ImmutableStore::ImmutableStore(const std::string& log_path) {
  namespace fs = std::filesystem;
  if (fs::exists(log_path) && fs::file_size(log_path) > 0) {
    std::ifstream in(log_path, std::ios::binary);
    char magic[4];
    std::uint8_t version = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 1);
    if (!in || std::string(magic, 4) != std::string(kMagic, 4) || version != kVersion)
      throw ThetaError("unrecognized immutable store log header: " + log_path);
    while (true) {
      std::uint32_t len = 0;
      in.read(reinterpret_cast<char*>(&len), sizeof(len));
      if (!in) break;
      std::string buf(len, '\0');
      in.read(buf.data(), len);
      if (!in) throw ThetaError("truncated immutable store log: " + log_path);
      auto j = nlohmann::json::parse(buf);
      ImmutableRecord rec{j.at("seq").get<std::uint64_t>(), j.at("ts").get<long long>(),
                          j.at("payload")};
      collections_[j.at("collection").get<std::string>()].push_back(std::move(rec));
    }
    log_.open(log_path, std::ios::binary | std::ios::app);
  } else {
    if (auto dir = fs::path(log_path).parent_path(); !dir.empty())
      fs::create_directories(dir);
    log_.open(log_path, std::ios::binary | std::ios::trunc);
    log_.write(kMagic, 4);
    char v = static_cast<char>(kVersion);
    log_.write(&v, 1);
    log_.flush();
  }
  if (!log_) throw ThetaError("cannot open immutable store log: " + log_path);
}

ImmutableStore::~ImmutableStore() = default;

std::uint64_t ImmutableStore::append(const std::string& collection, nlohmann::json payload,
                                     long long ts) {
  auto& col = collections_[collection];
  ImmutableRecord rec{col.size() + 1, ts, std::move(payload)};
  col.push_back(rec);
  if (log_.is_open()) persist(collection, rec);
  return rec.seq;
}

void ImmutableStore::persist(const std::string& collection, const ImmutableRecord& rec) {
  nlohmann::json j{{"collection", collection},
                   {"seq", rec.seq},
                   {"ts", rec.append_ts},
                   {"payload", rec.payload}};
  const std::string buf = j.dump();
  const std::uint32_t len = static_cast<std::uint32_t>(buf.size());
  log_.write(reinterpret_cast<const char*>(&len), sizeof(len));
  log_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  log_.flush();
}

const std::vector<ImmutableRecord>& ImmutableStore::scan(const std::string& collection) const {
  auto it = collections_.find(collection);
  return it == collections_.end() ? empty_ : it->second;
}

std::vector<ImmutableRecord> ImmutableStore::scan_if(
    const std::string& collection,
    const std::function<bool(const ImmutableRecord&)>& pred) const {
  std::vector<ImmutableRecord> out;
  for (const auto& rec : scan(collection))
    if (pred(rec)) out.push_back(rec);
  return out;
}

std::uint64_t ImmutableStore::size(const std::string& collection) const {
  return scan(collection).size();
}

// --- serving view ---

bool ServingView::upsert(const std::string& table, const std::string& key,
                         nlohmann::json columns, long long writer_batch_id) {
  auto& t = tables_[table];
  if (!t.applied.insert({writer_batch_id, key}).second) return false;  // replay
  t.rows[key] = ViewRow{key, std::move(columns), writer_batch_id};
  return true;
}

std::optional<ViewRow> ServingView::query(const std::string& table,
                                          const std::string& key) const {
  auto t = tables_.find(table);
  if (t == tables_.end()) return std::nullopt;
  auto r = t->second.rows.find(key);
  if (r == t->second.rows.end()) return std::nullopt;
  return r->second;
}

std::size_t ServingView::row_count(const std::string& table) const {
  auto t = tables_.find(table);
  return t == tables_.end() ? 0 : t->second.rows.size();
}

std::size_t ServingView::applied_writes(const std::string& table) const {
  auto t = tables_.find(table);
  return t == tables_.end() ? 0 : t->second.applied.size();
}

// --- app service ---

void run_app_service(const std::string& name, const AppServiceBindings& bindings,
                     const std::function<void(AppServiceContext&)>& body) {
  if (!bindings.messaging) throw MissingBinding("messaging");
  if (!bindings.immutable_store) throw MissingBinding("immutable_store");
  AppServiceContext ctx{name, *bindings.messaging, *bindings.immutable_store,
                        bindings.serving_view};
  body(ctx);
}

}  // namespace thetastream::theta
