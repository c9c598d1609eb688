#include "thetastream/stream/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace thetastream::stream {

using engine::Value;

namespace {

constexpr char kWalMagic[4] = {'T', 'S', 'W', 'L'};
constexpr char kCkptMagic[4] = {'T', 'S', 'C', 'K'};
constexpr std::uint8_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void write_json_frame(std::ostream& os, const Value& v) {
  const std::string bytes = v.dump();
  put_u32(os, static_cast<std::uint32_t>(bytes.size()));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Reads one frame; returns false on clean EOF or a torn tail.
bool read_json_frame(std::istream& is, Value& out, const char* what) {
  std::uint32_t len = 0;
  if (!get_u32(is, len)) return false;
  std::string bytes(len, '\0');
  if (!is.read(bytes.data(), static_cast<std::streamsize>(len))) return false;
  try {
    out = Value::parse(bytes);
  } catch (const std::exception&) {
    throw WalError(std::string(what) + ": corrupt frame");
  }
  return true;
}

}  // namespace

// --- write-ahead log ---

WriteAheadLog::WriteAheadLog(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) {
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw WalError("cannot create log at " + path_);
    out.write(kWalMagic, 4);
    out.put(static_cast<char>(kFormatVersion));
    return;
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kWalMagic, 4) != 0)
    throw WalError("bad log header in " + path_);
  int version = in.get();
  if (version != kFormatVersion)
    throw WalError("unsupported log version " + std::to_string(version));
  Value frame;
  while (read_json_frame(in, frame, "log")) ingest_frame(frame);
}

void WriteAheadLog::ingest_frame(const Value& v) {
  frames_++;
  const std::string kind = v.at("k").get<std::string>();
  if (kind == "m") {
    WalMessage m;
    m.stream = v.at("s").get<std::string>();
    m.source_id = v.at("id").get<std::string>();
    m.payload = v.at("p");
    m.recv_ms = v.at("t").get<long long>();
    sources_.insert({m.stream, m.source_id});
    messages_.push_back(std::move(m));
  } else if (kind == "b") {
    WalSeal s;
    s.batch_id = v.at("id").get<long long>();
    s.seal_ms = v.at("t").get<long long>();
    for (const auto& [stream, ids] : v.at("m").items())
      s.members[stream] = ids.get<std::vector<std::string>>();
    seals_.push_back(std::move(s));
  } else {
    throw WalError("log: unknown frame kind '" + kind + "'");
  }
}

void WriteAheadLog::write_frame(const Value& v) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw WalError("cannot append to log at " + path_);
  write_json_frame(out, v);
  frames_++;
}

void WriteAheadLog::append_message(const WalMessage& m) {
  write_frame(Value{{"k", "m"}, {"s", m.stream}, {"id", m.source_id}, {"p", m.payload},
                    {"t", m.recv_ms}});
  sources_.insert({m.stream, m.source_id});
  messages_.push_back(m);
}

void WriteAheadLog::append_seal(const WalSeal& s) {
  Value members = Value::object();
  for (const auto& [stream, ids] : s.members) members[stream] = ids;
  write_frame(Value{{"k", "b"}, {"id", s.batch_id}, {"t", s.seal_ms}, {"m", members}});
  seals_.push_back(s);
}

// --- checkpoints ---

std::string write_checkpoint(const std::string& dir, const CheckpointImage& img) {
  const fs::path snap = fs::path(dir) / ("ckpt-" + std::to_string(img.created_ms));
  fs::create_directories(snap);

  std::ofstream bin(snap / "state.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot write " + (snap / "state.bin").string());
  bin.write(kCkptMagic, 4);
  bin.put(static_cast<char>(kFormatVersion));
  put_u32(bin, static_cast<std::uint32_t>(img.state_ops.size() + img.window_ops.size()));
  for (const auto& [node, entries] : img.state_ops) {
    put_u32(bin, static_cast<std::uint32_t>(node));
    bin.put(0);
    put_u32(bin, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries)
      write_json_frame(bin, Value{{"k", e.key}, {"s", e.state}, {"t", e.last_update_ms}});
  }
  for (const auto& [node, entries] : img.window_ops) {
    put_u32(bin, static_cast<std::uint32_t>(node));
    bin.put(1);
    put_u32(bin, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) write_json_frame(bin, Value{{"t", e.seal_ms}, {"i", e.items}});
  }

  std::ofstream meta(snap / "meta");
  meta << "created_ms=" << img.created_ms << "\n"
       << "epoch=" << img.epoch << "\n"
       << "last_batch=" << img.last_batch << "\n"
       << "wal_frames=" << img.wal_frames << "\n";
  return snap.string();
}

CheckpointImage load_latest_checkpoint(const std::string& dir) {
  long long best_ts = -1;
  fs::path best;
  if (fs::exists(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("ckpt-", 0) != 0) continue;
      long long ts = std::stoll(name.substr(5));
      if (ts > best_ts) {
        best_ts = ts;
        best = entry.path();
      }
    }
  }
  if (best_ts < 0) throw NoCheckpoint();

  CheckpointImage img;
  std::ifstream meta(best / "meta");
  if (!meta) throw CheckpointError("missing meta in " + best.string());
  std::string line;
  while (std::getline(meta, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const long long val = std::stoll(line.substr(eq + 1));
    if (key == "created_ms") img.created_ms = val;
    else if (key == "epoch") img.epoch = val;
    else if (key == "last_batch") img.last_batch = val;
    else if (key == "wal_frames") img.wal_frames = val;
  }

  std::ifstream bin(best / "state.bin", std::ios::binary);
  if (!bin) throw CheckpointError("missing state.bin in " + best.string());
  char magic[4];
  if (!bin.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw CheckpointError("bad snapshot header in " + best.string());
  if (bin.get() != kFormatVersion) throw CheckpointError("unsupported snapshot version");
  std::uint32_t sections = 0;
  if (!get_u32(bin, sections)) throw CheckpointError("truncated snapshot");
  for (std::uint32_t s = 0; s < sections; ++s) {
    std::uint32_t node = 0, count = 0;
    if (!get_u32(bin, node)) throw CheckpointError("truncated snapshot");
    const int kind = bin.get();
    if (!get_u32(bin, count)) throw CheckpointError("truncated snapshot");
    for (std::uint32_t i = 0; i < count; ++i) {
      Value v;
      if (!read_json_frame(bin, v, "snapshot")) throw CheckpointError("truncated snapshot");
      if (kind == 0) {
        img.state_ops[static_cast<int>(node)].push_back(
            {v.at("k"), v.at("s"), v.at("t").get<long long>()});
      } else {
        img.window_ops[static_cast<int>(node)].push_back(
            {v.at("t").get<long long>(), v.at("i").get<std::vector<Value>>()});
      }
    }
  }
  return img;
}

// --- streaming context ---

StreamingContext::StreamingContext(theta::Broker* broker, StreamingConfig cfg,
                                   cluster::Cluster* cluster)
    : broker_(broker), cfg_(std::move(cfg)), cluster_(cluster) {
  if (cluster_) ectx_.set_runner(&cluster_->pool());
}

StreamId StreamingContext::add_op(StreamOp op) {
  require_not_started();
  op.id = static_cast<int>(ops_.size());
  ops_.push_back(std::move(op));
  return ops_.back().id;
}

const StreamingContext::StreamOp& StreamingContext::op(StreamId s) const {
  if (s < 0 || s >= static_cast<int>(ops_.size()))
    throw StreamError("unknown stream " + std::to_string(s));
  return ops_[s];
}

void StreamingContext::require_not_started() const {
  if (running_) throw StreamError("the stream topology is fixed once started");
}

void StreamingContext::note(long long t_ms, const std::string& line) {
  notes_.push_back("t=" + std::to_string(t_ms) + " " + line);
}

StreamId StreamingContext::receiver_stream(const std::string& name, const std::string& topic,
                                           long long interval_ms, Reliability rel) {
  require_not_started();
  if (interval_ms < 100 || interval_ms > 10000) throw IntervalOutOfRange(interval_ms);
  if (interval_ != 0 && interval_ms != interval_) throw IntervalMismatch(interval_, interval_ms);
  for (const auto& o : ops_)
    if (o.kind == StreamOp::Kind::Receiver && o.name == name)
      throw StreamError("duplicate receiver name '" + name + "'");
  interval_ = interval_ms;
  StreamOp op;
  op.kind = StreamOp::Kind::Receiver;
  op.interval_ms = interval_ms;
  op.name = name;
  op.topic = topic;
  op.reliability = rel;
  return add_op(std::move(op));
}

StreamId StreamingContext::map(StreamId parent, const std::string& fn_id) {
  StreamOp o;
  o.kind = StreamOp::Kind::Map;
  o.parents = {parent};
  o.fn_id = fn_id;
  o.interval_ms = op(parent).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::filter(StreamId parent, const std::string& fn_id) {
  StreamOp o;
  o.kind = StreamOp::Kind::Filter;
  o.parents = {parent};
  o.fn_id = fn_id;
  o.interval_ms = op(parent).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::flat_map(StreamId parent, const std::string& fn_id) {
  StreamOp o;
  o.kind = StreamOp::Kind::FlatMap;
  o.parents = {parent};
  o.fn_id = fn_id;
  o.interval_ms = op(parent).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::transform_whole(StreamId parent, const std::string& fn_id) {
  StreamOp o;
  o.kind = StreamOp::Kind::TransformWhole;
  o.parents = {parent};
  o.fn_id = fn_id;
  o.interval_ms = op(parent).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::union_streams(StreamId a, StreamId b) {
  if (op(a).interval_ms != op(b).interval_ms)
    throw IntervalMismatch(op(a).interval_ms, op(b).interval_ms);
  StreamOp o;
  o.kind = StreamOp::Kind::Union;
  o.parents = {a, b};
  o.interval_ms = op(a).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::join_streams(StreamId a, StreamId b) {
  if (op(a).interval_ms != op(b).interval_ms)
    throw IntervalMismatch(op(a).interval_ms, op(b).interval_ms);
  StreamOp o;
  o.kind = StreamOp::Kind::Join;
  o.parents = {a, b};
  o.interval_ms = op(a).interval_ms;
  return add_op(std::move(o));
}

StreamId StreamingContext::window(StreamId parent, long long window_ms, long long slide_ms) {
  const long long cadence = op(parent).interval_ms;
  if (window_ms <= 0 || slide_ms <= 0)
    throw InvalidWindow("window and slide must be positive");
  if (window_ms % cadence != 0 || slide_ms % cadence != 0)
    throw InvalidWindow("window and slide must be multiples of the " + std::to_string(cadence) +
                        "ms cadence");
  if (slide_ms < cadence) throw InvalidWindow("slide cannot be shorter than the cadence");
  StreamOp o;
  o.kind = StreamOp::Kind::Window;
  o.parents = {parent};
  o.window_ms = window_ms;
  o.slide_ms = slide_ms;
  o.interval_ms = slide_ms;  // downstream cadence follows the slide
  return add_op(std::move(o));
}

StreamId StreamingContext::update_state_by_key(StreamId parent, const std::string& state_fn_id,
                                               int state_partitions, long long ttl_ms) {
  if (state_partitions < 1) throw StreamError("state needs at least one partition");
  StreamOp o;
  o.kind = StreamOp::Kind::UpdateState;
  o.parents = {parent};
  o.fn_id = state_fn_id;
  o.state_partitions = state_partitions;
  o.ttl_ms = ttl_ms;
  o.interval_ms = op(parent).interval_ms;
  return add_op(std::move(o));
}

void StreamingContext::foreach_batch(StreamId s, const std::string& sink_id) {
  require_not_started();
  op(s);
  if (!sink_fns_.count(sink_id)) throw StreamError("unknown sink '" + sink_id + "'");
  sinks_.push_back({s, sink_id});
}

void StreamingContext::add_transform(const std::string& id, TransformWholeFn fn) {
  transforms_[id] = std::move(fn);
}
void StreamingContext::add_state_fn(const std::string& id, StateFn fn) {
  state_fns_[id] = std::move(fn);
}
void StreamingContext::add_sink(const std::string& id, SinkFn fn) {
  sink_fns_[id] = std::move(fn);
}

int StreamingContext::task_partitions() const {
  if (cluster_) return std::max(1, cluster_->pool().alive_task_slots());
  return 2;
}

std::string StreamingContext::group_for(const StreamOp& r) const {
  return cfg_.group + "/" + r.name;
}

void StreamingContext::reserve_cores_and_subscribe() {
  bool any_receiver = false;
  for (const auto& o : ops_) {
    if (o.kind != StreamOp::Kind::Receiver) continue;
    any_receiver = true;
    if (cluster_) {
      try {
        receiver_cores_.push_back(cluster_->pool().reserve_slot());
      } catch (const cluster::ClusterError&) {
        release_cores();
        throw NoFreeCore("receiver '" + o.name + "' found no free core");
      }
    }
    broker_->subscribe(group_for(o), o.topic);
  }
  if (!any_receiver) throw StreamError("no receiver declared");
  if (cluster_ && cluster_->pool().alive_task_slots() < 1) {
    release_cores();
    throw NoFreeCore("receivers occupy every core; batch tasks need one");
  }
}

void StreamingContext::release_cores() {
  if (cluster_)
    for (const auto& s : receiver_cores_) cluster_->pool().release_slot(s);
  receiver_cores_.clear();
}

void StreamingContext::start(long long t0_ms) {
  require_not_started();
  for (const auto& o : ops_)
    if (o.kind == StreamOp::Kind::Receiver && o.reliability == Reliability::Reliable &&
        cfg_.wal_path.empty())
      throw StreamError("reliable receiver '" + o.name + "' needs a write-ahead log path");
  reserve_cores_and_subscribe();
  if (!cfg_.wal_path.empty()) wal_ = std::make_unique<WriteAheadLog>(cfg_.wal_path);
  now_ = t0_ms;
  last_finish_ = t0_ms;
  last_ckpt_ = t0_ms;
  epoch_ = 0;
  seq_ = 0;
  running_ = true;
  note(t0_ms, "stream context started, interval " + std::to_string(interval_) + "ms");
}

void StreamingContext::ingest_up_to(long long t_ms) {
  if (!running_) return;
  for (const auto& o : ops_) {
    if (o.kind != StreamOp::Kind::Receiver) continue;
    const std::string g = group_for(o);
    broker_->redeliver_expired(g, o.topic, t_ms);
    if (o.reliability == Reliability::Reliable) {
      while (auto env = broker_->consume(g, o.topic, t_ms)) {
        if (wal_->has_source(o.name, env->message_id)) {
          broker_->ack(g, env->delivery_id);  // replayed duplicate, already logged
          continue;
        }
        Value payload = Value::parse(env->payload);
        wal_->append_message({o.name, env->message_id, payload, t_ms});
        broker_->ack(g, env->delivery_id);
        pending_[o.name].push_back({env->message_id, std::move(payload)});
      }
    } else {
      while (auto env = broker_->consume_fire_and_forget(g, o.topic, t_ms))
        pending_[o.name].push_back({env->message_id, Value::parse(env->payload)});
    }
  }
}

void StreamingContext::advance(long long to_ms) {
  if (!running_) return;
  long long next = (now_ / interval_ + 1) * interval_;
  while (next <= to_ms) {
    tick(next);
    next += interval_;
  }
}

void StreamingContext::tick(long long t_ms) {
  now_ = t_ms;
  ingest_up_to(t_ms);
  seal_and_run(t_ms);
  maybe_checkpoint(t_ms);
}

void StreamingContext::seal_and_run(long long t_ms) {
  seq_++;
  const long long batch_id = epoch_ * 1000000 + seq_;

  std::map<std::string, std::vector<Value>> members;
  WalSeal seal;
  seal.batch_id = batch_id;
  seal.seal_ms = t_ms;
  for (const auto& o : ops_) {
    if (o.kind != StreamOp::Kind::Receiver) continue;
    auto& buf = pending_[o.name];
    auto& items = members[o.name];
    items.reserve(buf.size());
    if (o.reliability == Reliability::Reliable) {
      auto& ids = seal.members[o.name];
      for (auto& [src, payload] : buf) {
        ids.push_back(src);
        items.push_back(std::move(payload));
      }
    } else {
      for (auto& [src, payload] : buf) items.push_back(std::move(payload));
    }
    buf.clear();
  }
  if (wal_ && !seal.members.empty()) wal_->append_seal(seal);
  run_batch(batch_id, t_ms, std::move(members), false);
}

std::vector<Value> StreamingContext::run_collect(engine::DatasetId ds, BatchExec& bx) {
  auto items = ectx_.collect(ds);
  bx.modeled_ms += ectx_.last_action_modeled_ms();
  return items;
}

std::optional<engine::DatasetId> StreamingContext::eval(StreamId s, BatchExec& bx) {
  auto hit = bx.memo.find(s);
  if (hit != bx.memo.end()) return hit->second;

  const StreamOp& o = ops_[s];
  std::optional<engine::DatasetId> out;
  switch (o.kind) {
    case StreamOp::Kind::Receiver: {
      out = ectx_.parallelize(bx.receiver_items[o.name], task_partitions());
      break;
    }
    case StreamOp::Kind::Map: {
      if (auto p = eval(o.parents[0], bx)) out = ectx_.map(*p, o.fn_id);
      break;
    }
    case StreamOp::Kind::Filter: {
      if (auto p = eval(o.parents[0], bx)) out = ectx_.filter(*p, o.fn_id);
      break;
    }
    case StreamOp::Kind::FlatMap: {
      if (auto p = eval(o.parents[0], bx)) out = ectx_.flat_map(*p, o.fn_id);
      break;
    }
    case StreamOp::Kind::TransformWhole: {
      if (auto p = eval(o.parents[0], bx)) {
        auto items = run_collect(*p, bx);
        auto fn = transforms_.find(o.fn_id);
        if (fn == transforms_.end()) throw StreamError("unknown transform '" + o.fn_id + "'");
        out = ectx_.parallelize(fn->second(items), task_partitions());
      }
      break;
    }
    case StreamOp::Kind::Union: {
      auto a = eval(o.parents[0], bx);
      auto b = eval(o.parents[1], bx);
      if (a && b) out = ectx_.union_all({*a, *b});
      else if (a) out = a;
      else if (b) out = b;
      break;
    }
    case StreamOp::Kind::Join: {
      auto a = eval(o.parents[0], bx);
      auto b = eval(o.parents[1], bx);
      if (a && b) out = ectx_.join(*a, *b);
      break;
    }
    case StreamOp::Kind::Window: {
      // the parent runs every tick so the buffer stays warm even off-slide
      if (auto p = eval(o.parents[0], bx)) {
        auto items = run_collect(*p, bx);
        retained_[s].push_back({bx.seal_ms, std::move(items)});
      }
      auto& buf = retained_[s];
      while (!buf.empty() && buf.front().seal_ms <= bx.seal_ms - o.window_ms) buf.pop_front();
      if (bx.seal_ms % o.slide_ms == 0) {
        std::vector<Value> all;
        for (const auto& e : buf) all.insert(all.end(), e.items.begin(), e.items.end());
        out = ectx_.parallelize(std::move(all), task_partitions());
      }
      break;
    }
    case StreamOp::Kind::UpdateState: {
      auto p = eval(o.parents[0], bx);
      if (!p) break;
      auto pairs = run_collect(*p, bx);
      auto fn = state_fns_.find(o.fn_id);
      if (fn == state_fns_.end()) throw StreamError("unknown state function '" + o.fn_id + "'");
      auto& parts = state_[s];
      parts.resize(o.state_partitions);

      // new values grouped per key, keyed by dump for deterministic order
      std::map<std::string, std::pair<Value, std::vector<Value>>> fresh;
      for (const auto& kv : pairs) {
        if (!engine::is_pair(kv)) throw engine::NotKeyed("state update over non-pair element");
        fresh[kv[0].dump()].first = kv[0];
        fresh[kv[0].dump()].second.push_back(kv[1]);
      }

      long long invoked = 0;
      for (int pi = 0; pi < o.state_partitions; ++pi) {
        auto& cells = parts[pi];
        // idle entries past the ttl expire unseen, before any update
        if (o.ttl_ms >= 0) {
          for (auto it = cells.begin(); it != cells.end();) {
            if (bx.seal_ms - it->second.last_update_ms > o.ttl_ms) it = cells.erase(it);
            else ++it;
          }
        }
        std::map<std::string, std::pair<const Value*, const std::vector<Value>*>> agenda;
        for (const auto& [dump, cell] : cells) agenda[dump] = {&cell.key, nullptr};
        for (const auto& [dump, kv] : fresh) {
          if (engine::key_partition(kv.first, o.state_partitions) != pi) continue;
          agenda[dump] = {&kv.first, &kv.second};
        }
        static const std::vector<Value> kNoValues;
        for (const auto& [dump, entry] : agenda) {
          invoked++;
          const Value& key = *entry.first;
          const std::vector<Value>& vals = entry.second ? *entry.second : kNoValues;
          auto cell = cells.find(dump);
          std::optional<Value> prior;
          if (cell != cells.end()) prior = cell->second.state;
          auto next = fn->second(key, vals, prior);
          if (!next) {
            if (cell != cells.end()) cells.erase(cell);
            continue;
          }
          auto& slot = cells[dump];
          slot.key = key;
          slot.state = std::move(*next);
          if (!vals.empty() || cell == cells.end()) slot.last_update_ms = bx.seal_ms;
        }
      }
      bx.modeled_ms += static_cast<double>(invoked) * cfg_.per_state_key_ms;

      std::vector<Value> live;
      for (const auto& cells : parts)
        for (const auto& [dump, cell] : cells) live.push_back(Value::array({cell.key, cell.state}));
      out = ectx_.parallelize(std::move(live), o.state_partitions);
      break;
    }
  }
  bx.memo[s] = out;
  return out;
}

void StreamingContext::run_batch(long long batch_id, long long seal_ms,
                                 std::map<std::string, std::vector<Value>> members,
                                 bool replayed) {
  BatchExec bx;
  bx.seal_ms = seal_ms;
  bx.receiver_items = std::move(members);
  long long received = 0;
  for (const auto& [name, items] : bx.receiver_items) received += items.size();

  if (cluster_) cluster_->pool().reset_assignment_log();
  for (const auto& [sid, sink_id] : sinks_) {
    auto ds = eval(sid, bx);
    if (!ds) continue;  // off-slide tick: no batch for this stream
    auto items = run_collect(*ds, bx);
    bx.processed += static_cast<long long>(items.size());
    sink_fns_.at(sink_id)(batch_id, items);
  }

  BatchStats st;
  st.batch_id = batch_id;
  st.seal_ms = seal_ms;
  st.received = received;
  st.processed = bx.processed;
  st.replayed = replayed;
  st.duration_ms = bx.modeled_ms + pending_penalty_ms_;
  pending_penalty_ms_ = 0.0;
  for (const auto& b : stats_)
    if (b.start_ms >= seal_ms) st.waiting_at_seal++;
  st.start_ms = std::max(seal_ms, last_finish_);
  st.finish_ms = st.start_ms + static_cast<long long>(std::llround(st.duration_ms));
  stats_.push_back(st);
  assignments_.push_back(cluster_ ? cluster_->pool().assignment_log()
                                  : std::vector<cluster::TaskAssignment>{});
  last_finish_ = st.finish_ms;
  last_processed_batch_ = std::max(last_processed_batch_, batch_id);
}

int StreamingContext::waiting_batches() const {
  int n = 0;
  for (const auto& b : stats_)
    if (b.start_ms > now_) n++;
  return n;
}

CheckpointImage StreamingContext::build_image(long long t_ms) const {
  CheckpointImage img;
  img.created_ms = t_ms;
  img.epoch = epoch_;
  img.last_batch = last_processed_batch_;
  img.wal_frames = wal_ ? wal_->frames() : 0;
  for (const auto& [node, parts] : state_) {
    auto& entries = img.state_ops[node];
    for (const auto& cells : parts)
      for (const auto& [dump, cell] : cells)
        entries.push_back({cell.key, cell.state, cell.last_update_ms});
  }
  for (const auto& [node, buf] : retained_) {
    auto& entries = img.window_ops[node];
    entries.assign(buf.begin(), buf.end());
  }
  return img;
}

void StreamingContext::checkpoint_now() {
  if (cfg_.checkpoint_dir.empty()) throw CheckpointError("no checkpoint directory configured");
  if (cluster_) {
    const int alive = static_cast<int>(cluster_->pool().alive_workers().size());
    if (alive < cfg_.replication_factor) throw ReplicationFailed(alive, cfg_.replication_factor);
  }
  write_checkpoint(cfg_.checkpoint_dir, build_image(now_));
  last_ckpt_ = now_;
  note(now_, "checkpoint written through batch " + std::to_string(last_processed_batch_));
}

void StreamingContext::maybe_checkpoint(long long t_ms) {
  if (cfg_.checkpoint_dir.empty()) return;
  if (t_ms - last_ckpt_ < cfg_.checkpoint_every_ms) return;
  try {
    checkpoint_now();
  } catch (const ReplicationFailed& e) {
    note(t_ms, std::string("checkpoint skipped: ") + e.what());
    last_ckpt_ = t_ms;  // retry next period, not every tick
  }
}

void StreamingContext::on_driver_killed(long long t_ms) {
  if (!running_) return;
  ingest_up_to(t_ms);  // intake until the crash instant; only the log survives
  pending_.clear();
  release_cores();
  running_ = false;
  note(t_ms, "driver lost; volatile receiver buffers dropped");
}

void StreamingContext::restore(long long restart_ms) {
  if (running_) throw StreamError("restore needs a stopped context");
  if (!cfg_.wal_path.empty()) wal_ = std::make_unique<WriteAheadLog>(cfg_.wal_path);

  bool have_snapshot = false;
  CheckpointImage img;
  if (!cfg_.checkpoint_dir.empty()) {
    try {
      img = load_latest_checkpoint(cfg_.checkpoint_dir);
      have_snapshot = true;
    } catch (const NoCheckpoint&) {
    }
  }

  if (have_snapshot) {
    epoch_ = img.epoch + 1;
    last_processed_batch_ = img.last_batch;
    for (const auto& [node, entries] : img.state_ops) {
      const StreamOp& o = op(node);
      auto& parts = state_[node];
      parts.assign(o.state_partitions, {});
      for (const auto& e : entries) {
        auto& cell = parts[engine::key_partition(e.key, o.state_partitions)][e.key.dump()];
        cell.key = e.key;
        cell.state = e.state;
        cell.last_update_ms = e.last_update_ms;
      }
    }
    for (const auto& [node, entries] : img.window_ops)
      retained_[node].assign(entries.begin(), entries.end());
  } else {
    long long max_sealed = 0;
    if (wal_)
      for (const auto& s : wal_->seals()) max_sealed = std::max(max_sealed, s.batch_id);
    epoch_ = max_sealed / 1000000 + 1;
    last_processed_batch_ = -1;
  }

  seq_ = 0;
  now_ = restart_ms;
  last_finish_ = restart_ms;
  last_ckpt_ = restart_ms;
  pending_penalty_ms_ = 0.0;
  reserve_cores_and_subscribe();
  running_ = true;
  note(restart_ms, "restored into epoch " + std::to_string(epoch_) +
                       (have_snapshot ? " from snapshot" : " from log only"));

  if (!wal_) return;
  // sealed-but-uncovered batches run again now, under their original ids
  std::map<std::pair<std::string, std::string>, const Value*> by_source;
  for (const auto& m : wal_->messages()) by_source[{m.stream, m.source_id}] = &m.payload;
  std::set<std::pair<std::string, std::string>> sealed;
  for (const auto& s : wal_->seals()) {
    for (const auto& [stream, ids] : s.members)
      for (const auto& id : ids) sealed.insert({stream, id});
    if (s.batch_id <= last_processed_batch_) continue;
    std::map<std::string, std::vector<Value>> members;
    for (const auto& [stream, ids] : s.members) {
      auto& items = members[stream];
      for (const auto& id : ids) {
        auto it = by_source.find({stream, id});
        if (it == by_source.end()) throw WalError("seal names a message the log lacks");
        items.push_back(*it->second);
      }
    }
    run_batch(s.batch_id, s.seal_ms, std::move(members), true);
    note(restart_ms, "replayed batch " + std::to_string(s.batch_id));
  }
  // logged but never sealed: feed into the next new batch
  for (const auto& m : wal_->messages())
    if (!sealed.count({m.stream, m.source_id})) pending_[m.stream].push_back({m.source_id, m.payload});
}

void StreamingContext::on_worker_killed(const std::string& worker, long long t_ms) {
  if (!cluster_ || stats_.empty()) return;

  int running = -1;
  for (int i = static_cast<int>(stats_.size()) - 1; i >= 0; --i) {
    if (stats_[i].start_ms <= t_ms && t_ms < stats_[i].finish_ms) {
      running = i;
      break;
    }
  }

  double task_ms = 0.0, lineage_ms = 0.0;
  long long parts = 0, stages = 0, lineage_batches = 0;
  for (int i = 0; i < static_cast<int>(stats_.size()); ++i) {
    const bool since_snapshot = stats_[i].seal_ms > last_ckpt_ && stats_[i].seal_ms <= t_ms;
    if (!since_snapshot && i != running) continue;
    std::set<int> hit_stages;
    for (const auto& a : assignments_[i]) {
      if (a.worker != worker) continue;
      parts++;
      hit_stages.insert(a.stage_seq);
      if (i == running) task_ms += a.cost_ms;
    }
    stages += static_cast<long long>(hit_stages.size());
    if (i != running && since_snapshot) {
      lineage_ms += stats_[i].duration_ms;
      lineage_batches++;
    }
  }

  const double penalty = task_ms + lineage_ms;
  if (running >= 0) {
    stats_[running].duration_ms += penalty;
    stats_[running].finish_ms += static_cast<long long>(std::llround(penalty));
    last_finish_ = std::max(last_finish_, stats_[running].finish_ms);
  } else {
    pending_penalty_ms_ += penalty;
  }
  auto& m = cluster_->metrics_mut();
  m.recomputed_stages += stages + lineage_batches;
  m.partitions_reexecuted += parts;
  note(t_ms, "worker " + worker + " lost: re-running " + std::to_string(parts) +
                 " task(s), re-deriving " + std::to_string(lineage_batches) +
                 " batch(es) since the last snapshot");
}

std::size_t StreamingContext::state_size(StreamId s) const {
  auto it = state_.find(s);
  if (it == state_.end()) return 0;
  std::size_t n = 0;
  for (const auto& cells : it->second) n += cells.size();
  return n;
}

std::vector<StateEntry> StreamingContext::state_entries(StreamId s) const {
  std::vector<StateEntry> out;
  auto it = state_.find(s);
  if (it == state_.end()) return out;
  for (const auto& cells : it->second)
    for (const auto& [dump, cell] : cells) out.push_back({cell.key, cell.state, cell.last_update_ms});
  return out;
}

}  // namespace thetastream::stream
