#pragma once

// In-process message fabric hosting one coordinator and one worker per
// subgraph. Delivery is reliable and exactly-once but unordered: the
// deterministic scheduler picks the next envelope with a seeded RNG, the
// concurrent scheduler runs workers on tau threads.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dknn/coordinator.hpp"
#include "dknn/worker.hpp"

namespace dknn {

enum class SchedulerKind { Deterministic, Concurrent };

struct RuntimeConfig {
  unsigned tau = 1;
  Mode mode = Mode::PR;
  SchedulerKind scheduler = SchedulerKind::Deterministic;
  std::uint64_t seed = 0;
  // Deterministic scheduler only: deliver in FIFO order per (src, dst) pair.
  bool fifo_per_pair = false;
  // Envelope trace, one line per delivery: seq src dst kind qid.
  std::string trace_path;
  CoordinatorFaults faults;
};

struct QuerySpec {
  VertexId v_q = 0;
  std::uint32_t k = 1;
};

struct BatchResult {
  std::vector<QueryResult> results;  // submission order
  double wall_seconds = 0;
};

struct DeliveryCounters {
  std::vector<std::uint64_t> sent;      // per destination, coordinator last
  std::vector<std::uint64_t> received;
};

class Runtime {
 public:
  // spawn_topology: one worker per subgraph and one coordinator.
  Runtime(std::shared_ptr<const GraphSnapshot> snapshot, std::shared_ptr<const Topology> topology,
          std::shared_ptr<const ObjectStore> objects, RuntimeConfig config)
      : snapshot_(std::move(snapshot)),
        topology_(std::move(topology)),
        objects_(std::move(objects)),
        config_(std::move(config)),
        coordinator_(topology_, snapshot_, config_.mode, config_.faults),
        rng_(config_.seed) {
    if (config_.tau < 1) throw ValidationError("tau must be at least 1");
    if (topology_->partition.assignment.size() != snapshot_->vertex_count())
      throw ValidationError("topology does not match the snapshot");
    const WorkerOptions opts{config_.mode != Mode::EH};
    for (SubgraphId s = 0; s < topology_->subgraphs.size(); ++s)
      workers_.push_back(std::make_unique<SubgraphWorker>(s, topology_, snapshot_, objects_, opts));
    const auto m = workers_.size();
    sent_ = std::make_unique<std::atomic<std::uint64_t>[]>(m + 1);
    received_ = std::make_unique<std::atomic<std::uint64_t>[]>(m + 1);
    if (!config_.trace_path.empty()) {
      trace_.open(config_.trace_path);
      if (!trace_) throw Error("cannot open trace file " + config_.trace_path);
      trace_ << "# seq src dst kind qid\n";
    }
    if (config_.scheduler == SchedulerKind::Concurrent) {
      executors_.reserve(config_.tau);
      for (unsigned i = 0; i < config_.tau; ++i) executors_.push_back(std::make_unique<Executor>());
      for (unsigned i = 0; i < config_.tau; ++i)
        threads_.emplace_back([this, i] { executor_loop(*executors_[i]); });
    }
  }

  ~Runtime() {
    for (auto& e : executors_) {
      std::lock_guard lock(e->mu);
      e->stop = true;
      e->cv.notify_all();
    }
    for (auto& t : threads_) t.join();
  }

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  const RuntimeConfig& config() const noexcept { return config_; }
  std::size_t worker_count() const noexcept { return workers_.size(); }
  std::size_t executor_count() const noexcept {
    return config_.scheduler == SchedulerKind::Concurrent ? executors_.size() : 1;
  }
  const SubgraphWorker& worker(SubgraphId s) const { return *workers_.at(s); }
  const Coordinator& coordinator() const noexcept { return coordinator_; }
  const GraphSnapshot& snapshot() const noexcept { return *snapshot_; }
  std::shared_ptr<const GraphSnapshot> snapshot_ptr() const noexcept { return snapshot_; }
  std::shared_ptr<const ObjectStore> objects_ptr() const noexcept { return objects_; }
  const Topology& topology() const noexcept { return *topology_; }

  DeliveryCounters delivery_counters() const {
    DeliveryCounters c;
    for (std::size_t i = 0; i <= workers_.size(); ++i) {
      c.sent.push_back(sent_[i].load());
      c.received.push_back(received_[i].load());
    }
    return c;
  }

  // Submits every query and returns once all have finished and no envelope
  // remains in flight.
  BatchResult run_until_quiescent(std::span<const QuerySpec> queries) {
    BatchResult batch;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<QueryId> ids;
    ids.reserve(queries.size());

    if (config_.scheduler == SchedulerKind::Deterministic) {
      Outbox out;
      for (const auto& q : queries) {
        ids.push_back(next_qid_);
        coordinator_.submit_query(next_qid_++, q.v_q, q.k, out);
      }
      post_all(out);
      drain_deterministic();
    } else {
      {
        std::lock_guard lock(coord_mu_);
        Outbox out;
        for (const auto& q : queries) {
          ids.push_back(next_qid_);
          coordinator_.submit_query(next_qid_++, q.v_q, q.k, out);
        }
        for (auto& e : out) post(std::move(e));
      }
      drain_concurrent();
    }
    if (coordinator_.running() > 0) {
      ++watchdog_fired_;
      throw ProtocolViolation("no envelope in flight but queries unfinished:\n" +
                              coordinator_.dump_running());
    }
    batch.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::unordered_map<QueryId, QueryResult> done;
    for (auto& r : coordinator_.take_finished()) done.emplace(r.qid, std::move(r));
    for (auto id : ids) batch.results.push_back(std::move(done.at(id)));
    return batch;
  }

  // Waits for quiescence (a no-op between batches), applies the weight
  // updates and object moves, and advances every actor to the new snapshot.
  void snapshot_barrier(std::span<const WeightUpdate> updates, std::span<const MovingObject> moves) {
    auto next = std::make_shared<const GraphSnapshot>(snapshot_->apply_updates(updates));
    std::shared_ptr<const ObjectStore> objects = objects_;
    if (!moves.empty()) {
      auto copy = std::make_shared<ObjectStore>(*objects_);
      for (const auto& mv : moves) copy->move(mv.id, mv.live_vertex, mv.remaining);
      objects = std::move(copy);
    }
    coordinator_.advance_snapshot(next);
    snapshot_ = next;
    objects_ = objects;
    Outbox out;
    for (SubgraphId s = 0; s < workers_.size(); ++s)
      out.push_back({kCoordinatorId, s, SnapshotAdvance{snapshot_, objects_}});
    if (config_.scheduler == SchedulerKind::Deterministic) {
      post_all(out);
      drain_deterministic();
    } else {
      for (auto& e : out) post(std::move(e));
      drain_concurrent();
    }
  }

  std::uint64_t watchdog_fired() const noexcept { return watchdog_fired_; }
  std::uint64_t deliveries() const noexcept { return trace_seq_.load(); }

 private:
  struct Executor {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Envelope> inbox;
    bool stop = false;
  };

  void count_send(std::size_t dst_index) { sent_[dst_index].fetch_add(1, std::memory_order_relaxed); }
  void count_receive(std::size_t dst_index) {
    received_[dst_index].fetch_add(1, std::memory_order_relaxed);
  }
  std::size_t index_of(SubgraphId dst) const { return dst == kCoordinatorId ? workers_.size() : dst; }

  void trace(const Envelope& e) {
    const auto seq = trace_seq_++;
    if (!trace_.is_open()) return;
    std::lock_guard lock(trace_mu_);
    auto name = [](SubgraphId s) { return s == kCoordinatorId ? std::string("C") : std::to_string(s); };
    trace_ << seq << ' ' << name(e.src) << ' ' << name(e.dst) << ' ' << payload_kind(e.payload) << ' '
           << payload_qid(e.payload) << '\n';
  }

  // Runs one envelope at its destination and returns what it produced.
  Outbox deliver(const Envelope& e) {
    trace(e);
    count_receive(index_of(e.dst));
    Outbox out;
    if (e.dst == kCoordinatorId) {
      const auto& report = std::get<WorkerReport>(e.payload);
      coordinator_.on_report(report, out);
    } else {
      out = workers_[e.dst]->handle(e.payload);
    }
    return out;
  }

  // ---- deterministic scheduler ----

  void post_all(Outbox& out) {
    for (auto& e : out) {
      count_send(index_of(e.dst));
      pool_.push_back(std::move(e));
    }
    out.clear();
  }

  Envelope take_next() {
    if (!config_.fifo_per_pair) {
      const auto i = static_cast<std::size_t>(rng_() % pool_.size());
      std::swap(pool_[i], pool_.back());
      Envelope e = std::move(pool_.back());
      pool_.pop_back();
      return e;
    }
    // Oldest envelope of a randomly chosen (src, dst) channel.
    std::map<std::pair<SubgraphId, SubgraphId>, std::size_t> first;
    for (std::size_t i = 0; i < pool_.size(); ++i) first.try_emplace({pool_[i].src, pool_[i].dst}, i);
    auto it = first.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng_() % first.size()));
    const auto i = it->second;
    Envelope e = std::move(pool_[i]);
    pool_.erase(pool_.begin() + static_cast<std::ptrdiff_t>(i));
    return e;
  }

  void drain_deterministic() {
    while (!pool_.empty()) {
      Envelope e = take_next();
      Outbox out = deliver(e);
      post_all(out);
    }
  }

  // ---- concurrent scheduler ----

  void post(Envelope e) {
    count_send(index_of(e.dst));
    in_flight_.fetch_add(1, std::memory_order_acq_rel);
    if (e.dst == kCoordinatorId) {
      std::lock_guard lock(coord_mu_inbox_);
      coord_inbox_.push_back(std::move(e));
      coord_cv_.notify_one();
      return;
    }
    auto& ex = *executors_[e.dst % executors_.size()];
    std::lock_guard lock(ex.mu);
    ex.inbox.push_back(std::move(e));
    ex.cv.notify_one();
  }

  void finish_one() {
    if (in_flight_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      std::lock_guard lock(coord_mu_inbox_);
      coord_cv_.notify_one();
    }
  }

  void executor_loop(Executor& ex) {
    std::deque<Envelope> batch;
    for (;;) {
      {
        std::unique_lock lock(ex.mu);
        ex.cv.wait(lock, [&] { return ex.stop || !ex.inbox.empty(); });
        if (ex.stop && ex.inbox.empty()) return;
        batch.swap(ex.inbox);
      }
      for (auto& e : batch) {
        try {
          Outbox out = deliver(e);
          for (auto& o : out) post(std::move(o));
        } catch (...) {
          record_failure(std::current_exception());
        }
        finish_one();
      }
      batch.clear();
    }
  }

  // The calling thread plays the coordinator until nothing is in flight.
  void drain_concurrent() {
    std::deque<Envelope> batch;
    for (;;) {
      {
        std::unique_lock lock(coord_mu_inbox_);
        coord_cv_.wait(lock, [&] {
          return !coord_inbox_.empty() || in_flight_.load(std::memory_order_acquire) == 0;
        });
        if (coord_inbox_.empty()) break;  // quiescent
        batch.swap(coord_inbox_);
      }
      std::lock_guard lock(coord_mu_);
      for (auto& e : batch) {
        try {
          Outbox out = deliver(e);
          for (auto& o : out) post(std::move(o));
        } catch (...) {
          record_failure(std::current_exception());
        }
        finish_one();
      }
      batch.clear();
    }
    std::lock_guard lock(failure_mu_);
    if (failure_) std::rethrow_exception(std::exchange(failure_, nullptr));
  }

  std::shared_ptr<const GraphSnapshot> snapshot_;
  std::shared_ptr<const Topology> topology_;
  std::shared_ptr<const ObjectStore> objects_;
  RuntimeConfig config_;
  Coordinator coordinator_;
  std::vector<std::unique_ptr<SubgraphWorker>> workers_;
  QueryId next_qid_ = 1;

  std::mt19937_64 rng_;
  std::vector<Envelope> pool_;

  std::vector<std::unique_ptr<Executor>> executors_;
  std::vector<std::thread> threads_;
  void record_failure(std::exception_ptr p) {
    std::lock_guard lock(failure_mu_);
    if (!failure_) failure_ = p;
  }

  std::mutex coord_mu_;
  std::mutex failure_mu_;
  std::exception_ptr failure_;
  std::mutex coord_mu_inbox_;
  std::condition_variable coord_cv_;
  std::deque<Envelope> coord_inbox_;
  std::atomic<std::int64_t> in_flight_{0};

  std::unique_ptr<std::atomic<std::uint64_t>[]> sent_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> received_;
  std::mutex trace_mu_;
  std::ofstream trace_;
  std::atomic<std::uint64_t> trace_seq_{0};
  std::uint64_t watchdog_fired_ = 0;
};

}  // namespace dknn
