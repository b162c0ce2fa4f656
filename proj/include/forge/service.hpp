#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <thread>
#include <string>
#include <string_view>
#include <vector>

#include "forge/autocorrect.hpp"
#include "forge/corpus.hpp"
#include "forge/hil.hpp"

namespace httplib {
class Server;
}

namespace forge {

enum class TaskStatus { Pending, Claimed, Done };
std::string_view to_string(TaskStatus s);

struct ReviewTask {
  std::string task_id;
  std::string run_id;
  std::string sample_id;
  std::string draft;
  std::vector<Table> tables;
  TaskStatus status = TaskStatus::Pending;
  std::optional<std::string> annotation;  // iff done
  std::int64_t created_ms = 0;
  std::optional<std::int64_t> claimed_ms;
  std::optional<std::int64_t> completed_ms;
};

struct ReviewRun {
  std::string run_id;
  std::string corpus_id;
  std::string strategy;  // selection strategy, or "external" for queued HIL stages
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::int64_t created_ms = 0;
  std::vector<std::string> task_ids;  // queue order
  CorrectionMemory memory;
};

using Clock = std::function<std::int64_t()>;  // milliseconds
Clock system_clock_ms();

inline constexpr std::int64_t kDefaultLeaseMs = 30LL * 60 * 1000;

// Review state rebuilt from an append-only event log (events.jsonl in the
// store directory). Every state change is one event; applying the log in
// order reproduces the state. Reads take a shared lock, changes an exclusive one.
class ReviewStore {
 public:
  // Empty `dir` keeps events in memory only.
  explicit ReviewStore(std::filesystem::path dir = {}, Clock clock = system_clock_ms(),
                       std::int64_t lease_ms = kDefaultLeaseMs);
  ~ReviewStore();
  ReviewStore(const ReviewStore&) = delete;
  ReviewStore& operator=(const ReviewStore&) = delete;

  std::string add_corpus(const Corpus& corpus);
  std::string create_run(const std::string& corpus_id, SelectionStrategy strategy, double fraction,
                         std::uint64_t seed);
  // A run over caller-chosen samples, used to queue HIL stages.
  std::string create_run_with_tasks(const std::string& corpus_id, std::span<const AnnotationTask> tasks);

  // Claims the first pending task of the run; nullopt when none is pending.
  // Claims older than the lease return to pending first.
  std::optional<ReviewTask> next_task(const std::string& run_id);

  struct SubmitResult {
    ReviewTask task;
    std::size_t rules_learned = 0;
    bool repeated = false;  // identical resubmission, nothing changed
  };
  SubmitResult submit_annotation(const std::string& task_id, const std::string& corrected_text);

  ReviewTask task(const std::string& task_id) const;
  ReviewRun run(const std::string& run_id) const;
  std::vector<ReviewTask> run_tasks(const std::string& run_id) const;
  MetricReport run_metrics(const std::string& run_id) const;
  bool has_corpus(const std::string& corpus_id) const;

  // Waits until every task of the run is done; false on timeout.
  bool wait_run_done(const std::string& run_id, std::chrono::milliseconds timeout) const;

  // Canonical JSON of the whole state, for replay comparisons.
  std::string snapshot() const;
  std::vector<std::string> events() const;

  // State after applying `events` in order.
  static std::unique_ptr<ReviewStore> replay(std::span<const std::string> events, Clock clock = system_clock_ms(),
                                             std::int64_t lease_ms = kDefaultLeaseMs);

 private:
  struct CorpusEntry;
  void record(const std::string& event);  // caller holds the exclusive lock
  void apply(const std::string& event);
  void release_stale(const std::string& run_id);
  std::shared_ptr<const HilSession> session(const std::string& corpus_id) const;
  const ReviewTask& task_ref(const std::string& task_id) const;
  const ReviewRun& run_ref(const std::string& run_id) const;

  std::filesystem::path dir_;
  Clock clock_;
  std::int64_t lease_ms_;
  std::ofstream log_;
  mutable std::shared_mutex mutex_;
  mutable std::condition_variable_any done_;
  std::vector<std::string> events_;
  std::map<std::string, std::shared_ptr<CorpusEntry>> corpora_;
  std::map<std::string, ReviewRun> runs_;
  std::map<std::string, ReviewTask> tasks_;
  std::size_t next_corpus_ = 1, next_run_ = 1;
};

std::string task_to_json(const ReviewTask& task);
std::string run_to_json(const ReviewRun& run, std::span<const ReviewTask> tasks);

// Sends each HIL stage through the review queue and blocks until annotated.
class QueueAnnotator final : public Annotator {
 public:
  QueueAnnotator(ReviewStore& store, std::string corpus_id, std::chrono::milliseconds timeout)
      : store_(store), corpus_id_(std::move(corpus_id)), timeout_(timeout) {}
  std::vector<Annotation> annotate(std::span<const AnnotationTask> tasks) override;
  const std::vector<std::string>& run_ids() const { return run_ids_; }

 private:
  ReviewStore& store_;
  std::string corpus_id_;
  std::chrono::milliseconds timeout_;
  std::vector<std::string> run_ids_;
};

// HTTP front end of a ReviewStore. Errors are {"code", "message"} bodies.
class ReviewServer {
 public:
  explicit ReviewServer(ReviewStore& store, std::string token = {});
  ~ReviewServer();

  // Blocking.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and serves on a background thread.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  void routes();
  ReviewStore& store_;
  std::string token_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace forge
