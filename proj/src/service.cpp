#include "forge/service.hpp"

#include <algorithm>

#include <httplib.h>
#include <json.hpp>

namespace forge {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::Pending: return "pending";
    case TaskStatus::Claimed: return "claimed";
    case TaskStatus::Done: return "done";
  }
  return "pending";
}

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

struct ReviewStore::CorpusEntry {
  Corpus corpus;
  std::mutex build;
  std::shared_ptr<const HilSession> session;
};

ReviewStore::ReviewStore(std::filesystem::path dir, Clock clock, std::int64_t lease_ms)
    : dir_(std::move(dir)), clock_(std::move(clock)), lease_ms_(lease_ms) {
  if (dir_.empty()) return;
  std::filesystem::create_directories(dir_);
  const auto path = dir_ / "events.jsonl";
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      apply(line);
      events_.push_back(line);
    }
  }
  log_.open(path, std::ios::app);
  if (!log_) throw Error("cannot open event log " + path.string());
}

ReviewStore::~ReviewStore() = default;

void ReviewStore::record(const std::string& event) {
  apply(event);
  events_.push_back(event);
  if (log_.is_open()) {
    log_ << event << '\n';
    log_.flush();
  }
}

void ReviewStore::apply(const std::string& line) {
  const auto e = json::parse(line);
  const auto type = e.at("type").get<std::string>();
  const auto at = e.at("at").get<std::int64_t>();
  if (type == "corpus_added") {
    auto entry = std::make_shared<CorpusEntry>();
    for (const auto& ex : e.at("examples")) entry->corpus.examples.push_back(example_from_line(ex.dump()));
    corpora_[e.at("corpus_id").get<std::string>()] = std::move(entry);
  } else if (type == "run_created") {
    ReviewRun run;
    run.run_id = e.at("run_id").get<std::string>();
    run.corpus_id = e.at("corpus_id").get<std::string>();
    run.strategy = e.at("strategy").get<std::string>();
    run.fraction = e.at("fraction").get<double>();
    run.seed = e.at("seed").get<std::uint64_t>();
    run.created_ms = at;
    const Corpus& corpus = corpora_.at(run.corpus_id)->corpus;
    for (const auto& t : e.at("tasks")) {
      ReviewTask task;
      task.task_id = t.at("task_id").get<std::string>();
      task.run_id = run.run_id;
      task.sample_id = t.at("sample_id").get<std::string>();
      task.draft = t.at("draft").get<std::string>();
      task.tables = corpus.find(task.sample_id)->tables;
      task.created_ms = at;
      run.task_ids.push_back(task.task_id);
      tasks_[task.task_id] = std::move(task);
    }
    runs_[run.run_id] = std::move(run);
  } else if (type == "task_claimed") {
    auto& task = tasks_.at(e.at("task_id").get<std::string>());
    task.status = TaskStatus::Claimed;
    task.claimed_ms = at;
  } else if (type == "task_released") {
    auto& task = tasks_.at(e.at("task_id").get<std::string>());
    task.status = TaskStatus::Pending;
    task.claimed_ms.reset();
  } else if (type == "task_completed") {
    auto& task = tasks_.at(e.at("task_id").get<std::string>());
    task.status = TaskStatus::Done;
    task.annotation = e.at("annotation").get<std::string>();
    task.completed_ms = at;
    auto& run = runs_.at(task.run_id);
    const auto rules = learn_corrections(task.draft, *task.annotation);
    run.memory = apply_memory(std::move(run.memory), rules);
    done_.notify_all();
  } else {
    throw Error("unknown event type '" + type + "'");
  }
}

std::shared_ptr<const HilSession> ReviewStore::session(const std::string& corpus_id) const {
  std::shared_ptr<CorpusEntry> entry;
  {
    std::shared_lock lock(mutex_);
    auto it = corpora_.find(corpus_id);
    if (it == corpora_.end()) throw NotFoundError("unknown corpus '" + corpus_id + "'");
    entry = it->second;
  }
  std::lock_guard build(entry->build);
  if (!entry->session) entry->session = std::make_shared<HilSession>(entry->corpus);
  return entry->session;
}

const ReviewTask& ReviewStore::task_ref(const std::string& task_id) const {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFoundError("unknown task '" + task_id + "'");
  return it->second;
}

const ReviewRun& ReviewStore::run_ref(const std::string& run_id) const {
  auto it = runs_.find(run_id);
  if (it == runs_.end()) throw NotFoundError("unknown run '" + run_id + "'");
  return it->second;
}

std::string ReviewStore::add_corpus(const Corpus& corpus) {
  ojson e = {{"type", "corpus_added"}, {"at", clock_()}};
  json examples = json::array();
  for (const auto& ex : corpus.examples) examples.push_back(json::parse(example_to_line(ex)));
  std::unique_lock lock(mutex_);
  const std::string id = "corpus-" + std::to_string(corpora_.size() + 1);
  e["corpus_id"] = id;
  e["examples"] = std::move(examples);
  record(e.dump());
  return id;
}

namespace {

ojson task_entries(const std::string& run_id, std::span<const AnnotationTask> tasks) {
  ojson out = ojson::array();
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    out.push_back({{"task_id", run_id + "-t" + std::to_string(k + 1)},
                   {"sample_id", tasks[k].sample_id},
                   {"draft", tasks[k].draft}});
  }
  return out;
}

}  // namespace

std::string ReviewStore::create_run(const std::string& corpus_id, SelectionStrategy strategy, double fraction,
                                    std::uint64_t seed) {
  const auto s = session(corpus_id);
  const auto items = s->pool_items({});
  std::vector<AnnotationTask> tasks;
  for (std::size_t k : select_samples(items, strategy, fraction, seed)) {
    tasks.push_back(s->task_for(*s->pool_index(items[k].sample_id)));
  }
  std::unique_lock lock(mutex_);
  const std::string id = "run-" + std::to_string(runs_.size() + 1);
  ojson e = {{"type", "run_created"}, {"at", clock_()},            {"run_id", id},
             {"corpus_id", corpus_id}, {"strategy", to_string(strategy)}, {"fraction", fraction},
             {"seed", seed},           {"tasks", task_entries(id, tasks)}};
  record(e.dump());
  return id;
}

std::string ReviewStore::create_run_with_tasks(const std::string& corpus_id, std::span<const AnnotationTask> tasks) {
  std::unique_lock lock(mutex_);
  auto it = corpora_.find(corpus_id);
  if (it == corpora_.end()) throw NotFoundError("unknown corpus '" + corpus_id + "'");
  for (const auto& t : tasks) {
    if (!it->second->corpus.find(t.sample_id)) throw NotFoundError("unknown sample '" + t.sample_id + "'");
  }
  const std::string id = "run-" + std::to_string(runs_.size() + 1);
  ojson e = {{"type", "run_created"}, {"at", clock_()}, {"run_id", id}, {"corpus_id", corpus_id},
             {"strategy", "external"}, {"fraction", 0.0}, {"seed", 0},  {"tasks", task_entries(id, tasks)}};
  record(e.dump());
  return id;
}

void ReviewStore::release_stale(const std::string& run_id) {
  const auto now = clock_();
  for (const auto& tid : run_ref(run_id).task_ids) {
    const auto& t = tasks_.at(tid);
    if (t.status == TaskStatus::Claimed && now - *t.claimed_ms >= lease_ms_) {
      record(ojson{{"type", "task_released"}, {"at", now}, {"task_id", tid}}.dump());
    }
  }
}

std::optional<ReviewTask> ReviewStore::next_task(const std::string& run_id) {
  std::unique_lock lock(mutex_);
  release_stale(run_id);
  for (const auto& tid : run_ref(run_id).task_ids) {
    if (tasks_.at(tid).status != TaskStatus::Pending) continue;
    record(ojson{{"type", "task_claimed"}, {"at", clock_()}, {"task_id", tid}}.dump());
    return tasks_.at(tid);
  }
  return std::nullopt;
}

ReviewStore::SubmitResult ReviewStore::submit_annotation(const std::string& task_id, const std::string& text) {
  std::unique_lock lock(mutex_);
  const auto& t = task_ref(task_id);
  switch (t.status) {
    case TaskStatus::Pending:
      throw ConflictError("task '" + task_id + "' is not claimed");
    case TaskStatus::Done:
      if (*t.annotation == text) return {t, 0, true};
      throw ConflictError("task '" + task_id + "' already holds a different annotation");
    case TaskStatus::Claimed:
      break;
  }
  const auto learned = learn_corrections(t.draft, text).size();
  record(ojson{{"type", "task_completed"}, {"at", clock_()}, {"task_id", task_id}, {"annotation", text}}.dump());
  return {tasks_.at(task_id), learned, false};
}

ReviewTask ReviewStore::task(const std::string& task_id) const {
  std::shared_lock lock(mutex_);
  return task_ref(task_id);
}

ReviewRun ReviewStore::run(const std::string& run_id) const {
  std::shared_lock lock(mutex_);
  return run_ref(run_id);
}

std::vector<ReviewTask> ReviewStore::run_tasks(const std::string& run_id) const {
  std::shared_lock lock(mutex_);
  std::vector<ReviewTask> out;
  for (const auto& tid : run_ref(run_id).task_ids) out.push_back(tasks_.at(tid));
  return out;
}

MetricReport ReviewStore::run_metrics(const std::string& run_id) const {
  const ReviewRun r = run(run_id);
  return session(r.corpus_id)->evaluate(r.memory);
}

bool ReviewStore::has_corpus(const std::string& corpus_id) const {
  std::shared_lock lock(mutex_);
  return corpora_.count(corpus_id) > 0;
}

bool ReviewStore::wait_run_done(const std::string& run_id, std::chrono::milliseconds timeout) const {
  std::shared_lock lock(mutex_);
  run_ref(run_id);
  return done_.wait_for(lock, timeout, [&] {
    const auto& ids = runs_.at(run_id).task_ids;
    return std::all_of(ids.begin(), ids.end(),
                       [&](const std::string& tid) { return tasks_.at(tid).status == TaskStatus::Done; });
  });
}

namespace {

ojson task_json(const ReviewTask& t) {
  ojson tables = ojson::array();
  for (const auto& tb : t.tables) tables.push_back(ojson::parse(table_to_json(tb)));
  ojson j = {{"task_id", t.task_id},
             {"run_id", t.run_id},
             {"sample_id", t.sample_id},
             {"draft", t.draft},
             {"tables", std::move(tables)},
             {"status", to_string(t.status)},
             {"annotation", nullptr},
             {"created_ms", t.created_ms},
             {"claimed_ms", nullptr},
             {"completed_ms", nullptr}};
  if (t.annotation) j["annotation"] = *t.annotation;
  if (t.claimed_ms) j["claimed_ms"] = *t.claimed_ms;
  if (t.completed_ms) j["completed_ms"] = *t.completed_ms;
  return j;
}

ojson memory_json(const CorrectionMemory& m) {
  ojson rules = ojson::array();
  for (const auto& r : m.rules) rules.push_back(ojson::parse(rule_to_line(r)));
  return rules;
}

ojson run_json(const ReviewRun& r, std::span<const ReviewTask> tasks) {
  std::size_t counts[3] = {0, 0, 0};
  ojson list = ojson::array();
  for (const auto& t : tasks) {
    ++counts[static_cast<int>(t.status)];
    list.push_back({{"task_id", t.task_id}, {"sample_id", t.sample_id}, {"status", to_string(t.status)}});
  }
  return {{"run_id", r.run_id},
          {"corpus_id", r.corpus_id},
          {"strategy", r.strategy},
          {"fraction", r.fraction},
          {"seed", r.seed},
          {"created_ms", r.created_ms},
          {"tasks", std::move(list)},
          {"pending", counts[0]},
          {"claimed", counts[1]},
          {"done", counts[2]},
          {"memory", memory_json(r.memory)}};
}

}  // namespace

std::string task_to_json(const ReviewTask& task) { return task_json(task).dump(); }

std::string run_to_json(const ReviewRun& run, std::span<const ReviewTask> tasks) {
  return run_json(run, tasks).dump();
}

std::string ReviewStore::snapshot() const {
  std::shared_lock lock(mutex_);
  ojson j = {{"corpora", ojson::object()}, {"runs", ojson::array()}, {"tasks", ojson::array()}};
  for (const auto& [id, entry] : corpora_) j["corpora"][id] = corpus_to_text(entry->corpus);
  for (const auto& [id, r] : runs_) {
    std::vector<ReviewTask> ts;
    for (const auto& tid : r.task_ids) ts.push_back(tasks_.at(tid));
    j["runs"].push_back(run_json(r, ts));
  }
  for (const auto& [id, t] : tasks_) j["tasks"].push_back(task_json(t));
  return j.dump();
}

std::vector<std::string> ReviewStore::events() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::unique_ptr<ReviewStore> ReviewStore::replay(std::span<const std::string> events, Clock clock,
                                                 std::int64_t lease_ms) {
  auto store = std::make_unique<ReviewStore>(std::filesystem::path{}, std::move(clock), lease_ms);
  std::unique_lock lock(store->mutex_);
  for (const auto& e : events) store->record(e);
  return store;
}

std::vector<Annotation> QueueAnnotator::annotate(std::span<const AnnotationTask> tasks) {
  const auto run_id = store_.create_run_with_tasks(corpus_id_, tasks);
  run_ids_.push_back(run_id);
  if (!store_.wait_run_done(run_id, timeout_)) throw Error("review run '" + run_id + "' timed out");
  std::vector<Annotation> out;
  for (const auto& t : store_.run_tasks(run_id)) out.push_back({t.sample_id, *t.annotation});
  return out;
}

// --- HTTP ------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, ojson{{"code", code}, {"message", message}}.dump());
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ParseError(0, "", std::string("malformed JSON body: ") + e.what());
  }
}

template <class T>
T body_field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end()) throw ParseError(0, name, std::string("missing field '") + name + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(0, name, std::string("field '") + name + "' has the wrong type");
  }
}

}  // namespace

ReviewServer::ReviewServer(ReviewStore& store, std::string token)
    : store_(store), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::routes() {
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  auto guarded = [this](Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      if (!token_.empty() && req.get_header_value("Authorization") != "Bearer " + token_) {
        send_error(res, 401, "unauthorized", "missing or wrong bearer token");
        return;
      }
      try {
        h(req, res);
      } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
      } catch (const ConflictError& e) {
        send_error(res, 409, "conflict", e.what());
      } catch (const ParseError& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const std::invalid_argument& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  };
  auto& s = *server_;

  s.Post("/api/corpora", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const Corpus corpus = parse_corpus_text(req.body);
    const auto id = store_.add_corpus(corpus);
    send_json(res, 201, ojson{{"corpus_id", id}, {"examples", corpus.examples.size()}}.dump());
  }));

  s.Post("/api/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto name = body_field<std::string>(body, "strategy");
    const auto strategy = strategy_from_string(name);
    if (!strategy) throw std::invalid_argument("unknown strategy '" + name + "'");
    const auto id = store_.create_run(body_field<std::string>(body, "corpus_id"), *strategy,
                                      body_field<double>(body, "fraction"), body_field<std::uint64_t>(body, "seed"));
    send_json(res, 201, run_to_json(store_.run(id), store_.run_tasks(id)));
  }));

  s.Get(R"(/api/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    send_json(res, 200, run_to_json(store_.run(id), store_.run_tasks(id)));
  }));

  s.Get(R"(/api/runs/([^/]+)/tasks/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    auto task = store_.next_task(req.matches[1]);
    if (!task) {
      res.status = 204;
      return;
    }
    send_json(res, 200, task_to_json(*task));
  }));

  s.Get(R"(/api/runs/([^/]+)/metrics)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, metric_report_to_json(store_.run_metrics(req.matches[1])));
  }));

  s.Get(R"(/api/runs/([^/]+)/memory)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, memory_json(store_.run(req.matches[1]).memory).dump());
  }));

  s.Get(R"(/api/tasks/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, task_to_json(store_.task(req.matches[1])));
  }));

  s.Post(R"(/api/tasks/([^/]+)/annotation)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto result = store_.submit_annotation(req.matches[1], body_field<std::string>(body, "corrected_text"));
    send_json(res, 200,
              ojson{{"task_id", result.task.task_id},
                    {"status", to_string(result.task.status)},
                    {"rules_learned", result.rules_learned},
                    {"repeated", result.repeated}}
                  .dump());
  }));
}

bool ReviewServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int ReviewServer::start_background(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  if (port <= 0) throw Error("cannot bind review server on " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ReviewServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace forge
