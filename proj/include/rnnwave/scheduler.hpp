// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rnnwave/config.hpp"

namespace rnnwave::sched {

// Task graph over the (layer x time-block) grid. Each block has one
// INPUT_GEMM task (the layer-input GEMM batched over the block's steps) and
// one RECURRENT_STEP task per step, bundling that step's recurrent GEMM with
// its pointwise stage. Dependencies:
//   INPUT_GEMM(l, j)        <- every RECURRENT_STEP(l-1, j, k)   (l > 0)
//   RECURRENT_STEP(l, j, 0) <- INPUT_GEMM(l, j), last step of block j-1
//   RECURRENT_STEP(l, j, k) <- INPUT_GEMM(l, j), RECURRENT_STEP(l, j, k-1)
// Completing a cell therefore unblocks both the next step of its own layer
// and the matching block of the layer above, which is what the diagonal
// dispatch order exploits.

enum class TaskPhase { InputGemm, RecurrentStep };

struct Task {
  int id = 0;
  int layer = 0;
  int block = 0;
  int step_k = 0;  // step index within the block (RECURRENT_STEP only)
  TaskPhase phase = TaskPhase::InputGemm;
  int priority = 0;  // diagonal distance from the first cell
  std::uint64_t tie_key = 0;
};

/// Dispatch distance: the number of grid edges between this task's cell and
/// cell (0, 0), i.e. layer + block. Lower runs sooner.
inline int priority_of(int layer, int block) { return layer + block; }

struct TaskGraph {
  int layers = 0;
  int steps = 0;
  int block_width = 0;
  int num_blocks = 0;
  bool reversed = false;
  std::vector<Task> tasks;
  std::vector<std::vector<int>> dependents;  // edges u -> v as dependents[u]
  std::vector<int> dependency_count;

  int input_id(int layer, int block) const {
    return layer * (num_blocks + steps) + block;
  }
  int recurrent_id(int layer, int step) const {
    return layer * (num_blocks + steps) + num_blocks + step;
  }
  int total() const { return static_cast<int>(tasks.size()); }

  /// Step range [first, last) covered by a block.
  std::pair<int, int> block_steps(int block) const {
    const int first = block * block_width;
    const int last = std::min(steps, first + block_width);
    return {first, last};
  }
};

namespace detail {

inline std::uint64_t tie_key(int layer, TaskPhase phase, int block, int step_k, int layers,
                             bool reversed) {
  // Within one diagonal: lower layer first (the longest chains hang off it),
  // INPUT_GEMM ahead of the cell work it feeds. A reversed graph mirrors the
  // layer preference. Field widths: layer 20 bits, phase 1, block 30,
  // step 13.
  const std::uint64_t layer_rank =
      static_cast<std::uint64_t>(reversed ? (layers - 1 - layer) : layer);
  const std::uint64_t phase_rank = phase == TaskPhase::InputGemm ? 0 : 1;
  return (layer_rank << 44) | (phase_rank << 43) |
         (static_cast<std::uint64_t>(block) << 13) | static_cast<std::uint64_t>(step_k);
}

}  // namespace detail

/// Forward-orientation graph: L * ceil(T/s) INPUT_GEMM tasks and L * T
/// RECURRENT_STEP tasks.
inline TaskGraph build_graph(int layers, int steps, int block_width) {
  if (layers <= 0 || steps <= 0 || block_width <= 0) {
    throw std::invalid_argument("build_graph: dimensions must be positive");
  }
  TaskGraph g;
  g.layers = layers;
  g.steps = steps;
  g.block_width = std::min(block_width, steps);
  g.num_blocks = (steps + g.block_width - 1) / g.block_width;
  g.tasks.resize(static_cast<std::size_t>(layers) * (g.num_blocks + steps));
  g.dependents.assign(g.tasks.size(), {});
  g.dependency_count.assign(g.tasks.size(), 0);

  for (int l = 0; l < layers; ++l) {
    for (int j = 0; j < g.num_blocks; ++j) {
      Task& t = g.tasks[static_cast<std::size_t>(g.input_id(l, j))];
      t.id = g.input_id(l, j);
      t.layer = l;
      t.block = j;
      t.phase = TaskPhase::InputGemm;
      t.priority = priority_of(l, j);
      t.tie_key = detail::tie_key(l, t.phase, j, 0, layers, false);
    }
    for (int s = 0; s < steps; ++s) {
      Task& t = g.tasks[static_cast<std::size_t>(g.recurrent_id(l, s))];
      t.id = g.recurrent_id(l, s);
      t.layer = l;
      t.block = s / g.block_width;
      t.step_k = s % g.block_width;
      t.phase = TaskPhase::RecurrentStep;
      t.priority = priority_of(l, t.block);
      t.tie_key = detail::tie_key(l, t.phase, t.block, t.step_k, layers, false);
    }
  }

  auto add_edge = [&g](int from, int to) {
    g.dependents[static_cast<std::size_t>(from)].push_back(to);
    ++g.dependency_count[static_cast<std::size_t>(to)];
  };

  for (int l = 0; l < layers; ++l) {
    for (int j = 0; j < g.num_blocks; ++j) {
      const auto [first, last] = g.block_steps(j);
      if (l > 0) {
        for (int s = first; s < last; ++s) {
          add_edge(g.recurrent_id(l - 1, s), g.input_id(l, j));
        }
      }
      for (int s = first; s < last; ++s) {
        add_edge(g.input_id(l, j), g.recurrent_id(l, s));
        if (s > first) {
          add_edge(g.recurrent_id(l, s - 1), g.recurrent_id(l, s));
        } else if (j > 0) {
          add_edge(g.recurrent_id(l, first - 1), g.recurrent_id(l, s));
        }
      }
    }
  }
  return g;
}

/// The backward-pass graph: identical nodes, every edge reversed, priority
/// measured from cell (L-1, last block). A reversed INPUT_GEMM is the
/// layer's gathered output GEMM (it runs after the block's cells), and the
/// reversed recurrent chain walks time backwards.
inline TaskGraph reverse_graph(const TaskGraph& g) {
  TaskGraph r = g;
  r.reversed = !g.reversed;
  r.dependents.assign(g.tasks.size(), {});
  r.dependency_count.assign(g.tasks.size(), 0);
  for (std::size_t u = 0; u < g.dependents.size(); ++u) {
    for (int v : g.dependents[u]) {
      r.dependents[static_cast<std::size_t>(v)].push_back(static_cast<int>(u));
      ++r.dependency_count[u];
    }
  }
  for (Task& t : r.tasks) {
    t.priority = priority_of(g.layers - 1 - t.layer, g.num_blocks - 1 - t.block);
    t.tie_key = detail::tie_key(t.layer, t.phase, g.num_blocks - 1 - t.block,
                                g.block_width - 1 - t.step_k, g.layers, r.reversed);
  }
  return r;
}

struct TraceRecord {
  int task_id = 0;
  int layer = 0;
  int block = 0;
  int step_k = 0;
  TaskPhase phase = TaskPhase::InputGemm;
  int worker = 0;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

using ScheduleTrace = std::vector<TraceRecord>;

struct SchedulerDeadlock : std::runtime_error {
  explicit SchedulerDeadlock(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

struct ReadyOrder {
  const std::vector<Task>* tasks;
  bool operator()(int a, int b) const {
    const Task& ta = (*tasks)[static_cast<std::size_t>(a)];
    const Task& tb = (*tasks)[static_cast<std::size_t>(b)];
    if (ta.priority != tb.priority) return ta.priority > tb.priority;
    if (ta.tie_key != tb.tie_key) return ta.tie_key > tb.tie_key;
    return ta.id > tb.id;
  }
};

}  // namespace detail

/// Runs every task exactly once with `workers`-way concurrency (the calling
/// thread participates). Ready tasks dispatch lowest diagonal first; in
/// addition a task on diagonal d is held back until every task on diagonals
/// <= d-2 has started, which pins the wavefront shape even when the OS
/// stalls a worker mid-task. Start/end stamps are taken under the queue
/// lock, so trace order equals dispatch order.
inline ScheduleTrace execute(const TaskGraph& graph, int workers,
                             const std::function<void(const Task&)>& body) {
  if (workers < 1) throw std::invalid_argument("execute: workers must be >= 1");
  const int total = graph.total();
  ScheduleTrace trace(static_cast<std::size_t>(total));
  if (total == 0) return trace;

  std::mutex mu;
  std::condition_variable cv;
  std::vector<int> deps = graph.dependency_count;
  std::priority_queue<int, std::vector<int>, detail::ReadyOrder> ready(
      detail::ReadyOrder{&graph.tasks});
  int completed = 0;
  int idle = 0;
  std::exception_ptr failure;
  bool aborted = false;

  // Unstarted-task counts per diagonal drive the wavefront gate.
  int max_diag = 0;
  for (const Task& t : graph.tasks) max_diag = std::max(max_diag, t.priority);
  std::vector<int> unstarted(static_cast<std::size_t>(max_diag) + 1, 0);
  for (const Task& t : graph.tasks) ++unstarted[static_cast<std::size_t>(t.priority)];
  int min_unstarted = 0;

  for (int i = 0; i < total; ++i) {
    if (deps[static_cast<std::size_t>(i)] == 0) ready.push(i);
  }
  if (ready.empty()) {
    throw SchedulerDeadlock("execute: no initially ready task; the graph has a cycle");
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto now_ns = [&t0] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  auto frontier_report = [&]() {
    std::ostringstream os;
    os << "execute: stuck frontier, " << (total - completed) << " tasks remain; waiting on:";
    int listed = 0;
    for (int i = 0; i < total && listed < 8; ++i) {
      if (deps[static_cast<std::size_t>(i)] > 0) {
        const Task& t = graph.tasks[static_cast<std::size_t>(i)];
        os << " (layer " << t.layer << ", block " << t.block << ", "
           << (t.phase == TaskPhase::InputGemm ? "INPUT_GEMM" : "RECURRENT_STEP") << ", "
           << deps[static_cast<std::size_t>(i)] << " deps)";
        ++listed;
      }
    }
    return os.str();
  };

  auto worker_fn = [&](int worker_id) {
    std::unique_lock<std::mutex> lock(mu);
    for (;;) {
      if (aborted || completed == total) return;
      bool dispatchable = !ready.empty() &&
                          graph.tasks[static_cast<std::size_t>(ready.top())].priority <=
                              min_unstarted + 1;
      if (!dispatchable) {
        ++idle;
        if (idle == workers && completed < total) {
          if (ready.empty()) {
            aborted = true;
            failure = std::make_exception_ptr(SchedulerDeadlock(frontier_report()));
            cv.notify_all();
            return;
          }
          // All workers idle yet a ready task is gated: impossible unless the
          // unstarted bookkeeping is out of sync; treat as a scheduler bug.
          aborted = true;
          failure = std::make_exception_ptr(
              SchedulerDeadlock("execute: wavefront gate wedged with ready tasks"));
          cv.notify_all();
          return;
        }
        cv.wait(lock, [&] {
          return aborted || completed == total ||
                 (!ready.empty() &&
                  graph.tasks[static_cast<std::size_t>(ready.top())].priority <=
                      min_unstarted + 1);
        });
        --idle;
        continue;
      }

      const int id = ready.top();
      ready.pop();
      const Task& task = graph.tasks[static_cast<std::size_t>(id)];
      --unstarted[static_cast<std::size_t>(task.priority)];
      while (min_unstarted <= max_diag &&
             unstarted[static_cast<std::size_t>(min_unstarted)] == 0) {
        ++min_unstarted;
      }
      TraceRecord& rec = trace[static_cast<std::size_t>(id)];
      rec.task_id = id;
      rec.layer = task.layer;
      rec.block = task.block;
      rec.step_k = task.step_k;
      rec.phase = task.phase;
      rec.worker = worker_id;
      rec.start_ns = now_ns();
      // Advancing min_unstarted may have unlocked gated ready tasks.
      cv.notify_all();

      lock.unlock();
      std::exception_ptr err;
      try {
        body(task);
      } catch (...) {
        err = std::current_exception();
      }
      const std::int64_t end_stamp = now_ns();
      lock.lock();

      rec.end_ns = end_stamp;
      if (err) {
        aborted = true;
        failure = err;
        cv.notify_all();
        return;
      }
      ++completed;
      for (int dep : graph.dependents[static_cast<std::size_t>(id)]) {
        if (--deps[static_cast<std::size_t>(dep)] == 0) ready.push(dep);
      }
      if (completed == total) {
        cv.notify_all();
        return;
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> helpers;
  helpers.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) {
    helpers.emplace_back(worker_fn, w);
  }
  worker_fn(0);
  for (std::thread& t : helpers) t.join();
  if (failure) std::rethrow_exception(failure);
  return trace;
}

struct TraceViolation {
  std::string description;
};

/// Checks that a trace covers every task exactly once and honors every edge:
/// a dependency's end stamp never exceeds its dependent's start stamp.
inline std::optional<TraceViolation> validate_trace(const TaskGraph& graph,
                                                    const ScheduleTrace& trace) {
  if (trace.size() != graph.tasks.size()) {
    return TraceViolation{"trace has " + std::to_string(trace.size()) + " records, graph has " +
                          std::to_string(graph.tasks.size()) + " tasks"};
  }
  std::vector<int> seen(graph.tasks.size(), 0);
  for (const TraceRecord& r : trace) {
    if (r.task_id < 0 || r.task_id >= graph.total()) {
      return TraceViolation{"trace references unknown task id " + std::to_string(r.task_id)};
    }
    if (++seen[static_cast<std::size_t>(r.task_id)] > 1) {
      return TraceViolation{"task id " + std::to_string(r.task_id) + " appears more than once"};
    }
  }
  std::vector<const TraceRecord*> by_id(graph.tasks.size(), nullptr);
  for (const TraceRecord& r : trace) by_id[static_cast<std::size_t>(r.task_id)] = &r;
  for (std::size_t u = 0; u < graph.dependents.size(); ++u) {
    for (int v : graph.dependents[u]) {
      const TraceRecord* ru = by_id[u];
      const TraceRecord* rv = by_id[static_cast<std::size_t>(v)];
      if (ru->end_ns > rv->start_ns) {
        const Task& tu = graph.tasks[u];
        const Task& tv = graph.tasks[static_cast<std::size_t>(v)];
        std::ostringstream os;
        os << "edge violated: (layer " << tu.layer << ", block " << tu.block << ") ends at "
           << ru->end_ns << "ns after (layer " << tv.layer << ", block " << tv.block
           << ") starts at " << rv->start_ns << "ns";
        return TraceViolation{os.str()};
      }
    }
  }
  return std::nullopt;
}

inline std::string phase_label(const TraceRecord& r) {
  if (r.phase == TaskPhase::InputGemm) return "INPUT_GEMM";
  return "RECURRENT_STEP(" + std::to_string(r.step_k) + ")";
}

inline void write_trace_csv(std::ostream& os, const ScheduleTrace& trace) {
  os << "task_layer,task_block,phase,worker,start_ns,end_ns\n";
  for (const TraceRecord& r : trace) {
    os << r.layer << ',' << r.block << ',' << phase_label(r) << ',' << r.worker << ','
       << r.start_ns << ',' << r.end_ns << '\n';
  }
}

}  // namespace rnnwave::sched
