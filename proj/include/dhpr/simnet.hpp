#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dhpr/bundle.hpp"
#include "dhpr/graph.hpp"

namespace dhpr {

struct CommStats {
  long long rounds = 0;
  long long scalars_sent = 0;  // sum over rounds of N * payload_dim
  std::map<Edge, long long> edge_messages;  // two per edge per round
};

struct RoundExchange {
  long long round_index = 0;
  int payload_dim = 0;
  std::vector<Eigen::VectorXd> payloads;
  std::vector<Eigen::VectorXd> aggregates;
};

/// Sampled retention of exchange rounds for audits: the first `head`
/// rounds are all kept, afterwards every `stride`-th round. Long runs
/// stay auditable without holding every payload in memory.
struct ExchangeLog {
  long long head = 512;
  long long stride = 16;
  std::vector<RoundExchange> rounds;

  bool wants(long long round_index) const {
    return round_index < head || round_index % stride == 0;
  }
};

/// Synchronous round-based message passing over a fixed weighted graph.
/// One exchange: every agent contributes a payload, every agent receives
/// the Metropolis-weighted sum over its closed neighborhood, summed in
/// ascending agent order so results are bitwise reproducible.
class SimNet {
 public:
  explicit SimNet(const WeightedGraph& graph, bool keep_log = false)
      : graph_(&graph), logging_(keep_log) {}

  std::vector<Eigen::VectorXd> exchange(const std::vector<Eigen::VectorXd>& payloads) {
    const int n = graph_->n_agents;
    if (static_cast<int>(payloads.size()) != n)
      throw std::invalid_argument("exchange: payload count mismatch");
    const Eigen::Index dim = payloads.empty() ? 0 : payloads[0].size();
    for (const auto& pl : payloads)
      if (pl.size() != dim) throw std::invalid_argument("exchange: payload length mismatch");

    std::vector<Eigen::VectorXd> out = aggregate(*graph_, payloads);

    stats_.rounds += 1;
    stats_.scalars_sent += static_cast<long long>(n) * static_cast<long long>(dim);
    for (const Edge& e : graph_->edges) stats_.edge_messages[e] += 2;
    if (logging_ && log_.wants(stats_.rounds - 1)) {
      RoundExchange rec;
      rec.round_index = stats_.rounds - 1;
      rec.payload_dim = static_cast<int>(dim);
      rec.payloads = payloads;
      rec.aggregates = out;
      log_.rounds.push_back(std::move(rec));
    }
    return out;
  }

  /// The pure aggregation map, shared with the audit recomputation.
  static std::vector<Eigen::VectorXd> aggregate(
      const WeightedGraph& graph, const std::vector<Eigen::VectorXd>& payloads) {
    const int n = graph.n_agents;
    const Eigen::Index dim = payloads.empty() ? 0 : payloads[0].size();
    std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
      for (int j = 0; j < n; ++j) {
        const double w = graph.weights(i, j);
        if (w != 0.0) acc += w * payloads[static_cast<std::size_t>(j)];
      }
      out[static_cast<std::size_t>(i)] = std::move(acc);
    }
    return out;
  }

  const CommStats& stats() const { return stats_; }
  const ExchangeLog& log() const { return log_; }
  ExchangeLog& mutable_log() { return log_; }
  bool logging() const { return logging_; }

 private:
  const WeightedGraph* graph_;
  bool logging_;
  CommStats stats_;
  ExchangeLog log_;
};

struct AuditReport {
  bool passed = true;
  long long rounds_checked = 0;
  long long first_bad_round = -1;
  int first_bad_agent = -1;
  double max_deviation = 0.0;
};

/// Recomputes every retained aggregate from the logged payloads restricted
/// to the graph's sparsity pattern and compares bitwise. Any dependence on
/// a non-neighbor payload shows up as a deviation.
inline AuditReport locality_audit(const WeightedGraph& graph, const ExchangeLog& log) {
  AuditReport rep;
  for (const auto& rec : log.rounds) {
    const auto expect = SimNet::aggregate(graph, rec.payloads);
    for (int i = 0; i < graph.n_agents; ++i) {
      const double dev =
          (expect[static_cast<std::size_t>(i)] - rec.aggregates[static_cast<std::size_t>(i)])
              .lpNorm<Eigen::Infinity>();
      if (dev > 0.0) {
        rep.max_deviation = std::max(rep.max_deviation, dev);
        if (rep.passed) {
          rep.passed = false;
          rep.first_bad_round = rec.round_index;
          rep.first_bad_agent = i;
        }
      }
    }
    ++rep.rounds_checked;
  }
  return rep;
}

/// Round log CSV: one row per retained round and agent with the payload
/// norm, for external inspection of communication volume.
inline void write_round_log(const ExchangeLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_round_log: cannot write " + path);
  out << "round,agent,payload_norm\n";
  for (const auto& rec : log.rounds)
    for (std::size_t i = 0; i < rec.payloads.size(); ++i)
      out << rec.round_index << ',' << (i + 1) << ','
          << format_g17(rec.payloads[i].norm()) << '\n';
}

}  // namespace dhpr
