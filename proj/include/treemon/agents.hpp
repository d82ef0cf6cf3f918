#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "treemon/properties.hpp"
#include "treemon/quantiles.hpp"
#include "treemon/store.hpp"
#include "treemon/topology.hpp"

namespace treemon {

// One globally synchronized sampling instant. All records produced in a
// cycle carry this timestamp, which is a multiple of the collection interval.
struct CycleId {
    std::int64_t ts = 0;

    static CycleId aligned(std::int64_t ts, std::int64_t interval) {
        if (interval <= 0 || ts % interval != 0)
            throw Error("cycle timestamp not aligned to the interval");
        return CycleId{ts};
    }
};

// Child-to-parent payload for one (job, metric) in one cycle. Raw per-core
// values travel only from measurement agents to their collector, so the
// collector can pool them into an exact summary; above that layer, raws stay
// empty and only summaries move.
struct Report {
    std::int64_t cycle_ts = 0;
    std::string job_id;
    PropertyKind metric = PropertyKind::Cpi;
    QuantileSummary summary;
    std::vector<double> raw_values;
};

struct AgentMessage {
    enum class Kind { Measure, Report, CycleDone, Timeout };

    Kind kind = Kind::Measure;
    std::int64_t cycle_ts = 0;
    AgentId sender;
    AgentId receiver;
    std::optional<Report> report;        // Kind::Report
    std::vector<NodeId> missing_nodes;   // Kind::CycleDone carries the roster up
};

struct CycleRecord {
    std::string job_id;
    PropertyKind metric = PropertyKind::Cpi;
    QuantileSummary summary;

    friend bool operator==(const CycleRecord&, const CycleRecord&) = default;
};

struct CycleResult {
    std::int64_t cycle_ts = 0;
    std::vector<CycleRecord> records;      // sorted by (job_id, metric)
    std::vector<NodeId> missing_nodes;     // sorted, unique

    friend bool operator==(const CycleResult&, const CycleResult&) = default;
};

/// Supplies raw counters. `core` is the job-relative core index, stable
/// across cycles and unaffected by what else shares the node.
class CounterSource {
public:
    virtual ~CounterSource() = default;
    virtual CounterSample sample(const JobRecord& job, NodeId node, int core,
                                 std::int64_t cycle_ts) = 0;
    // Cores no job occupies are still measured; the result goes nowhere.
    virtual CounterSample idle_sample(NodeId, int, std::int64_t) {
        return CounterSample{0.0, 0.0, 0.0, 0.0, 0.0, 1.0};
    }
};

/// Job table with per-node residency. A job occupies cores_per_node cores on
/// every node in its list except the last, which takes the remainder.
class JobTable {
public:
    JobTable() = default;
    JobTable(std::vector<JobRecord> jobs, int cores_per_node)
        : jobs_(std::move(jobs)), cores_per_node_(cores_per_node) {
        std::sort(jobs_.begin(), jobs_.end(),
                  [](const JobRecord& a, const JobRecord& b) { return a.job_id < b.job_id; });
        for (std::size_t i = 0; i < jobs_.size(); ++i) {
            jobs_[i].validate(cores_per_node_);
            for (const NodeId node : jobs_[i].nodes)
                by_node_[node].push_back(i);
        }
    }

    struct Residency {
        const JobRecord* job = nullptr;
        int cores = 0;       // job cores resident on this node
        int first_core = 0;  // job-relative index of the first of them
    };

    // Jobs active on `node` at `ts`, in job id order.
    std::vector<Residency> on_node(NodeId node, std::int64_t ts) const {
        std::vector<Residency> out;
        const auto it = by_node_.find(node);
        if (it == by_node_.end())
            return out;
        for (const std::size_t idx : it->second) {
            const JobRecord& job = jobs_[idx];
            if (!job.active_at(ts))
                continue;
            const auto pos = static_cast<std::size_t>(
                std::find(job.nodes.begin(), job.nodes.end(), node) - job.nodes.begin());
            const int first_core = static_cast<int>(pos) * cores_per_node_;
            const int cores_here = std::min(cores_per_node_, job.cores - first_core);
            if (cores_here > 0)
                out.push_back({&job, cores_here, first_core});
        }
        return out;
    }

    std::span<const JobRecord> jobs() const { return jobs_; }
    int cores_per_node() const { return cores_per_node_; }

private:
    std::vector<JobRecord> jobs_;
    std::map<NodeId, std::vector<std::size_t>> by_node_;
    int cores_per_node_ = 1;
};

/// Leaf measurement: samples every core of the node, derives all properties
/// per core, and returns exact per-(job, metric) summaries with the raw
/// per-core values attached. Cores whose derivation hits ZeroDenominator are
/// excluded, so summary counts reflect only cores that produced a value.
/// Throws NodeDown when the fault set marks this node failed.
inline std::vector<Report> persyst_measure(NodeId node, CycleId cycle, const JobTable& table,
                                           CounterSource& source,
                                           const std::set<NodeId>& down_nodes = {}) {
    if (down_nodes.count(node))
        throw NodeDown("node " + std::to_string(node) + " agent is down");

    std::vector<Report> out;
    int busy_cores = 0;
    for (const JobTable::Residency& r : table.on_node(node, cycle.ts)) {
        busy_cores += r.cores;
        std::array<std::vector<double>, kPropertyKinds.size()> values;
        for (int c = 0; c < r.cores; ++c) {
            const CounterSample sample =
                source.sample(*r.job, node, r.first_core + c, cycle.ts);
            sample.validate();
            for (std::size_t k = 0; k < kPropertyKinds.size(); ++k) {
                try {
                    values[k].push_back(derive(kPropertyKinds[k], sample));
                } catch (const ZeroDenominator&) {
                    // idle/invalid window for this property: drop the core
                }
            }
        }
        for (std::size_t k = 0; k < kPropertyKinds.size(); ++k) {
            if (values[k].empty())
                continue;
            Report report;
            report.cycle_ts = cycle.ts;
            report.job_id = r.job->job_id;
            report.metric = kPropertyKinds[k];
            report.summary = exact_summary(values[k]);
            report.raw_values = std::move(values[k]);
            out.push_back(std::move(report));
        }
    }
    // Idle cores are measured too; nothing downstream consumes the result.
    for (int c = busy_cores; c < table.cores_per_node(); ++c)
        (void)source.idle_sample(node, c, cycle.ts);
    return out;
}

namespace detail {

inline void require_same_key(std::span<const Report> reports) {
    if (reports.empty())
        throw EmptyInput("aggregate: no reports");
    for (const Report& r : reports) {
        if (r.job_id != reports.front().job_id || r.metric != reports.front().metric ||
            r.cycle_ts != reports.front().cycle_ts)
            throw MixedKey("aggregate: reports disagree on (job, metric, cycle)");
    }
}

} // namespace detail

/// Collector aggregation for one (job, metric, cycle). With raw values
/// available the pooled set is summarized exactly; otherwise it falls back
/// to CDF-mixture estimation.
inline QuantileSummary collector_aggregate(std::span<const Report> reports,
                                           bool raw_values_available) {
    detail::require_same_key(reports);
    if (raw_values_available) {
        std::vector<double> pooled;
        for (const Report& r : reports)
            pooled.insert(pooled.end(), r.raw_values.begin(), r.raw_values.end());
        return exact_summary(pooled);
    }
    std::vector<QuantileSummary> parts;
    parts.reserve(reports.size());
    for (const Report& r : reports)
        parts.push_back(r.summary);
    return merge_estimate(parts);
}

/// SyncAgent aggregation: estimation only, raw values never reach this layer.
inline QuantileSummary sync_merge(std::span<const Report> reports) {
    detail::require_same_key(reports);
    std::vector<QuantileSummary> parts;
    parts.reserve(reports.size());
    for (const Report& r : reports)
        parts.push_back(r.summary);
    return merge_estimate(parts);
}

namespace detail {

// All compute nodes under an agent's subtree; used to translate a silent
// child into the missing-node roster.
inline void collect_subtree_nodes(const TreeTopology& topo, const AgentId& id,
                                  std::vector<NodeId>& out) {
    const AgentSpec& spec = topo.agent(id);
    if (spec.role == AgentRole::Persyst) {
        out.push_back(spec.node);
        return;
    }
    for (const AgentId& child : spec.children)
        collect_subtree_nodes(topo, child, out);
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Runs one synchronized measurement cycle over the topology.
///
/// The front end broadcasts MEASURE down the tree; reports flow back up with
/// exact aggregation at collectors and estimation at sync layers. Transport
/// is per-(sender, receiver) FIFO; global interleaving across channels is
/// driven by scheduler_seed, and the result is identical for every
/// interleaving because each agent buffers its children and aggregates in
/// canonical child order.
///
/// The in-process transport delivers instantly, so the deadline is reached
/// only by agents that never respond: once the message pool drains, waiting
/// parents at the deepest incomplete layer receive TIMEOUT and finalize with
/// their silent children recorded as missing.
inline CycleResult run_cycle(const TreeTopology& topo, CycleId cycle, const JobTable& table,
                             CounterSource& source, double deadline_s = 60.0,
                             const std::set<NodeId>& down_nodes = {},
                             std::uint64_t scheduler_seed = 0) {
    (void)deadline_s; // carried for interface fidelity; see note above

    struct AgentState {
        const AgentSpec* spec = nullptr;
        int depth = 0;                          // distance from the root
        bool measuring = false;
        bool finalized = false;
        std::set<AgentId> waiting;              // children not yet done
        std::map<AgentId, std::vector<Report>> child_reports;
        std::vector<NodeId> missing;
    };

    std::map<AgentId, AgentState> states;
    for (const auto& [id, spec] : topo.agents) {
        AgentState st;
        st.spec = &spec;
        states.emplace(id, std::move(st));
    }
    {
        std::deque<std::pair<AgentId, int>> queue = {{topo.root, 0}};
        while (!queue.empty()) {
            auto [id, depth] = queue.front();
            queue.pop_front();
            states.at(id).depth = depth;
            for (const AgentId& child : topo.agent(id).children)
                queue.push_back({child, depth + 1});
        }
    }

    using Channel = std::pair<AgentId, AgentId>;
    std::map<Channel, std::deque<AgentMessage>> channels;
    auto post = [&](AgentMessage msg) {
        channels[{msg.sender, msg.receiver}].push_back(std::move(msg));
    };

    CycleResult result;
    result.cycle_ts = cycle.ts;

    // Finalizes an agent whose children are all accounted for: aggregate per
    // (job, metric) over reporting children in canonical order, then either
    // report upward or, at the front end, emit the cycle result.
    auto finalize = [&](AgentState& st) {
        st.finalized = true;
        std::map<std::pair<std::string, PropertyKind>, std::vector<Report>> grouped;
        for (const AgentId& child : st.spec->children) {
            const auto it = st.child_reports.find(child);
            if (it == st.child_reports.end())
                continue;
            for (const Report& r : it->second)
                grouped[{r.job_id, r.metric}].push_back(r);
        }

        std::vector<Report> outgoing;
        for (auto& [key, reports] : grouped) {
            bool raws = true;
            for (const Report& r : reports)
                raws = raws && r.raw_values.size() == r.summary.count;
            Report merged;
            merged.cycle_ts = cycle.ts;
            merged.job_id = key.first;
            merged.metric = key.second;
            merged.summary = st.spec->role == AgentRole::Collector
                                 ? collector_aggregate(reports, raws)
                                 : sync_merge(reports);
            outgoing.push_back(std::move(merged));
        }

        std::sort(st.missing.begin(), st.missing.end());
        st.missing.erase(std::unique(st.missing.begin(), st.missing.end()),
                         st.missing.end());

        if (st.spec->id == topo.root) {
            for (Report& r : outgoing)
                result.records.push_back({std::move(r.job_id), r.metric, r.summary});
            result.missing_nodes = st.missing;
            return;
        }
        for (Report& r : outgoing) {
            AgentMessage msg;
            msg.kind = AgentMessage::Kind::Report;
            msg.cycle_ts = cycle.ts;
            msg.sender = st.spec->id;
            msg.receiver = st.spec->parent;
            msg.report = std::move(r);
            post(std::move(msg));
        }
        AgentMessage done;
        done.kind = AgentMessage::Kind::CycleDone;
        done.cycle_ts = cycle.ts;
        done.sender = st.spec->id;
        done.receiver = st.spec->parent;
        done.missing_nodes = st.missing;
        post(std::move(done));
    };

    auto dispatch = [&](const AgentMessage& msg) {
        AgentState& st = states.at(msg.receiver);
        if (msg.cycle_ts != cycle.ts)
            throw MixedKey("message carries a foreign cycle timestamp");
        switch (msg.kind) {
        case AgentMessage::Kind::Measure: {
            if (st.spec->role == AgentRole::Persyst) {
                // Leaves respond inline and never enter the timeout scan; a
                // dead leaf simply stays silent and its parent times out.
                if (down_nodes.count(st.spec->node))
                    return;
                auto reports = persyst_measure(st.spec->node, cycle, table, source);
                for (Report& r : reports) {
                    AgentMessage m;
                    m.kind = AgentMessage::Kind::Report;
                    m.cycle_ts = cycle.ts;
                    m.sender = st.spec->id;
                    m.receiver = st.spec->parent;
                    m.report = std::move(r);
                    post(std::move(m));
                }
                AgentMessage done;
                done.kind = AgentMessage::Kind::CycleDone;
                done.cycle_ts = cycle.ts;
                done.sender = st.spec->id;
                done.receiver = st.spec->parent;
                post(std::move(done));
                return;
            }
            st.measuring = true;
            for (const AgentId& child : st.spec->children) {
                st.waiting.insert(child);
                AgentMessage m;
                m.kind = AgentMessage::Kind::Measure;
                m.cycle_ts = cycle.ts;
                m.sender = st.spec->id;
                m.receiver = child;
                post(std::move(m));
            }
            if (st.waiting.empty())
                finalize(st);
            return;
        }
        case AgentMessage::Kind::Report:
            st.child_reports[msg.sender].push_back(*msg.report);
            return;
        case AgentMessage::Kind::CycleDone:
            st.waiting.erase(msg.sender);
            st.missing.insert(st.missing.end(), msg.missing_nodes.begin(),
                              msg.missing_nodes.end());
            if (st.measuring && !st.finalized && st.waiting.empty())
                finalize(st);
            return;
        case AgentMessage::Kind::Timeout: {
            if (st.finalized)
                return;
            for (const AgentId& silent : st.waiting)
                detail::collect_subtree_nodes(topo, silent, st.missing);
            st.waiting.clear();
            finalize(st);
            return;
        }
        }
    };

    std::uint64_t rng = detail::mix64(scheduler_seed ^ 0x5eedULL);
    auto drain = [&] {
        for (;;) {
            std::vector<std::map<Channel, std::deque<AgentMessage>>::iterator> ready;
            for (auto it = channels.begin(); it != channels.end(); ++it)
                if (!it->second.empty())
                    ready.push_back(it);
            if (ready.empty())
                return;
            rng = detail::mix64(rng);
            auto& queue = ready[rng % ready.size()]->second;
            const AgentMessage msg = std::move(queue.front());
            queue.pop_front();
            dispatch(msg);
        }
    };

    AgentMessage kick;
    kick.kind = AgentMessage::Kind::Measure;
    kick.cycle_ts = cycle.ts;
    kick.sender = topo.root;
    kick.receiver = topo.root;
    post(std::move(kick));

    while (true) {
        drain();
        if (states.at(topo.root).finalized)
            break;
        // Deadline: time out the deepest layer that is still waiting.
        int deepest = -1;
        for (const auto& [id, st] : states)
            if (st.measuring && !st.finalized)
                deepest = std::max(deepest, st.depth);
        if (deepest < 0)
            throw Error("cycle stalled without any waiting agent");
        for (const auto& [id, st] : states) {
            if (st.measuring && !st.finalized && st.depth == deepest) {
                AgentMessage timeout;
                timeout.kind = AgentMessage::Kind::Timeout;
                timeout.cycle_ts = cycle.ts;
                timeout.sender = id;
                timeout.receiver = id;
                post(std::move(timeout));
            }
        }
    }

    std::sort(result.records.begin(), result.records.end(),
              [](const CycleRecord& a, const CycleRecord& b) {
                  if (a.job_id != b.job_id)
                      return a.job_id < b.job_id;
                  return static_cast<int>(a.metric) < static_cast<int>(b.metric);
              });
    return result;
}

} // namespace treemon
