#pragma once

#include <cstdint>
#include <cstdio>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "treemon/errors.hpp"

namespace treemon {

using NodeId = std::int32_t;
using AgentId = std::string;

enum class AgentRole { SyncFrontend, SyncMiddle, Collector, Persyst };

constexpr std::string_view role_token(AgentRole role) {
    switch (role) {
    case AgentRole::SyncFrontend: return "SYNC_FRONTEND";
    case AgentRole::SyncMiddle: return "SYNC_MIDDLE";
    case AgentRole::Collector: return "COLLECTOR";
    case AgentRole::Persyst: return "PERSYST";
    }
    return "";
}

struct AgentSpec {
    AgentId id;
    AgentRole role = AgentRole::Persyst;
    AgentId parent;                 // empty only for the front end
    std::vector<AgentId> children;  // canonical order: ascending id
    NodeId node = -1;               // compute node, PERSYST role only
};

// Agent ids embed zero-padded indices so lexicographic order equals numeric
// order and the canonical child ordering is a plain string sort.
inline AgentId persyst_id(NodeId node) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%06d", node);
    return buf;
}

inline AgentId collector_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%06d", index);
    return buf;
}

inline AgentId sync_id(int layer, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%d_%06d", layer, index);
    return buf;
}

struct TreeTopology {
    std::map<AgentId, AgentSpec> agents;
    AgentId root;
    int node_count = 0;
    int collector_fanout = 0;
    int sync_fanout = 0;

    const AgentSpec& agent(const AgentId& id) const {
        const auto it = agents.find(id);
        if (it == agents.end())
            throw Error("unknown agent id: " + id);
        return it->second;
    }
};

/// Builds the agent tree: one PERSYST agent per compute node, collectors over
/// contiguous chunks of nodes, then SyncAgent layers shrinking by sync_fanout
/// until a single front end remains. sync_fanout is clamped to >= 2 because a
/// reduction layer cannot shrink otherwise.
inline TreeTopology build_tree(int node_count, int collector_fanout = 512,
                               int sync_fanout = 64) {
    if (node_count < 1 || collector_fanout < 1 || sync_fanout < 1)
        throw Error("build_tree: all arguments must be >= 1");

    TreeTopology topo;
    topo.node_count = node_count;
    topo.collector_fanout = collector_fanout;
    topo.sync_fanout = std::max(sync_fanout, 2);

    for (NodeId node = 0; node < node_count; ++node) {
        AgentSpec spec;
        spec.id = persyst_id(node);
        spec.role = AgentRole::Persyst;
        spec.node = node;
        topo.agents.emplace(spec.id, std::move(spec));
    }

    auto attach_layer = [&](const std::vector<AgentId>& children, int fanout,
                            auto make_id, AgentRole role) {
        std::vector<AgentId> layer;
        for (std::size_t pos = 0; pos < children.size(); pos += fanout) {
            AgentSpec spec;
            spec.id = make_id(static_cast<int>(layer.size()));
            spec.role = role;
            const std::size_t end = std::min(pos + fanout, children.size());
            for (std::size_t i = pos; i < end; ++i) {
                spec.children.push_back(children[i]);
                topo.agents.at(children[i]).parent = spec.id;
            }
            layer.push_back(spec.id);
            topo.agents.emplace(spec.id, std::move(spec));
        }
        return layer;
    };

    std::vector<AgentId> nodes;
    nodes.reserve(node_count);
    for (NodeId node = 0; node < node_count; ++node)
        nodes.push_back(persyst_id(node));

    std::vector<AgentId> layer =
        attach_layer(nodes, collector_fanout, collector_id, AgentRole::Collector);

    int sync_layer = 1;
    for (;;) {
        const auto groups =
            (layer.size() + topo.sync_fanout - 1) / static_cast<std::size_t>(topo.sync_fanout);
        const AgentRole role =
            groups == 1 ? AgentRole::SyncFrontend : AgentRole::SyncMiddle;
        const int this_layer = sync_layer;
        layer = attach_layer(
            layer, topo.sync_fanout,
            [&](int index) { return sync_id(this_layer, index); }, role);
        ++sync_layer;
        if (layer.size() == 1 && role == AgentRole::SyncFrontend)
            break;
    }
    topo.root = layer.front();
    return topo;
}

struct Violation {
    std::string code;
    std::vector<AgentId> agents;
    std::string detail;
};

/// Checks every structural invariant; violations are data, not errors.
inline std::vector<Violation> validate(const TreeTopology& topo) {
    std::vector<Violation> out;
    auto flag = [&](std::string code, std::vector<AgentId> agents, std::string detail) {
        out.push_back({std::move(code), std::move(agents), std::move(detail)});
    };

    std::vector<AgentId> roots;
    for (const auto& [id, spec] : topo.agents)
        if (spec.parent.empty())
            roots.push_back(id);
    if (roots.empty())
        flag("missing-root", {}, "no parentless agent");
    if (roots.size() > 1)
        flag("multiple-roots", roots, "more than one parentless agent");
    for (const AgentId& id : roots)
        if (topo.agents.at(id).role != AgentRole::SyncFrontend)
            flag("root-role", {id}, "parentless agent is not the sync front end");

    std::map<NodeId, std::vector<AgentId>> node_agents;
    for (const auto& [id, spec] : topo.agents) {
        if (spec.role == AgentRole::Persyst) {
            if (!spec.children.empty())
                flag("leaf-role", {id}, "measurement agent has children");
            node_agents[spec.node].push_back(id);
        }
        if (spec.role == AgentRole::SyncFrontend && !spec.parent.empty())
            flag("layer-order", {id}, "front end has a parent");

        for (const AgentId& child_id : spec.children) {
            const auto child_it = topo.agents.find(child_id);
            if (child_it == topo.agents.end()) {
                flag("dangling-ref", {id, child_id}, "child id not in the tree");
                continue;
            }
            const AgentSpec& child = child_it->second;
            if (child.parent != id)
                flag("parent-link", {id, child_id},
                     "child does not name this agent as parent");
            const bool ok =
                (spec.role == AgentRole::Collector && child.role == AgentRole::Persyst) ||
                ((spec.role == AgentRole::SyncFrontend || spec.role == AgentRole::SyncMiddle) &&
                 (child.role == AgentRole::Collector || child.role == AgentRole::SyncMiddle));
            if (!ok && spec.role != AgentRole::Persyst)
                flag("layer-order", {id, child_id}, "child role invalid for parent role");
        }

        if (!std::is_sorted(spec.children.begin(), spec.children.end()))
            flag("child-order", {id}, "children not in ascending id order");

        const int fanout = spec.role == AgentRole::Collector ? topo.collector_fanout
                                                             : topo.sync_fanout;
        if (spec.role != AgentRole::Persyst &&
            spec.children.size() > static_cast<std::size_t>(fanout))
            flag("fanout", {id}, "child count exceeds the role's fanout");
    }

    for (NodeId node = 0; node < topo.node_count; ++node) {
        const auto it = node_agents.find(node);
        if (it == node_agents.end())
            flag("node-coverage", {}, "node " + std::to_string(node) +
                                          " has no measurement agent");
        else if (it->second.size() > 1)
            flag("node-coverage", it->second,
                 "node " + std::to_string(node) + " has several measurement agents");
    }

    // Reachability from the root over child links.
    if (topo.agents.count(topo.root)) {
        std::set<AgentId> seen;
        std::deque<AgentId> queue = {topo.root};
        while (!queue.empty()) {
            const AgentId id = queue.front();
            queue.pop_front();
            if (!seen.insert(id).second)
                continue;
            const auto it = topo.agents.find(id);
            if (it == topo.agents.end())
                continue;
            for (const AgentId& child : it->second.children)
                queue.push_back(child);
        }
        for (const auto& [id, spec] : topo.agents)
            if (!seen.count(id))
                flag("unreachable", {id}, "agent not reachable from the root");
    } else {
        flag("missing-root", {topo.root}, "root id not present in the tree");
    }
    return out;
}

/// Line-oriented dump, one agent per line, breadth first from the root:
/// id <TAB> role <TAB> parent <TAB> child_count <TAB> node_id, `-` for absent.
inline std::string format_topology(const TreeTopology& topo) {
    std::string out;
    std::deque<AgentId> queue = {topo.root};
    while (!queue.empty()) {
        const AgentSpec& spec = topo.agent(queue.front());
        queue.pop_front();
        out += spec.id;
        out += '\t';
        out += role_token(spec.role);
        out += '\t';
        out += spec.parent.empty() ? "-" : spec.parent;
        out += '\t';
        out += std::to_string(spec.children.size());
        out += '\t';
        out += spec.role == AgentRole::Persyst ? std::to_string(spec.node) : "-";
        out += '\n';
        for (const AgentId& child : spec.children)
            queue.push_back(child);
    }
    return out;
}

// Counts agents per role; handy for assertions and the CLI.
inline std::map<AgentRole, int> role_census(const TreeTopology& topo) {
    std::map<AgentRole, int> census;
    for (const auto& [id, spec] : topo.agents)
        ++census[spec.role];
    return census;
}

} // namespace treemon
