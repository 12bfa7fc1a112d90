#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "chf/editdist.hpp"
#include "chf/states.hpp"

namespace chf {

struct Trace {
    std::string id;
    std::vector<State> states;
    bool successful = true;
};

using Metric = std::function<double(const State&, const State&)>;

/// Canonicalizes every state and collapses consecutive duplicates.
Trace ingest(Trace t, const CanonConfig& cfg);

/// Keeps the first and final state plus every state strictly closer to the
/// final state than the last state kept.
Trace goal_filter(const Trace& t, const Metric& metric);

enum class TracePosition { start, intermediate, end };

/// Training pairs (x_i, y_i) over the flattened states of a set of traces.
///
/// States are stored trace by trace. Every state is the source of exactly
/// one pair: its successor, or itself when it ends its trace. Pair index and
/// state index therefore coincide.
struct TracePairs {
    std::vector<State> states;
    std::vector<std::pair<std::size_t, std::size_t>> pair_of;
    std::vector<TracePosition> position_of;
    std::vector<std::size_t> trace_of;  // index into `trace_ids`
    std::vector<std::string> trace_ids;

    std::size_t size() const { return pair_of.size(); }
    bool is_final(std::size_t state) const { return position_of[state] == TracePosition::end; }
    std::size_t successor(std::size_t state) const { return pair_of[state].second; }
};

TracePairs build_pairs(const std::vector<Trace>& traces);

struct InteractionNetwork {
    std::vector<State> nodes;  // distinct states, sorted by key
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // distinct, sorted
};

InteractionNetwork interaction_network(const std::vector<Trace>& traces);

struct NetworkStats {
    std::size_t unique_states = 0;
    double fraction_visited_once = 0.0;
};

NetworkStats network_stats(const std::vector<Trace>& traces);

}  // namespace chf
