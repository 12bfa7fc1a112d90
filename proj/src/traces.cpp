#include "chf/traces.hpp"

#include <map>
#include <set>

namespace chf {

Trace ingest(Trace t, const CanonConfig& cfg) {
    Trace out{std::move(t.id), {}, t.successful};
    for (auto& s : t.states) {
        State c = canonicalize(s, cfg);
        if (!out.states.empty() && state_key(out.states.back()) == state_key(c)) continue;
        out.states.push_back(std::move(c));
    }
    return out;
}

Trace goal_filter(const Trace& t, const Metric& metric) {
    if (t.states.size() <= 1) return t;
    const State& goal = t.states.back();
    Trace out{t.id, {t.states.front()}, t.successful};
    double last = metric(t.states.front(), goal);
    for (std::size_t i = 1; i + 1 < t.states.size(); ++i) {
        const double d = metric(t.states[i], goal);
        if (d < last) {
            out.states.push_back(t.states[i]);
            last = d;
        }
    }
    out.states.push_back(goal);
    return out;
}

TracePairs build_pairs(const std::vector<Trace>& traces) {
    TracePairs p;
    for (const auto& t : traces) {
        if (t.states.empty()) continue;
        const std::size_t trace_index = p.trace_ids.size();
        p.trace_ids.push_back(t.id);
        const std::size_t base = p.states.size();
        const std::size_t n = t.states.size();
        for (std::size_t k = 0; k < n; ++k) {
            p.states.push_back(t.states[k]);
            p.trace_of.push_back(trace_index);
            const std::size_t self = base + k;
            p.pair_of.emplace_back(self, k + 1 < n ? self + 1 : self);
            // A single-state trace is both start and end; the end case governs.
            p.position_of.push_back(k + 1 == n ? TracePosition::end
                                    : k == 0   ? TracePosition::start
                                               : TracePosition::intermediate);
        }
    }
    return p;
}

InteractionNetwork interaction_network(const std::vector<Trace>& traces) {
    std::map<std::string, State> nodes;
    std::set<std::pair<std::string, std::string>> edges;
    for (const auto& t : traces)
        for (std::size_t k = 0; k < t.states.size(); ++k) {
            nodes.emplace(state_key(t.states[k]), t.states[k]);
            if (k + 1 < t.states.size()) edges.emplace(state_key(t.states[k]), state_key(t.states[k + 1]));
        }
    InteractionNetwork net;
    std::map<std::string, std::size_t> index;
    for (auto& [key, s] : nodes) {
        index[key] = net.nodes.size();
        net.nodes.push_back(s);
    }
    for (const auto& [a, b] : edges) net.edges.emplace_back(index[a], index[b]);
    return net;
}

NetworkStats network_stats(const std::vector<Trace>& traces) {
    std::map<std::string, std::size_t> visits;
    for (const auto& t : traces)
        for (const auto& s : t.states) ++visits[state_key(s)];
    NetworkStats st;
    st.unique_states = visits.size();
    if (visits.empty()) return st;
    std::size_t once = 0;
    for (const auto& [k, v] : visits)
        if (v == 1) ++once;
    st.fraction_visited_once = static_cast<double>(once) / static_cast<double>(visits.size());
    return st;
}

}  // namespace chf
