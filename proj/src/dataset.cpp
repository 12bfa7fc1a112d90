#include "chf/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace chf {

namespace {

State state_from_json(const nlohmann::json& j, StateKind kind) {
    if (kind == StateKind::tree) {
        if (!j.is_string()) throw DataError("tree states must be bracket-notation strings");
        return parse_tree(j.get<std::string>());
    }
    if (j.is_string()) return sequence_of_chars(j.get<std::string>());
    if (!j.is_array()) throw DataError("sequence states must be arrays of strings");
    Sequence s;
    for (const auto& e : j) {
        if (!e.is_string() || e.get<std::string>().empty())
            throw DataError("sequence symbols must be non-empty strings");
        s.symbols.push_back(e.get<std::string>());
    }
    return s;
}

nlohmann::json state_to_json(const State& s) {
    if (const auto* t = std::get_if<Tree>(&s)) return serialize_tree(*t);
    return std::get<Sequence>(s).symbols;
}

}  // namespace

std::string state_text(const State& s) { return state_key(s); }

Dataset parse_dataset(const nlohmann::json& j, const CanonConfig& cfg) {
    validate(cfg);
    Dataset d;
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "tree")
            d.kind = StateKind::tree;
        else if (kind == "sequence")
            d.kind = StateKind::sequence;
        else
            throw DataError("dataset kind must be \"tree\" or \"sequence\"");

        std::map<std::string, std::vector<State>> raw_by_id;
        for (const auto& jt : j.at("traces")) {
            Trace t;
            const auto& id = jt.at("id");
            t.id = id.is_string() ? id.get<std::string>() : id.dump();
            t.successful = jt.value("successful", true);
            for (const auto& js : jt.at("states")) t.states.push_back(state_from_json(js, d.kind));
            if (t.states.empty()) throw DataError("trace '" + t.id + "' has no states");
            if (!raw_by_id.emplace(t.id, t.states).second) throw DataError("duplicate trace id '" + t.id + "'");
            d.traces.push_back(ingest(std::move(t), cfg));
        }

        if (j.contains("tutor_hints"))
            for (const auto& jh : j.at("tutor_hints")) {
                TutorHint h;
                const auto& id = jh.at("trace");
                h.trace = id.is_string() ? id.get<std::string>() : id.dump();
                h.step = jh.at("step").get<int>();
                auto it = raw_by_id.find(h.trace);
                if (it == raw_by_id.end()) throw DataError("tutor hint refers to unknown trace '" + h.trace + "'");
                if (h.step < 1 || h.step > static_cast<int>(it->second.size()))
                    throw DataError("tutor hint step out of range for trace '" + h.trace + "'");
                h.state = canonicalize(it->second[h.step - 1], cfg);
                h.edit = edit_from_json(jh.at("edit"));
                h.quality = jh.at("quality").get<double>();
                if (h.quality < 0.0 || h.quality > 1.0) throw DataError("tutor hint quality must lie in [0, 1]");
                d.tutor_hints.push_back(std::move(h));
            }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed dataset: ") + e.what());
    }
    return d;
}

Dataset load_dataset(const std::string& path, const CanonConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw DataError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
    try {
        return parse_dataset(j, cfg);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

nlohmann::json dataset_to_json(const Dataset& d) {
    nlohmann::json j;
    j["kind"] = d.kind == StateKind::tree ? "tree" : "sequence";
    j["traces"] = nlohmann::json::array();
    for (const auto& t : d.traces) {
        nlohmann::json jt;
        jt["id"] = t.id;
        jt["successful"] = t.successful;
        jt["states"] = nlohmann::json::array();
        for (const auto& s : t.states) jt["states"].push_back(state_to_json(s));
        j["traces"].push_back(std::move(jt));
    }
    return j;
}

std::vector<Trace> training_traces(const Dataset& d, const CostModel& c) {
    std::vector<Trace> out;
    Metric metric = [&c](const State& a, const State& b) { return edit_distance_value(a, b, c); };
    for (const auto& t : d.traces)
        if (t.successful) out.push_back(goal_filter(t, metric));
    return out;
}

}  // namespace chf
