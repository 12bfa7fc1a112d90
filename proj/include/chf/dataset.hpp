#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "chf/editdist.hpp"
#include "chf/traces.hpp"

namespace chf {

/// A tutor's rating of one edit suggested for one recorded state.
struct TutorHint {
    std::string trace;
    int step = 0;   // 1-based index into the trace's recorded states
    State state;    // the annotated state, canonicalized
    Edit edit;
    double quality = 0.0;
};

struct Dataset {
    StateKind kind = StateKind::sequence;
    std::vector<Trace> traces;
    std::vector<TutorHint> tutor_hints;
};

/// Parses the dataset JSON document. Sequence states may be given as arrays
/// of strings or, for convenience, as plain strings split into characters.
/// States are canonicalized and consecutive duplicates collapsed; tutor-hint
/// steps refer to the states as listed in the file.
Dataset parse_dataset(const nlohmann::json& j, const CanonConfig& cfg = {});

/// Reads and parses a dataset file. Errors carry line/column information.
Dataset load_dataset(const std::string& path, const CanonConfig& cfg = {});

nlohmann::json dataset_to_json(const Dataset& d);

/// Successful traces, goal-filtered under the raw edit distance.
std::vector<Trace> training_traces(const Dataset& d, const CostModel& c);

std::string state_text(const State& s);

}  // namespace chf
