#pragma once

#include <functional>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "chf/states.hpp"

namespace chf {

/// An edit that cannot be applied to the given state.
class AddressError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Single-symbol edit on a sequence. Positions are 1-based. For insert,
/// `position` is the index the new symbol occupies afterwards (1..n+1).
struct SeqEdit {
    enum class Kind { remove, insert, relabel };
    Kind kind;
    int position;
    Label label;  // empty for remove

    friend bool operator==(const SeqEdit&, const SeqEdit&) = default;
};

/// Single-node edit on a tree.
///
/// `path` lists 1-based child indices from the root; the empty path is the
/// root. Intermediate states of a script may be forests (after deleting a
/// root with several children). Those are addressed through a virtual
/// super-root written as a leading 0: `[0]` is the super-root itself and
/// `[0, k, ...]` starts at the k-th top-level tree.
///
/// remove promotes the node's children into its parent at the node's index.
/// insert addresses the new node's parent and adopts that parent's children
/// [first, first + count) as its own; with count 0 it becomes a leaf at
/// index `first`. relabel changes the label only.
struct TreeEdit {
    enum class Kind { remove, insert, relabel };
    Kind kind;
    std::vector<int> path;
    Label label;  // empty for remove
    int span_first = 0;
    int span_count = 0;

    friend bool operator==(const TreeEdit&, const TreeEdit&) = default;
};

using Edit = std::variant<SeqEdit, TreeEdit>;

inline constexpr double infinite_cost = std::numeric_limits<double>::infinity();

/// Symmetric edit costs: one indel cost per label (deletion and insertion
/// cost the same) and a relabel cost evaluated on the ordered label pair,
/// which is zero for equal labels.
class CostModel {
public:
    using IndelFn = std::function<double(const Label&)>;
    using RelabelFn = std::function<double(const Label&, const Label&)>;

    CostModel();  // unit costs
    CostModel(IndelFn indel, RelabelFn relabel);

    static CostModel unit();

    /// Labels are split at the first `separator` into a type and a text.
    /// Relabeling across types is infinite; within a type it costs the
    /// character-level Levenshtein distance of the texts divided by the
    /// longer text length (0 to 1).
    static CostModel typed(char separator);

    double indel(const Label& l) const { return indel_(l); }
    double relabel(const Label& a, const Label& b) const;

private:
    IndelFn indel_;
    RelabelFn relabel_;
};

/// Builds a cost model from its JSON description:
/// `{"model":"unit"}`, `{"model":"typed","separator":":"}`, or
/// `{"model":"table","indel":1,"relabel":1,"indel_by_label":{...}}`.
CostModel cost_model_from_json(const nlohmann::json& j);

struct EditScript {
    std::vector<Edit> edits;
    double total_cost = 0.0;
};

struct DistanceResult {
    double distance = 0.0;
    EditScript script;
};

DistanceResult seq_distance(const Sequence& x, const Sequence& y, const CostModel& c = {});
DistanceResult tree_distance(const Tree& x, const Tree& y, const CostModel& c = {});

/// Distance only; cheaper than the scripted variants.
double seq_distance_value(const Sequence& x, const Sequence& y, const CostModel& c = {});
double tree_distance_value(const Tree& x, const Tree& y, const CostModel& c = {});

/// Dispatches on the state kind. Throws DataError on mixed kinds.
DistanceResult edit_distance(const State& x, const State& y, const CostModel& c = {});
double edit_distance_value(const State& x, const State& y, const CostModel& c = {});

Sequence apply_edit(const Sequence& s, const SeqEdit& e);
Tree apply_edit(const Tree& t, const TreeEdit& e);
State apply_edit(const State& s, const Edit& e);

/// The edits of the script from x to y, each addressed against x itself so
/// it can be applied on its own. Tree inserts that hang below another newly
/// inserted node have no such form and are left out.
std::vector<Edit> standalone_edits(const State& x, const State& y, const CostModel& c = {});

/// Replays a script; intermediate tree states may be forests.
State apply_script(const State& s, const EditScript& script);

SeqEdit invert_edit(const SeqEdit& e, const Sequence& s);
TreeEdit invert_edit(const TreeEdit& e, const Tree& t);
Edit invert_edit(const Edit& e, const State& s);

/// Cost of applying `e` to `s`.
double edit_cost(const Edit& e, const State& s, const CostModel& c);

nlohmann::json to_json(const Edit& e);
Edit edit_from_json(const nlohmann::json& j);

/// Compact JSON text of the edit; used as its identity for deduplication,
/// matching against tutor hints, and lexicographic tie-breaks.
std::string edit_key(const Edit& e);

/// Pairwise raw edit distances of `states`, computed over the upper triangle
/// in parallel. Deterministic regardless of thread schedule.
std::vector<std::vector<double>> pairwise_distances(const std::vector<State>& states, const CostModel& c);

}  // namespace chf
