#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chf {

using Label = std::string;

/// Raised for malformed input data (tree text, dataset files, edit JSON).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tree text that does not match the bracket grammar. offset() is the byte
/// position at which parsing stopped.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

struct Sequence {
    std::vector<Label> symbols;

    friend bool operator==(const Sequence&, const Sequence&) = default;
};

/// Rooted, ordered, labeled tree. Children are held by value.
struct Tree {
    Label label;
    std::vector<Tree> children;

    Tree() = default;
    explicit Tree(Label l, std::vector<Tree> c = {}) : label(std::move(l)), children(std::move(c)) {}

    std::size_t size() const;
    friend bool operator==(const Tree&, const Tree&) = default;
};

using State = std::variant<Sequence, Tree>;

enum class StateKind { sequence, tree };

inline StateKind kind_of(const State& s) {
    return std::holds_alternative<Tree>(s) ? StateKind::tree : StateKind::sequence;
}

/// Bracket notation: `label` or `label(child,child,...)`. Labels containing
/// `(),"`, backslash or whitespace are double-quoted with backslash escapes.
Tree parse_tree(std::string_view text);
std::string serialize_tree(const Tree& t);

/// Sequences are written as JSON arrays of strings.
Sequence parse_sequence(std::string_view text);
std::string serialize_sequence(const Sequence& s);

/// Builds a sequence whose symbols are the single characters of `text`.
Sequence sequence_of_chars(std::string_view text);

/// Stable textual key, suitable for equality and ordering of states.
std::string state_key(const State& s);

/// Parses either tree text or a sequence (JSON array) depending on `kind`.
State parse_state(std::string_view text, StateKind kind);

struct CanonConfig {
    std::vector<Label> variable_label_prefixes;
    std::vector<Label> commutative_labels;
    std::vector<Label> dead_labels;

    bool empty() const {
        return variable_label_prefixes.empty() && commutative_labels.empty() && dead_labels.empty();
    }
};

/// Throws DataError if the three label lists overlap.
void validate(const CanonConfig& cfg);

/// Removes dead subtrees (the root is always kept), orders the children of
/// commutative nodes, and renames variables to v1, v2, ... in pre-order of
/// first occurrence. Idempotent.
Tree canonicalize(const Tree& t, const CanonConfig& cfg);

/// Sequences are returned unchanged.
State canonicalize(const State& s, const CanonConfig& cfg);

}  // namespace chf
