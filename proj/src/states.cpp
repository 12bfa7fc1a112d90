#include "chf/states.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

namespace chf {

std::size_t Tree::size() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.size();
    return n;
}

namespace {

bool is_delimiter(char c) {
    return c == '(' || c == ')' || c == ',' || c == '"' || c == '\\' || c == ' ' || c == '\t' ||
           c == '\n' || c == '\r';
}

bool needs_quotes(const Label& l) {
    return l.empty() || std::any_of(l.begin(), l.end(), is_delimiter);
}

void write_label(const Label& l, std::string& out) {
    if (!needs_quotes(l)) {
        out += l;
        return;
    }
    out += '"';
    for (char c : l) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
}

void write_tree(const Tree& t, std::string& out) {
    write_label(t.label, out);
    if (t.children.empty()) return;
    out += '(';
    for (std::size_t i = 0; i < t.children.size(); ++i) {
        if (i) out += ',';
        write_tree(t.children[i], out);
    }
    out += ')';
}

class TreeParser {
public:
    explicit TreeParser(std::string_view text) : text_(text) {}

    Tree parse() {
        Tree t = parse_node(0);
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return t;
    }

private:
    // Guards against stack exhaustion on adversarial input.
    static constexpr int max_depth = 10000;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() &&
               (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r' || text_[pos_] == '\n'))
            ++pos_;
    }

    Label parse_label() {
        skip_ws();
        if (pos_ >= text_.size()) fail("expected label");
        Label l;
        if (text_[pos_] == '"') {
            ++pos_;
            while (true) {
                if (pos_ >= text_.size()) fail("unterminated quoted label");
                char c = text_[pos_++];
                if (c == '"') break;
                if (c == '\\') {
                    if (pos_ >= text_.size()) fail("dangling escape");
                    c = text_[pos_++];
                }
                if (c == '\n') fail("newline in label");
                l += c;
            }
            if (l.empty()) fail("empty label");
            return l;
        }
        while (pos_ < text_.size() && !is_delimiter(text_[pos_])) l += text_[pos_++];
        if (l.empty()) fail("expected label");
        return l;
    }

    Tree parse_node(int depth) {
        if (depth > max_depth) fail("tree nesting too deep");
        Tree t(parse_label());
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            ++pos_;
            while (true) {
                t.children.push_back(parse_node(depth + 1));
                skip_ws();
                if (pos_ >= text_.size()) fail("expected ',' or ')'");
                char c = text_[pos_++];
                if (c == ')') break;
                if (c != ',') {
                    --pos_;
                    fail("expected ',' or ')'");
                }
            }
        }
        return t;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

bool contains(const std::vector<Label>& v, const Label& l) {
    return std::find(v.begin(), v.end(), l) != v.end();
}

bool is_canonical_variable_name(const Label& l) {
    return l.size() >= 2 && l[0] == 'v' &&
           std::all_of(l.begin() + 1, l.end(), [](char c) { return c >= '0' && c <= '9'; });
}

struct Canonicalizer {
    const CanonConfig& cfg;

    bool is_variable(const Label& l) const {
        if (cfg.variable_label_prefixes.empty()) return false;
        if (is_canonical_variable_name(l)) return true;
        return std::any_of(cfg.variable_label_prefixes.begin(), cfg.variable_label_prefixes.end(),
                           [&](const Label& p) { return l.compare(0, p.size(), p) == 0; });
    }

    void drop_dead(Tree& t) const {
        std::erase_if(t.children, [&](const Tree& c) { return contains(cfg.dead_labels, c.label); });
        for (auto& c : t.children) drop_dead(c);
    }

    // Serialization with every variable label replaced by one placeholder, so
    // the child order does not depend on the names later assigned.
    void masked_text(const Tree& t, std::string& out) const {
        if (is_variable(t.label))
            out += "\x01";
        else
            write_label(t.label, out);
        if (t.children.empty()) return;
        out += '(';
        for (std::size_t i = 0; i < t.children.size(); ++i) {
            if (i) out += ',';
            masked_text(t.children[i], out);
        }
        out += ')';
    }

    void sort_commutative(Tree& t) const {
        for (auto& c : t.children) sort_commutative(c);
        if (!contains(cfg.commutative_labels, t.label) || t.children.size() < 2) return;
        std::vector<std::pair<std::string, Tree>> keyed;
        keyed.reserve(t.children.size());
        for (auto& c : t.children) {
            std::string key;
            masked_text(c, key);
            keyed.emplace_back(std::move(key), std::move(c));
        }
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 0; i < keyed.size(); ++i) t.children[i] = std::move(keyed[i].second);
    }

    void rename(Tree& t, std::map<Label, Label>& names) const {
        if (is_variable(t.label)) {
            auto [it, inserted] = names.try_emplace(t.label, "");
            if (inserted) it->second = "v" + std::to_string(names.size());
            t.label = it->second;
        }
        for (auto& c : t.children) rename(c, names);
    }
};

}  // namespace

Tree parse_tree(std::string_view text) { return TreeParser(text).parse(); }

std::string serialize_tree(const Tree& t) {
    std::string out;
    write_tree(t, out);
    return out;
}

Sequence parse_sequence(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid sequence JSON: ") + e.what(), e.byte);
    }
    if (!j.is_array()) throw ParseError("sequence must be a JSON array", 0);
    Sequence s;
    for (const auto& e : j) {
        if (!e.is_string() || e.get<std::string>().empty())
            throw ParseError("sequence symbols must be non-empty strings", 0);
        s.symbols.push_back(e.get<std::string>());
    }
    return s;
}

std::string serialize_sequence(const Sequence& s) { return nlohmann::json(s.symbols).dump(); }

Sequence sequence_of_chars(std::string_view text) {
    Sequence s;
    for (char c : text) s.symbols.emplace_back(1, c);
    return s;
}

std::string state_key(const State& s) {
    if (const auto* t = std::get_if<Tree>(&s)) return serialize_tree(*t);
    return serialize_sequence(std::get<Sequence>(s));
}

State parse_state(std::string_view text, StateKind kind) {
    if (kind == StateKind::tree) return parse_tree(text);
    return parse_sequence(text);
}

void validate(const CanonConfig& cfg) {
    std::set<Label> seen;
    for (const auto* list : {&cfg.variable_label_prefixes, &cfg.commutative_labels, &cfg.dead_labels}) {
        std::set<Label> mine(list->begin(), list->end());
        for (const auto& l : mine)
            if (!seen.insert(l).second)
                throw DataError("canonicalization label '" + l + "' appears in more than one list");
    }
}

Tree canonicalize(const Tree& t, const CanonConfig& cfg) {
    if (cfg.empty()) return t;
    Canonicalizer c{cfg};
    Tree out = t;
    c.drop_dead(out);
    c.sort_commutative(out);
    std::map<Label, Label> names;
    c.rename(out, names);
    return out;
}

State canonicalize(const State& s, const CanonConfig& cfg) {
    if (const auto* t = std::get_if<Tree>(&s)) return canonicalize(*t, cfg);
    return s;
}

}  // namespace chf
