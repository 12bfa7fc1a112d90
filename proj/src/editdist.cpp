#include "chf/editdist.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include <json.hpp>

namespace chf {

// ---------------------------------------------------------------------------
// Cost models

CostModel::CostModel() : CostModel([](const Label&) { return 1.0; }, [](const Label&, const Label&) { return 1.0; }) {}

CostModel::CostModel(IndelFn indel, RelabelFn relabel) : indel_(std::move(indel)), relabel_(std::move(relabel)) {}

CostModel CostModel::unit() { return CostModel(); }

double CostModel::relabel(const Label& a, const Label& b) const {
    if (a == b) return 0.0;
    return a < b ? relabel_(a, b) : relabel_(b, a);
}

namespace {

double char_levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0)});
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[b.size()]);
}

}  // namespace

CostModel CostModel::typed(char separator) {
    auto split = [separator](const Label& l) {
        auto p = l.find(separator);
        if (p == Label::npos) return std::pair<std::string, std::string>{l, ""};
        return std::pair<std::string, std::string>{l.substr(0, p), l.substr(p + 1)};
    };
    return CostModel([](const Label&) { return 1.0; },
                     [split](const Label& a, const Label& b) {
                         auto [ta, xa] = split(a);
                         auto [tb, xb] = split(b);
                         if (ta != tb) return infinite_cost;
                         auto longest = std::max(xa.size(), xb.size());
                         if (longest == 0) return 0.0;
                         return char_levenshtein(xa, xb) / static_cast<double>(longest);
                     });
}

CostModel cost_model_from_json(const nlohmann::json& j) {
    const std::string model = j.value("model", "unit");
    if (model == "unit") return CostModel::unit();
    if (model == "typed") {
        auto sep = j.value("separator", std::string(":"));
        if (sep.size() != 1) throw DataError("typed cost model needs a one-character separator");
        return CostModel::typed(sep[0]);
    }
    if (model == "table") {
        double indel = j.value("indel", 1.0);
        double relabel = j.value("relabel", 1.0);
        std::map<Label, double> by_label;
        if (j.contains("indel_by_label"))
            for (const auto& [k, v] : j.at("indel_by_label").items()) by_label[k] = v.get<double>();
        if (!(indel > 0) || relabel < 0) throw DataError("table cost model needs indel > 0 and relabel >= 0");
        for (const auto& [k, v] : by_label)
            if (!(v > 0)) throw DataError("indel cost for '" + k + "' must be positive");
        return CostModel(
            [indel, by_label](const Label& l) {
                auto it = by_label.find(l);
                return it == by_label.end() ? indel : it->second;
            },
            [relabel](const Label&, const Label&) { return relabel; });
    }
    throw DataError("unknown cost model '" + model + "'");
}

// ---------------------------------------------------------------------------
// Sequences

namespace {

// Suffix formulation: table[i][j] is the distance between x[i..] and y[j..].
// Backtracking forward from (0, 0) yields edits left to right.
std::vector<std::vector<double>> seq_table(const Sequence& x, const Sequence& y, const CostModel& c) {
    const auto n = x.symbols.size(), m = y.symbols.size();
    std::vector<std::vector<double>> d(n + 1, std::vector<double>(m + 1, 0.0));
    for (std::size_t i = n; i-- > 0;) d[i][m] = d[i + 1][m] + c.indel(x.symbols[i]);
    for (std::size_t j = m; j-- > 0;) d[n][j] = d[n][j + 1] + c.indel(y.symbols[j]);
    for (std::size_t i = n; i-- > 0;)
        for (std::size_t j = m; j-- > 0;)
            d[i][j] = std::min({c.relabel(x.symbols[i], y.symbols[j]) + d[i + 1][j + 1],
                                c.indel(x.symbols[i]) + d[i + 1][j], c.indel(y.symbols[j]) + d[i][j + 1]});
    return d;
}

}  // namespace

double seq_distance_value(const Sequence& x, const Sequence& y, const CostModel& c) {
    return seq_table(x, y, c)[0][0];
}

namespace {

// Forward backtrace. Positions refer to the intermediate sequence when
// `source_coords` is false (a replayable script) and to x otherwise.
DistanceResult seq_backtrace(const Sequence& x, const Sequence& y, const CostModel& c, bool source_coords) {
    const auto d = seq_table(x, y, c);
    const auto n = x.symbols.size(), m = y.symbols.size();
    DistanceResult r;
    r.distance = d[0][0];
    std::size_t i = 0, j = 0;
    // Ties prefer relabel, then delete, then insert.
    while (i < n || j < m) {
        const int pos = static_cast<int>(source_coords ? i : j) + 1;
        if (i < n && j < m && d[i][j] == c.relabel(x.symbols[i], y.symbols[j]) + d[i + 1][j + 1]) {
            if (x.symbols[i] != y.symbols[j]) {
                r.script.edits.emplace_back(SeqEdit{SeqEdit::Kind::relabel, pos, y.symbols[j]});
                r.script.total_cost += c.relabel(x.symbols[i], y.symbols[j]);
            }
            ++i;
            ++j;
        } else if (i < n && d[i][j] == c.indel(x.symbols[i]) + d[i + 1][j]) {
            r.script.edits.emplace_back(SeqEdit{SeqEdit::Kind::remove, pos, {}});
            r.script.total_cost += c.indel(x.symbols[i]);
            ++i;
        } else {
            r.script.edits.emplace_back(SeqEdit{SeqEdit::Kind::insert, pos, y.symbols[j]});
            r.script.total_cost += c.indel(y.symbols[j]);
            ++j;
        }
    }
    return r;
}

}  // namespace

DistanceResult seq_distance(const Sequence& x, const Sequence& y, const CostModel& c) {
    return seq_backtrace(x, y, c, false);
}

Sequence apply_edit(const Sequence& s, const SeqEdit& e) {
    const int n = static_cast<int>(s.symbols.size());
    Sequence out = s;
    switch (e.kind) {
        case SeqEdit::Kind::remove:
            if (e.position < 1 || e.position > n) throw AddressError("delete position out of range");
            out.symbols.erase(out.symbols.begin() + (e.position - 1));
            break;
        case SeqEdit::Kind::insert:
            if (e.position < 1 || e.position > n + 1) throw AddressError("insert position out of range");
            if (e.label.empty()) throw AddressError("insert needs a label");
            out.symbols.insert(out.symbols.begin() + (e.position - 1), e.label);
            break;
        case SeqEdit::Kind::relabel:
            if (e.position < 1 || e.position > n) throw AddressError("relabel position out of range");
            if (e.label.empty()) throw AddressError("relabel needs a label");
            out.symbols[e.position - 1] = e.label;
            break;
    }
    return out;
}

SeqEdit invert_edit(const SeqEdit& e, const Sequence& s) {
    apply_edit(s, e);  // validates the address
    switch (e.kind) {
        case SeqEdit::Kind::remove:
            return {SeqEdit::Kind::insert, e.position, s.symbols[e.position - 1]};
        case SeqEdit::Kind::insert:
            return {SeqEdit::Kind::remove, e.position, {}};
        case SeqEdit::Kind::relabel:
            return {SeqEdit::Kind::relabel, e.position, s.symbols[e.position - 1]};
    }
    return e;
}

// ---------------------------------------------------------------------------
// Tree edit application on a forest view

namespace {

// Path with the leading 0 made explicit: [0] is the super-root, [0, k, ...]
// descends from the k-th top-level tree.
std::vector<int> explicit_path(const std::vector<int>& path) {
    if (!path.empty() && path[0] == 0) return path;
    std::vector<int> out{0, 1};
    out.insert(out.end(), path.begin(), path.end());
    return out;
}

template <class Node>
std::vector<Node>& children_at(std::vector<Node>& top, const std::vector<int>& xp, std::size_t depth) {
    std::vector<Node>* level = &top;
    for (std::size_t k = 1; k < depth; ++k) {
        const int idx = xp[k];
        if (idx < 1 || idx > static_cast<int>(level->size())) throw AddressError("path out of range");
        level = &(*level)[idx - 1].children;
    }
    return *level;
}

// Locates a node: returns the sibling list that holds it and its 0-based index.
template <class Node>
std::pair<std::vector<Node>*, std::size_t> locate(std::vector<Node>& top, const std::vector<int>& path) {
    const auto xp = explicit_path(path);
    if (xp.size() < 2) throw AddressError("path addresses the super-root, not a node");
    auto& siblings = children_at(top, xp, xp.size() - 1);
    const int idx = xp.back();
    if (idx < 1 || idx > static_cast<int>(siblings.size())) throw AddressError("path out of range");
    return {&siblings, static_cast<std::size_t>(idx - 1)};
}

template <class Node>
std::vector<Node>& child_list(std::vector<Node>& top, const std::vector<int>& path) {
    const auto xp = explicit_path(path);
    if (xp.size() == 1) return top;
    auto [siblings, idx] = locate(top, path);
    return (*siblings)[idx].children;
}

template <class Node>
Node make_node(const Label& l);

template <>
Tree make_node<Tree>(const Label& l) {
    return Tree(l);
}

template <class Node>
void apply_in_forest(std::vector<Node>& top, const TreeEdit& e) {
    switch (e.kind) {
        case TreeEdit::Kind::remove: {
            auto [siblings, idx] = locate(top, e.path);
            auto kids = std::move((*siblings)[idx].children);
            siblings->erase(siblings->begin() + static_cast<long>(idx));
            siblings->insert(siblings->begin() + static_cast<long>(idx), std::make_move_iterator(kids.begin()),
                             std::make_move_iterator(kids.end()));
            break;
        }
        case TreeEdit::Kind::insert: {
            if (e.label.empty()) throw AddressError("insert needs a label");
            auto& kids = child_list(top, e.path);
            const int n = static_cast<int>(kids.size());
            if (e.span_first < 1 || e.span_count < 0 || e.span_first > n + 1 || e.span_first - 1 + e.span_count > n)
                throw AddressError("child span out of range");
            Node fresh = make_node<Node>(e.label);
            auto first = kids.begin() + (e.span_first - 1);
            auto last = first + e.span_count;
            fresh.children.assign(std::make_move_iterator(first), std::make_move_iterator(last));
            auto at = kids.erase(first, last);
            kids.insert(at, std::move(fresh));
            break;
        }
        case TreeEdit::Kind::relabel: {
            if (e.label.empty()) throw AddressError("relabel needs a label");
            auto [siblings, idx] = locate(top, e.path);
            (*siblings)[idx].label = e.label;
            break;
        }
    }
}

std::vector<int> parent_path(const std::vector<int>& path) {
    if (path.empty()) return {0};
    std::vector<int> p(path.begin(), path.end() - 1);
    return p;
}

std::vector<int> child_path(const std::vector<int>& parent, int index) {
    std::vector<int> p = parent;
    p.push_back(index);
    return p;
}

}  // namespace

Tree apply_edit(const Tree& t, const TreeEdit& e) {
    std::vector<Tree> top{t};
    apply_in_forest(top, e);
    if (top.size() != 1) throw AddressError("edit would leave a forest");
    return std::move(top.front());
}

TreeEdit invert_edit(const TreeEdit& e, const Tree& t) {
    std::vector<Tree> top{t};
    switch (e.kind) {
        case TreeEdit::Kind::remove: {
            auto [siblings, idx] = locate(top, e.path);
            const Tree& node = (*siblings)[idx];
            const auto xp = explicit_path(e.path);
            auto parent = e.path.empty() ? std::vector<int>{0} : parent_path(e.path);
            return {TreeEdit::Kind::insert, parent, node.label, xp.back(), static_cast<int>(node.children.size())};
        }
        case TreeEdit::Kind::insert: {
            apply_in_forest(top, e);
            return {TreeEdit::Kind::remove, child_path(e.path, e.span_first), {}, 0, 0};
        }
        case TreeEdit::Kind::relabel: {
            auto [siblings, idx] = locate(top, e.path);
            return {TreeEdit::Kind::relabel, e.path, (*siblings)[idx].label, 0, 0};
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// Zhang-Shasha

namespace {

struct FlatTree {
    // Nodes indexed by post-order number 1..n (index 0 unused).
    std::vector<Label> label;
    std::vector<int> leftmost;  // post-order index of the leftmost leaf
    std::vector<int> parent;    // 0 for the root
    std::vector<int> preorder;  // 0-based pre-order rank
    std::vector<int> subtree;   // subtree size
    std::vector<int> keyroots;
    int n = 0;

    explicit FlatTree(const Tree& t) {
        n = static_cast<int>(t.size());
        label.assign(n + 1, {});
        leftmost.assign(n + 1, 0);
        parent.assign(n + 1, 0);
        preorder.assign(n + 1, 0);
        subtree.assign(n + 1, 0);
        int post = 0, pre = 0;
        visit(t, post, pre);
        std::vector<bool> seen(n + 2, false);
        for (int i = n; i >= 1; --i)
            if (!seen[leftmost[i]]) {
                seen[leftmost[i]] = true;
                keyroots.push_back(i);
            }
        std::sort(keyroots.begin(), keyroots.end());
    }

    int visit(const Tree& t, int& post, int& pre) {
        const int my_pre = pre++;
        std::vector<int> kids;
        for (const auto& c : t.children) kids.push_back(visit(c, post, pre));
        const int me = ++post;
        label[me] = t.label;
        preorder[me] = my_pre;
        leftmost[me] = kids.empty() ? me : leftmost[kids.front()];
        subtree[me] = me - leftmost[me] + 1;
        for (int k : kids) parent[k] = me;
        return me;
    }
};

class ZhangShasha {
public:
    ZhangShasha(const Tree& x, const Tree& y, const CostModel& c) : a_(x), b_(y), c_(c) {
        td_.assign(a_.n + 1, std::vector<double>(b_.n + 1, 0.0));
        for (int i : a_.keyroots)
            for (int j : b_.keyroots) forest(i, j, true);
    }

    double distance() const { return td_[a_.n][b_.n]; }

    // Node mapping (x post-order -> y post-order, 0 = unmapped).
    std::vector<int> mapping() {
        std::vector<int> map(a_.n + 1, 0);
        std::vector<std::pair<int, int>> stack{{a_.n, b_.n}};
        while (!stack.empty()) {
            auto [i, j] = stack.back();
            stack.pop_back();
            const auto fd = forest(i, j, false);
            const int li = a_.leftmost[i], lj = b_.leftmost[j];
            auto at = [&](int p, int q) { return fd[p - li + 1][q - lj + 1]; };
            int p = i, q = j;
            while (p >= li || q >= lj) {
                if (p >= li && q >= lj) {
                    const bool both_leftmost = a_.leftmost[p] == li && b_.leftmost[q] == lj;
                    if (both_leftmost && at(p, q) == at(p - 1, q - 1) + rel(p, q)) {
                        map[p] = q;
                        --p;
                        --q;
                        continue;
                    }
                    if (!both_leftmost &&
                        at(p, q) == at(a_.leftmost[p] - 1, b_.leftmost[q] - 1) + td_[p][q]) {
                        stack.emplace_back(p, q);
                        p = a_.leftmost[p] - 1;
                        q = b_.leftmost[q] - 1;
                        continue;
                    }
                }
                if (p >= li && at(p, q) == at(p - 1, q) + c_.indel(a_.label[p])) {
                    --p;
                } else {
                    --q;
                }
            }
        }
        return map;
    }

    const FlatTree& source() const { return a_; }
    const FlatTree& target() const { return b_; }

private:
    double rel(int p, int q) const { return c_.relabel(a_.label[p], b_.label[q]); }

    // Forest distance table for the subtrees rooted at i and j. Row/column 0
    // stand for the empty forest. Fills tree distances when `record` is set.
    std::vector<std::vector<double>> forest(int i, int j, bool record) {
        const int li = a_.leftmost[i], lj = b_.leftmost[j];
        const int rows = i - li + 2, cols = j - lj + 2;
        std::vector<std::vector<double>> fd(rows, std::vector<double>(cols, 0.0));
        for (int p = 1; p < rows; ++p) fd[p][0] = fd[p - 1][0] + c_.indel(a_.label[li + p - 1]);
        for (int q = 1; q < cols; ++q) fd[0][q] = fd[0][q - 1] + c_.indel(b_.label[lj + q - 1]);
        for (int p = 1; p < rows; ++p) {
            const int an = li + p - 1;
            for (int q = 1; q < cols; ++q) {
                const int bn = lj + q - 1;
                const double del = fd[p - 1][q] + c_.indel(a_.label[an]);
                const double ins = fd[p][q - 1] + c_.indel(b_.label[bn]);
                if (a_.leftmost[an] == li && b_.leftmost[bn] == lj) {
                    fd[p][q] = std::min({del, ins, fd[p - 1][q - 1] + rel(an, bn)});
                    if (record) td_[an][bn] = fd[p][q];
                } else {
                    const int pp = a_.leftmost[an] - li, qq = b_.leftmost[bn] - lj;
                    fd[p][q] = std::min({del, ins, fd[pp][qq] + td_[an][bn]});
                }
            }
        }
        return fd;
    }

    FlatTree a_, b_;
    const CostModel& c_;
    std::vector<std::vector<double>> td_;
};

// Working node for script extraction: carries the target identity once known.
struct WorkNode {
    Label label;
    int xid = 0;
    int yid = 0;
    std::vector<WorkNode> children;
};

template <>
WorkNode make_node<WorkNode>(const Label& l) {
    return WorkNode{l, 0, 0, {}};
}

WorkNode to_work(const Tree& t, int& post) {
    WorkNode w{t.label, 0, 0, {}};
    for (const auto& c : t.children) w.children.push_back(to_work(c, post));
    w.xid = ++post;
    return w;
}

template <class Pred>
bool find_path(const std::vector<WorkNode>& level, Pred pred, std::vector<int>& path) {
    for (std::size_t k = 0; k < level.size(); ++k) {
        path.push_back(static_cast<int>(k) + 1);
        if (pred(level[k]) || find_path(level[k].children, pred, path)) return true;
        path.pop_back();
    }
    return false;
}

// Explicit path -> the form used in scripts: shorthand while the forest is a
// single tree, explicit [0, ...] otherwise.
std::vector<int> external_path(const std::vector<WorkNode>& top, std::vector<int> xp) {
    if (top.size() == 1 && xp.size() >= 2 && xp[1] == 1) return std::vector<int>(xp.begin() + 2, xp.end());
    return xp;
}

template <class Pred>
std::vector<int> path_where(const std::vector<WorkNode>& top, Pred pred) {
    std::vector<int> p;
    if (!find_path(top, pred, p)) throw std::logic_error("script extraction lost track of a node");
    std::vector<int> xp{0};
    xp.insert(xp.end(), p.begin(), p.end());
    return xp;
}

void set_yids(std::vector<WorkNode>& level, const std::vector<int>& map) {
    for (auto& w : level) {
        w.yid = map[w.xid];
        set_yids(w.children, map);
    }
}

const WorkNode* find_node(const std::vector<WorkNode>& level, int yid) {
    for (const auto& w : level) {
        if (w.yid == yid) return &w;
        if (const auto* f = find_node(w.children, yid)) return f;
    }
    return nullptr;
}

}  // namespace

double tree_distance_value(const Tree& x, const Tree& y, const CostModel& c) {
    return ZhangShasha(x, y, c).distance();
}

DistanceResult tree_distance(const Tree& x, const Tree& y, const CostModel& c) {
    ZhangShasha zs(x, y, c);
    DistanceResult r;
    r.distance = zs.distance();
    const auto map = zs.mapping();
    const auto& a = zs.source();
    const auto& b = zs.target();

    int post = 0;
    std::vector<WorkNode> top{to_work(x, post)};
    set_yids(top, map);

    auto emit = [&](TreeEdit e, double cost) {
        apply_in_forest(top, e);
        r.script.edits.emplace_back(std::move(e));
        r.script.total_cost += cost;
    };

    // Deletions in post-order of x.
    for (int i = 1; i <= a.n; ++i) {
        if (map[i]) continue;
        auto xp = path_where(top, [i](const WorkNode& w) { return w.xid == i; });
        emit({TreeEdit::Kind::remove, external_path(top, xp), {}, 0, 0}, c.indel(a.label[i]));
    }

    // Relabels in pre-order of x.
    std::vector<int> by_pre(a.n);
    for (int i = 1; i <= a.n; ++i) by_pre[a.preorder[i]] = i;
    for (int i : by_pre) {
        if (!map[i] || a.label[i] == b.label[map[i]]) continue;
        auto xp = path_where(top, [i](const WorkNode& w) { return w.xid == i; });
        emit({TreeEdit::Kind::relabel, external_path(top, xp), b.label[map[i]], 0, 0},
             c.relabel(a.label[i], b.label[map[i]]));
    }

    // Insertions in pre-order of y.
    std::vector<bool> mapped_y(b.n + 1, false);
    for (int i = 1; i <= a.n; ++i)
        if (map[i]) mapped_y[map[i]] = true;
    std::vector<int> y_by_pre(b.n);
    for (int j = 1; j <= b.n; ++j) y_by_pre[b.preorder[j]] = j;
    for (int v : y_by_pre) {
        if (mapped_y[v]) continue;
        const int pv = b.parent[v];
        std::vector<int> parent_xp{0};
        const std::vector<WorkNode>* kids = &top;
        if (pv != 0) {
            parent_xp = path_where(top, [pv](const WorkNode& w) { return w.yid == pv; });
            kids = &find_node(top, pv)->children;
        }
        const int lo = b.preorder[v], hi = lo + b.subtree[v];
        int first = 0, count = 0, before = 0;
        for (std::size_t k = 0; k < kids->size(); ++k) {
            const int pre = b.preorder[(*kids)[k].yid];
            if (pre >= lo && pre < hi) {
                if (!count) first = static_cast<int>(k) + 1;
                ++count;
            } else if (pre < lo) {
                ++before;
            }
        }
        if (!count) first = before + 1;
        std::vector<int> ext = parent_xp.size() == 1 ? parent_xp : external_path(top, parent_xp);
        TreeEdit e{TreeEdit::Kind::insert, ext, b.label[v], first, count};
        apply_in_forest(top, e);
        // The fresh node sits at index `first` under the parent.
        auto& siblings = pv == 0 ? top : const_cast<WorkNode*>(find_node(top, pv))->children;
        siblings[first - 1].yid = v;
        r.script.edits.emplace_back(std::move(e));
        r.script.total_cost += c.indel(b.label[v]);
    }
    return r;
}

namespace {

std::vector<TreeEdit> tree_standalone(const Tree& x, const Tree& y, const CostModel& c) {
    ZhangShasha zs(x, y, c);
    const auto map = zs.mapping();
    const auto& a = zs.source();
    const auto& b = zs.target();
    int post = 0;
    std::vector<WorkNode> top{to_work(x, post)};
    set_yids(top, map);
    auto xpath = [&](int i) {
        return external_path(top, path_where(top, [i](const WorkNode& w) { return w.xid == i; }));
    };

    std::vector<TreeEdit> out;
    for (int i = 1; i <= a.n; ++i)
        if (!map[i]) out.push_back({TreeEdit::Kind::remove, xpath(i), {}, 0, 0});
    std::vector<int> by_pre(a.n);
    for (int i = 1; i <= a.n; ++i) by_pre[a.preorder[i]] = i;
    for (int i : by_pre)
        if (map[i] && a.label[i] != b.label[map[i]])
            out.push_back({TreeEdit::Kind::relabel, xpath(i), b.label[map[i]], 0, 0});

    std::vector<bool> mapped_y(b.n + 1, false);
    for (int i = 1; i <= a.n; ++i)
        if (map[i]) mapped_y[map[i]] = true;
    std::vector<int> y_by_pre(b.n);
    for (int j = 1; j <= b.n; ++j) y_by_pre[b.preorder[j]] = j;
    for (int v : y_by_pre) {
        if (mapped_y[v]) continue;
        const int pv = b.parent[v];
        // Inserts below another fresh node only make sense after that one.
        if (pv != 0 && !mapped_y[pv]) continue;
        std::vector<int> parent_path{0};
        const std::vector<WorkNode>* kids = &top;
        if (pv != 0) {
            parent_path = external_path(top, path_where(top, [pv](const WorkNode& w) { return w.yid == pv; }));
            kids = &find_node(top, pv)->children;
        }
        const int lo = b.preorder[v], hi = lo + b.subtree[v];
        int first = 0, last = 0, after = 0;
        for (std::size_t k = 0; k < kids->size(); ++k) {
            const int yid = (*kids)[k].yid;
            if (!yid) continue;
            const int pre = b.preorder[yid];
            const int idx = static_cast<int>(k) + 1;
            if (pre >= lo && pre < hi) {
                if (!first) first = idx;
                last = idx;
            } else if (pre < lo) {
                after = idx;
            }
        }
        if (first)
            out.push_back({TreeEdit::Kind::insert, parent_path, b.label[v], first, last - first + 1});
        else
            out.push_back({TreeEdit::Kind::insert, parent_path, b.label[v], after + 1, 0});
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generic dispatch

DistanceResult edit_distance(const State& x, const State& y, const CostModel& c) {
    if (kind_of(x) != kind_of(y)) throw DataError("cannot compare a tree with a sequence");
    if (const auto* t = std::get_if<Tree>(&x)) return tree_distance(*t, std::get<Tree>(y), c);
    return seq_distance(std::get<Sequence>(x), std::get<Sequence>(y), c);
}

double edit_distance_value(const State& x, const State& y, const CostModel& c) {
    if (kind_of(x) != kind_of(y)) throw DataError("cannot compare a tree with a sequence");
    if (const auto* t = std::get_if<Tree>(&x)) return tree_distance_value(*t, std::get<Tree>(y), c);
    return seq_distance_value(std::get<Sequence>(x), std::get<Sequence>(y), c);
}

State apply_edit(const State& s, const Edit& e) {
    if (const auto* t = std::get_if<Tree>(&s)) {
        const auto* te = std::get_if<TreeEdit>(&e);
        if (!te) throw AddressError("sequence edit applied to a tree");
        return apply_edit(*t, *te);
    }
    const auto* se = std::get_if<SeqEdit>(&e);
    if (!se) throw AddressError("tree edit applied to a sequence");
    return apply_edit(std::get<Sequence>(s), *se);
}

State apply_script(const State& s, const EditScript& script) {
    if (const auto* t = std::get_if<Tree>(&s)) {
        std::vector<Tree> top{*t};
        for (const auto& e : script.edits) {
            const auto* te = std::get_if<TreeEdit>(&e);
            if (!te) throw AddressError("sequence edit applied to a tree");
            apply_in_forest(top, *te);
        }
        if (top.size() != 1) throw AddressError("script leaves a forest");
        return std::move(top.front());
    }
    State cur = s;
    for (const auto& e : script.edits) cur = apply_edit(cur, e);
    return cur;
}

Edit invert_edit(const Edit& e, const State& s) {
    if (const auto* t = std::get_if<Tree>(&s)) {
        const auto* te = std::get_if<TreeEdit>(&e);
        if (!te) throw AddressError("sequence edit applied to a tree");
        return invert_edit(*te, *t);
    }
    const auto* se = std::get_if<SeqEdit>(&e);
    if (!se) throw AddressError("tree edit applied to a sequence");
    return invert_edit(*se, std::get<Sequence>(s));
}

double edit_cost(const Edit& e, const State& s, const CostModel& c) {
    if (const auto* se = std::get_if<SeqEdit>(&e)) {
        const auto& seq = std::get<Sequence>(s);
        apply_edit(seq, *se);
        switch (se->kind) {
            case SeqEdit::Kind::remove: return c.indel(seq.symbols[se->position - 1]);
            case SeqEdit::Kind::insert: return c.indel(se->label);
            case SeqEdit::Kind::relabel: return c.relabel(seq.symbols[se->position - 1], se->label);
        }
    }
    const auto& te = std::get<TreeEdit>(e);
    std::vector<Tree> top{std::get<Tree>(s)};
    if (te.kind == TreeEdit::Kind::insert) return c.indel(te.label);
    auto [siblings, idx] = locate(top, te.path);
    const Label& old = (*siblings)[idx].label;
    return te.kind == TreeEdit::Kind::remove ? c.indel(old) : c.relabel(old, te.label);
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const Edit& e) {
    using nlohmann::json;
    if (const auto* se = std::get_if<SeqEdit>(&e)) {
        json j;
        switch (se->kind) {
            case SeqEdit::Kind::remove: j["kind"] = "delete"; break;
            case SeqEdit::Kind::insert: j["kind"] = "insert"; break;
            case SeqEdit::Kind::relabel: j["kind"] = "relabel"; break;
        }
        j["position"] = se->position;
        if (se->kind != SeqEdit::Kind::remove) j["label"] = se->label;
        return j;
    }
    const auto& te = std::get<TreeEdit>(e);
    json j;
    switch (te.kind) {
        case TreeEdit::Kind::remove: j["kind"] = "delete_node"; break;
        case TreeEdit::Kind::insert: j["kind"] = "insert_node"; break;
        case TreeEdit::Kind::relabel: j["kind"] = "relabel_node"; break;
    }
    j["path"] = te.path;
    if (te.kind != TreeEdit::Kind::remove) j["label"] = te.label;
    if (te.kind == TreeEdit::Kind::insert) j["child_span"] = {te.span_first, te.span_count};
    return j;
}

Edit edit_from_json(const nlohmann::json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        auto label = [&]() {
            auto l = j.at("label").get<std::string>();
            if (l.empty()) throw DataError("edit label must be non-empty");
            return l;
        };
        if (kind == "delete" || kind == "insert" || kind == "relabel") {
            SeqEdit e{SeqEdit::Kind::remove, j.at("position").get<int>(), {}};
            if (kind == "insert") e.kind = SeqEdit::Kind::insert;
            if (kind == "relabel") e.kind = SeqEdit::Kind::relabel;
            if (e.kind != SeqEdit::Kind::remove) e.label = label();
            if (e.position < 1) throw DataError("edit position must be >= 1");
            return e;
        }
        TreeEdit e{TreeEdit::Kind::remove, j.at("path").get<std::vector<int>>(), {}, 0, 0};
        if (kind == "delete_node") return e;
        e.label = label();
        if (kind == "relabel_node") {
            e.kind = TreeEdit::Kind::relabel;
            return e;
        }
        if (kind == "insert_node") {
            e.kind = TreeEdit::Kind::insert;
            const auto span = j.at("child_span").get<std::vector<int>>();
            if (span.size() != 2) throw DataError("child_span must be [first, count]");
            e.span_first = span[0];
            e.span_count = span[1];
            return e;
        }
        throw DataError("unknown edit kind '" + kind + "'");
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed edit: ") + ex.what());
    }
}

std::string edit_key(const Edit& e) { return to_json(e).dump(); }

std::vector<std::vector<double>> pairwise_distances(const std::vector<State>& states, const CostModel& c) {
    const std::size_t n = states.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    const std::size_t workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 16u));
    std::vector<std::thread> pool;
    // Rows are strided across workers; every entry is written exactly once.
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers)
                for (std::size_t j = i + 1; j < n; ++j) d[i][j] = edit_distance_value(states[i], states[j], c);
        });
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d[j][i] = d[i][j];
    return d;
}

}  // namespace chf

namespace chf {

std::vector<Edit> standalone_edits(const State& x, const State& y, const CostModel& c) {
    if (kind_of(x) != kind_of(y)) throw DataError("cannot compare a tree with a sequence");
    std::vector<Edit> out;
    if (const auto* t = std::get_if<Tree>(&x)) {
        for (auto& e : tree_standalone(*t, std::get<Tree>(y), c)) out.emplace_back(std::move(e));
        return out;
    }
    for (auto& e : seq_backtrace(std::get<Sequence>(x), std::get<Sequence>(y), c, true).script.edits)
        out.push_back(std::move(e));
    return out;
}

}  // namespace chf
