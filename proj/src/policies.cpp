#include "chf/policies.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <thread>

#include "chf/dataset.hpp"

namespace chf {

namespace {

// Distances from x to every state in `targets`, spread over a few threads.
std::vector<double> distances_from(const State& x, const std::vector<const State*>& targets, const CostModel& c) {
    std::vector<double> out(targets.size(), 0.0);
    const std::size_t workers =
        std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(1, targets.size() / 8));
    if (workers <= 1) {
        for (std::size_t i = 0; i < targets.size(); ++i) out[i] = edit_distance_value(x, *targets[i], c);
        return out;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < targets.size(); i += workers) out[i] = edit_distance_value(x, *targets[i], c);
        });
    for (auto& t : pool) t.join();
    return out;
}

void check(const ModelOptions& o) {
    if (!(o.kernel.length_scale > 0.0)) throw std::invalid_argument("length scale must be positive");
    if (!(o.kernel.noise_std >= 0.0)) throw std::invalid_argument("noise must be non-negative");
    if (o.m_max < 1) throw std::invalid_argument("m_max must be at least 1");
}

Eigen::MatrixXd select(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(idx.size(), idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j) out(i, j) = m(idx[i], idx[j]);
    return out;
}

}  // namespace

KernelSolver::KernelSolver(const Eigen::MatrixXd& kernel, double noise_std) {
    const auto n = kernel.rows();
    Eigen::MatrixXd a = kernel + noise_std * noise_std * Eigen::MatrixXd::Identity(n, n);
    a = 0.5 * (a + a.transpose());
    if (n == 0) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("kernel system eigendecomposition failed");
    const Eigen::VectorXd s = es.eigenvalues();
    const double smax = s.cwiseAbs().maxCoeff();
    const double cut = 1e-10 * smax;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(s(i)) > cut)
            inv(i) = 1.0 / s(i);
        else
            rank_deficient_ = true;
    }
    inverse_ = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    inverse_ = 0.5 * (inverse_ + inverse_.transpose());
}

GprModel GprModel::fit(const std::vector<Trace>& traces, StateKind kind, CostModel costs, ModelOptions opts,
                       CanonConfig canon, nlohmann::json cost_spec) {
    check(opts);
    GprModel m;
    m.pairs_ = build_pairs(traces);
    if (m.pairs_.size() == 0) throw DataError("no training states");
    for (const auto& s : m.pairs_.states)
        if (kind_of(s) != kind) throw DataError("training states do not match the dataset kind");
    m.kind_ = kind;
    m.costs_ = std::move(costs);
    m.cost_spec_ = std::move(cost_spec);
    m.canon_ = std::move(canon);
    m.opts_ = opts;
    m.finish();

    std::vector<State> distinct;
    for (auto i : m.distinct_) distinct.push_back(m.pairs_.states[i]);
    const auto dd = pairwise_distances(distinct, m.costs_);
    const auto n = static_cast<Eigen::Index>(m.pairs_.size());
    m.raw_distance_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = dd[m.distinct_of_[i]][m.distinct_of_[j]];
            if (!std::isfinite(d)) throw DataError("infinite edit distance between training states");
            m.raw_distance_(i, j) = d;
        }
    const Eigen::MatrixXd d2 = m.raw_distance_.cwiseProduct(m.raw_distance_);
    m.state_space_ = Spaced(d2, opts.correction);

    if (m.sources_.empty()) throw DataError("no regression pairs: every trace has a single state");
    if (m.sources_.size() != m.pairs_.size()) m.source_space_ = Spaced(select(d2, m.sources_), opts.correction);
    m.kernel_ = rbf(m.source_space().corrected_sqdist(), opts.kernel.length_scale);
    m.solver_ = KernelSolver(m.kernel_, opts.kernel.noise_std);
    return m;
}

GprModel GprModel::from_parts(TracePairs pairs, StateKind kind, CostModel costs, nlohmann::json cost_spec,
                              CanonConfig canon, ModelOptions opts, Eigen::MatrixXd raw_distance,
                              Spaced state_space, std::optional<Spaced> source_space, Eigen::MatrixXd kernel) {
    check(opts);
    GprModel m;
    m.pairs_ = std::move(pairs);
    m.kind_ = kind;
    m.costs_ = std::move(costs);
    m.cost_spec_ = std::move(cost_spec);
    m.canon_ = std::move(canon);
    m.opts_ = opts;
    m.raw_distance_ = std::move(raw_distance);
    m.state_space_ = std::move(state_space);
    m.source_space_ = std::move(source_space);
    m.kernel_ = std::move(kernel);
    m.finish();
    const auto n = static_cast<Eigen::Index>(m.pairs_.size());
    const auto k = static_cast<Eigen::Index>(m.sources_.size());
    if (m.raw_distance_.rows() != n || m.state_space_.size() != n || m.source_space().size() != k ||
        m.kernel_.rows() != k)
        throw DataError("model parts have inconsistent sizes");
    m.solver_ = KernelSolver(m.kernel_, opts.kernel.noise_std);
    return m;
}

void GprModel::finish() {
    sources_.clear();
    for (std::size_t i = 0; i < pairs_.size(); ++i)
        if (opts_.final_self_pairs || !pairs_.is_final(i)) sources_.push_back(i);
    distinct_.clear();
    distinct_of_.clear();
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        auto [it, fresh] = seen.emplace(state_key(pairs_.states[i]), distinct_.size());
        if (fresh) distinct_.push_back(i);
        distinct_of_.push_back(it->second);
    }
}

ModelQuery GprModel::query(const State& x) const {
    if (kind_of(x) != kind_) throw DataError("query state does not match the model's state kind");
    ModelQuery q;
    q.state = canonicalize(x, canon_);
    std::vector<const State*> targets;
    for (auto i : distinct_) targets.push_back(&pairs_.states[i]);
    const auto dd = distances_from(q.state, targets, costs_);
    const auto n = static_cast<Eigen::Index>(pairs_.size());
    q.raw_distance.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) q.raw_distance(i) = dd[distinct_of_[i]];
    if (!q.raw_distance.allFinite()) throw DataError("infinite edit distance to the query");
    const Eigen::VectorXd d2 = q.raw_distance.cwiseProduct(q.raw_distance);
    q.embedding = state_space_.extend(d2);
    if (source_space_) {
        Eigen::VectorXd sd2(sources_.size());
        for (std::size_t k = 0; k < sources_.size(); ++k) sd2(k) = d2(sources_[k]);
        q.source_embedding = source_space_->extend(sd2);
    } else {
        q.source_embedding = q.embedding;
    }
    q.source_sqdist = source_space().query_sqdist(q.source_embedding).cwiseMax(0.0);
    return q;
}

Eigen::VectorXd gpr_weights(const GprModel& m, const ModelQuery& q) {
    return m.solver().weights(rbf(q.source_sqdist, m.options().kernel.length_scale));
}

std::optional<Eigen::VectorXd> nwr_weights(const GprModel& m, const ModelQuery& q) {
    const Eigen::VectorXd k = rbf(q.source_sqdist, m.options().kernel.length_scale);
    const double total = k.sum();
    if (!(total > 0.0)) return std::nullopt;
    return Eigen::VectorXd(k / total);
}

Eigen::VectorXd nn_weights(const GprModel&, const ModelQuery& q) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(q.source_sqdist.size());
    if (g.size() == 0) return g;
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < g.size(); ++i)
        if (q.source_sqdist(i) < q.source_sqdist(best)) best = i;
    g(best) = 1.0;
    return g;
}

Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma, const TracePairs& pairs,
                                 const std::vector<std::size_t>& pair_indices) {
    if (static_cast<std::size_t>(gamma.size()) != pair_indices.size())
        throw std::invalid_argument("gamma and pair index list differ in length");
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t k = 0; k < pair_indices.size(); ++k) {
        const auto [src, dst] = pairs.pair_of[pair_indices[k]];
        alpha(static_cast<Eigen::Index>(dst)) += gamma(static_cast<Eigen::Index>(k));
        alpha(static_cast<Eigen::Index>(src)) -= gamma(static_cast<Eigen::Index>(k));
    }
    return alpha;
}

Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma, const TracePairs& pairs) {
    std::vector<std::size_t> all(pairs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return alpha_from_gamma(gamma, pairs, all);
}

namespace {

double sq_error(const Eigen::MatrixXd& b, const Eigen::VectorXd& beta, const Eigen::VectorXd& target) {
    const Eigen::VectorXd c = beta - target;
    return c.dot(b * c);
}

// Best coefficients on `support` with sum 1, by the KKT system of the
// equality-constrained least squares problem in the Gram metric.
Eigen::VectorXd refit(const Eigen::MatrixXd& b, const Eigen::VectorXd& bt, const std::vector<Eigen::Index>& support) {
    const auto s = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
    Eigen::VectorXd rhs(s + 1);
    for (Eigen::Index i = 0; i < s; ++i) {
        for (Eigen::Index j = 0; j < s; ++j) kkt(i, j) = b(support[i], support[j]);
        kkt(i, s) = kkt(s, i) = 1.0;
        rhs(i) = bt(support[i]);
    }
    rhs(s) = 1.0;
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(b.rows());
    for (Eigen::Index i = 0; i < s; ++i) beta(support[i]) = sol(i);
    return beta;
}

}  // namespace

SparseApproximation sparsify(const Eigen::MatrixXd& extended_gram, const Eigen::VectorXd& target,
                             const std::vector<bool>& allowed, int m_max) {
    if (m_max < 1) throw std::invalid_argument("m_max must be at least 1");
    const auto n = target.size();
    if (extended_gram.rows() != n || static_cast<Eigen::Index>(allowed.size()) != n)
        throw std::invalid_argument("sparsify inputs differ in size");
    const auto& b = extended_gram;

    SparseApproximation none{target, 0.0, false, "none"};
    std::vector<Eigen::Index> pool;
    for (Eigen::Index j = 0; j < n; ++j)
        if (allowed[j]) pool.push_back(j);
    if (pool.empty()) return none;

    // Already sparse and feasible: only renormalize.
    Eigen::Index nonzero = 0;
    bool feasible = true;
    for (Eigen::Index j = 0; j < n; ++j)
        if (target(j) != 0.0) {
            ++nonzero;
            feasible = feasible && allowed[j];
        }
    if (feasible && nonzero <= m_max && std::abs(target.sum()) > 1e-12) {
        SparseApproximation r{target / target.sum(), 0.0, true, "none"};
        r.error = sq_error(b, r.coefficients, target);
        return r;
    }

    const Eigen::VectorXd bt = b * target;
    const double scale = std::max(1.0, std::abs(target.dot(bt)));

    // Greedy selection with a full refit after every addition.
    SparseApproximation greedy{target, std::numeric_limits<double>::infinity(), true, "omp"};
    std::vector<Eigen::Index> support;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    while (static_cast<int>(support.size()) < m_max) {
        Eigen::Index best = -1;
        double best_err = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_beta;
        for (auto j : pool) {
            if (used[j]) continue;
            auto trial = support;
            trial.push_back(j);
            Eigen::VectorXd beta = refit(b, bt, trial);
            const double err = sq_error(b, beta, target);
            if (err < best_err - 1e-15 * scale) {
                best = j;
                best_err = err;
                best_beta = std::move(beta);
            }
        }
        if (best < 0) break;
        support.push_back(best);
        used[best] = true;
        greedy.coefficients = std::move(best_beta);
        greedy.error = best_err;
        if (best_err <= 1e-14 * scale) break;
    }

    // Largest magnitudes inside the allowed set, renormalized to sum 1.
    std::optional<SparseApproximation> top;
    {
        std::vector<Eigen::Index> order;
        for (auto j : pool)
            if (target(j) != 0.0) order.push_back(j);
        std::stable_sort(order.begin(), order.end(),
                         [&](auto x, auto y) { return std::abs(target(x)) > std::abs(target(y)); });
        if (static_cast<int>(order.size()) > m_max) order.resize(static_cast<std::size_t>(m_max));
        double total = 0.0;
        for (auto j : order) total += target(j);
        if (!order.empty() && std::abs(total) > 1e-12) {
            Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
            for (auto j : order) beta(j) = target(j) / total;
            top = SparseApproximation{beta, sq_error(b, beta, target), true, "top"};
        }
    }

    if (top && top->error < greedy.error) return *top;
    return greedy;
}

std::vector<bool> allowed_support(const Eigen::VectorXd& dist_to_query, const Eigen::VectorXd& dist_to_star,
                                  double query_to_star) {
    const auto n = dist_to_query.size();
    std::vector<bool> out(static_cast<std::size_t>(n) + 1, false);
    for (Eigen::Index j = 0; j < n; ++j)
        out[j] = dist_to_query(j) <= query_to_star && dist_to_star(j) <= query_to_star;
    out.back() = true;
    return out;
}

std::vector<Edit> candidate_edits(const State& x, const std::vector<State>& positives, const CostModel& costs) {
    std::vector<Edit> out;
    std::set<std::string> seen;
    std::set<std::string> done;
    for (const auto& p : positives) {
        if (!done.insert(state_key(p)).second) continue;
        const double total = edit_distance_value(x, p, costs);
        for (auto& e : standalone_edits(x, p, costs)) {
            auto key = edit_key(e);
            if (seen.count(key)) continue;
            State next;
            try {
                next = apply_edit(x, e);
            } catch (const AddressError&) {
                continue;
            }
            const double step = edit_cost(e, x, costs);
            if (edit_distance_value(next, p, costs) + step > total + 1e-9 * (1.0 + total)) continue;
            seen.insert(std::move(key));
            out.push_back(std::move(e));
        }
    }
    return out;
}

namespace {

// Edits nearer the root (trees) or further left (sequences) sort first.
std::size_t edit_rank(const Edit& e) {
    if (const auto* t = std::get_if<TreeEdit>(&e)) {
        std::size_t depth = t->path.size();
        if (!t->path.empty() && t->path.front() == 0) depth = depth ? depth - 1 : 0;
        return depth;
    }
    return static_cast<std::size_t>(std::get<SeqEdit>(e).position);
}

}  // namespace

HintResult preimage_select(const State& x, const std::vector<std::pair<State, double>>& weighted_states,
                           const std::vector<Edit>& candidates, const CostModel& costs,
                           const CandidateFilter& filter) {
    const Metric metric = [&costs](const State& a, const State& b) { return edit_distance_value(a, b, costs); };
    return preimage_select(x, weighted_states, candidates, metric, filter);
}

HintResult preimage_select(const State& x, const std::vector<std::pair<State, double>>& weighted_states,
                           const std::vector<Edit>& candidates, const Metric& metric,
                           const CandidateFilter& filter) {
    HintResult h;
    std::vector<std::pair<State, double>> support;
    for (const auto& ws : weighted_states)
        if (ws.second != 0.0) support.push_back(ws);

    std::vector<State> results;
    for (const auto& e : candidates) {
        State r;
        try {
            r = apply_edit(x, e);
        } catch (const AddressError&) {
            continue;
        }
        if (filter && !filter(r)) continue;
        double score = 0.0;
        for (const auto& [s, w] : support) {
            const double d = metric(r, s);
            score += w * d * d;
        }
        h.candidates.emplace_back(e, score);
        results.push_back(std::move(r));
    }
    if (h.candidates.empty()) {
        h.reason = "no-candidates";
        return h;
    }

    double lo = h.candidates.front().second;
    for (const auto& c : h.candidates) lo = std::min(lo, c.second);
    const double tol = 1e-9 * (1.0 + std::abs(lo));
    std::size_t best = h.candidates.size();
    std::string best_key;
    for (std::size_t i = 0; i < h.candidates.size(); ++i) {
        const auto& [e, score] = h.candidates[i];
        if (score > lo + tol) continue;
        auto key = edit_key(e);
        if (best == h.candidates.size()) {
            best = i;
            best_key = std::move(key);
            continue;
        }
        const auto& cur = h.candidates[best].first;
        const auto ra = edit_rank(e), rb = edit_rank(cur);
        if (ra < rb || (ra == rb && key < best_key)) {
            best = i;
            best_key = std::move(key);
        }
    }
    h.edit = h.candidates[best].first;
    h.objective = h.candidates[best].second;
    h.result = results[best];
    return h;
}

std::size_t closest_correct(const GprModel& m, const ModelQuery& q) {
    const auto& pairs = m.pairs();
    const Eigen::VectorXd d = m.state_space().query_sqdist(q.embedding);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs.is_final(i)) continue;
        if (!best) {
            best = i;
            continue;
        }
        const double a = d(static_cast<Eigen::Index>(i)), b = d(static_cast<Eigen::Index>(*best));
        if (a < b) {
            best = i;
        } else if (a == b) {
            const auto& ia = pairs.trace_ids[pairs.trace_of[i]];
            const auto& ib = pairs.trace_ids[pairs.trace_of[*best]];
            if (ia < ib) best = i;
        }
    }
    if (!best) throw DataError("no training end states");
    return *best;
}

HintResult chf_hint(const GprModel& m, const State& x, const HintOptions& opts) {
    const ModelQuery q = m.query(x);
    const auto& pairs = m.pairs();
    const auto n = static_cast<Eigen::Index>(pairs.size());

    HintResult h;
    h.policy = opts.weighting == Weighting::gpr ? "chf" : opts.weighting == Weighting::nwr ? "nwr" : "nn";
    Eigen::VectorXd gamma;
    switch (opts.weighting) {
        case Weighting::gpr:
            gamma = gpr_weights(m, q);
            if (gamma.norm() < 1e-6) {
                h.reason = "kernel-decay";
                return h;
            }
            break;
        case Weighting::nwr: {
            auto g = nwr_weights(m, q);
            if (!g) {
                h.reason = "no-prediction";
                return h;
            }
            gamma = *g;
            break;
        }
        case Weighting::nn: gamma = nn_weights(m, q); break;
    }

    Eigen::VectorXd target(n + 1);
    target.head(n) = alpha_from_gamma(gamma, pairs, m.sources());
    target(n) = 1.0;

    Eigen::VectorXd coef = target;
    if (opts.sparsify) {
        const std::size_t star = closest_correct(m, q);
        const auto allowed = allowed_support(q.raw_distance, m.raw_distance().col(static_cast<Eigen::Index>(star)),
                                             q.raw_distance(static_cast<Eigen::Index>(star)));
        const auto sp = sparsify(m.state_space().extended_gram(q.embedding), target, allowed,
                                 opts.m_max.value_or(m.options().m_max));
        coef = sp.coefficients;
        h.sparsified = sp.sparsified;
    }

    std::vector<State> positives;
    std::vector<std::pair<State, double>> weighted;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (coef(j) == 0.0) continue;
        if (coef(j) > 0.0) positives.push_back(pairs.states[j]);
        weighted.emplace_back(pairs.states[j], coef(j));
    }
    if (coef(n) != 0.0) weighted.emplace_back(q.state, coef(n));

    const auto candidates = candidate_edits(q.state, positives, m.costs());
    auto sel = preimage_select(q.state, weighted, candidates, m.costs(), opts.filter);
    sel.policy = h.policy;
    sel.alpha_used = coef;
    sel.sparsified = h.sparsified;
    return sel;
}

namespace {

HintResult toward(const TracePairs& pairs, const State& x, std::size_t ref, const CostModel& costs) {
    HintResult h;
    h.reference = ref;
    const auto r = edit_distance(x, pairs.states[ref], costs);
    if (r.script.edits.empty()) {
        h.reason = "at-reference";
        return h;
    }
    h.edit = r.script.edits.front();
    h.result = apply_edit(x, *h.edit);
    h.objective = r.distance;
    h.candidates.emplace_back(*h.edit, r.distance);
    return h;
}

// Closest state among those accepted by `keep`, by raw edit distance; ties
// go to the lowest trace id, then the earliest state.
template <class Keep>
std::size_t closest_raw(const TracePairs& pairs, const State& x, const CostModel& costs, Keep keep) {
    std::vector<const State*> targets;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (keep(i)) {
            targets.push_back(&pairs.states[i]);
            index.push_back(i);
        }
    if (index.empty()) throw DataError("no reference states");
    const auto d = distances_from(x, targets, costs);
    std::size_t best = 0;
    for (std::size_t k = 1; k < index.size(); ++k) {
        if (d[k] < d[best])
            best = k;
        else if (d[k] == d[best] &&
                 pairs.trace_ids[pairs.trace_of[index[k]]] < pairs.trace_ids[pairs.trace_of[index[best]]])
            best = k;
    }
    return index[best];
}

}  // namespace

HintResult zimmerman_hint(const TracePairs& pairs, const State& x, const CostModel& costs) {
    const auto ref = closest_raw(pairs, x, costs, [&](std::size_t i) { return pairs.is_final(i); });
    auto h = toward(pairs, x, ref, costs);
    h.policy = "zimmerman";
    return h;
}

HintResult gross_hint(const TracePairs& pairs, const State& x, const CostModel& costs) {
    const auto closest = closest_raw(pairs, x, costs, [](std::size_t) { return true; });
    auto h = toward(pairs, x, pairs.successor(closest), costs);
    h.policy = "gross";
    return h;
}

HintResult random_hint(const TracePairs& pairs, const State& x, const CostModel& costs, std::uint64_t seed) {
    if (pairs.size() == 0) throw DataError("no reference states");
    std::mt19937_64 rng(seed);
    const auto ref = static_cast<std::size_t>(rng() % pairs.size());
    auto h = toward(pairs, x, ref, costs);
    h.policy = "random";
    return h;
}

HintResult hint_by_name(const GprModel& m, const std::string& policy, const State& x, std::uint64_t seed,
                        std::optional<int> m_max) {
    if (policy == "chf" || policy == "nwr" || policy == "nn") {
        HintOptions o;
        o.weighting = policy == "chf" ? Weighting::gpr : policy == "nwr" ? Weighting::nwr : Weighting::nn;
        o.m_max = m_max;
        return chf_hint(m, x, o);
    }
    const State cx = canonicalize(x, m.canon());
    if (kind_of(cx) != m.kind()) throw DataError("query state does not match the model's state kind");
    if (policy == "zimmerman") return zimmerman_hint(m.pairs(), cx, m.costs());
    if (policy == "gross") return gross_hint(m.pairs(), cx, m.costs());
    if (policy == "random") return random_hint(m.pairs(), cx, m.costs(), seed);
    throw std::invalid_argument("unknown policy '" + policy + "'");
}

nlohmann::json to_json(const HintResult& h, const GprModel& m, const State& query) {
    using nlohmann::json;
    const auto& pairs = m.pairs();
    json j;
    j["policy"] = h.policy;
    j["state"] = state_text(query);
    j["edit"] = h.edit ? to_json(*h.edit) : json(nullptr);
    j["result"] = h.result ? json(state_text(*h.result)) : json(nullptr);
    j["objective"] = h.edit ? json(h.objective) : json(nullptr);
    j["reason"] = h.reason.empty() ? json(nullptr) : json(h.reason);
    j["sparsified"] = h.sparsified;
    j["candidates"] = json::array();
    for (const auto& [e, score] : h.candidates) j["candidates"].push_back({{"edit", to_json(e)}, {"objective", score}});
    j["alpha"] = json::array();
    for (Eigen::Index i = 0; i < h.alpha_used.size(); ++i) {
        const double a = h.alpha_used(i);
        if (a == 0.0) continue;
        const auto k = static_cast<std::size_t>(i);
        if (k < pairs.size())
            j["alpha"].push_back({{"state", state_text(pairs.states[k])},
                                  {"trace", pairs.trace_ids[pairs.trace_of[k]]},
                                  {"index", k},
                                  {"value", a}});
        else
            j["alpha"].push_back({{"state", state_text(query)}, {"trace", nullptr}, {"index", nullptr}, {"value", a}});
    }
    if (h.reference) {
        const auto k = *h.reference;
        j["reference"] = {{"state", state_text(pairs.states[k])}, {"trace", pairs.trace_ids[pairs.trace_of[k]]}};
    }
    return j;
}

}  // namespace chf
