#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chf/editdist.hpp"
#include "chf/space.hpp"
#include "chf/traces.hpp"

namespace chf {

struct KernelParams {
    double length_scale = 1.0;  // psi, > 0
    double noise_std = 0.0;     // sigma tilde, >= 0
};

/// exp(-0.5 d^2 / psi^2)
template <typename Scalar>
Scalar rbf(Scalar d2, Scalar length_scale) {
    return std::exp(Scalar(-0.5) * d2 / (length_scale * length_scale));
}

template <typename Derived>
auto rbf(const Eigen::MatrixBase<Derived>& d2, typename Derived::Scalar length_scale) {
    using Scalar = typename Derived::Scalar;
    return d2.unaryExpr([length_scale](Scalar v) { return rbf(std::max(v, Scalar(0)), length_scale); }).eval();
}

/// (K + sigma^2 I)^+ with singular values below 1e-10 * sigma_max dropped.
class KernelSolver {
public:
    KernelSolver() = default;
    KernelSolver(const Eigen::MatrixXd& kernel, double noise_std);

    /// gamma = k (K + sigma^2 I)^+
    Eigen::VectorXd weights(const Eigen::VectorXd& k) const { return inverse_ * k; }
    bool rank_deficient() const { return rank_deficient_; }
    const Eigen::MatrixXd& inverse() const { return inverse_; }

private:
    Eigen::MatrixXd inverse_;
    bool rank_deficient_ = false;
};

enum class Weighting { gpr, nwr, nn };

struct ModelOptions {
    KernelParams kernel;
    Correction correction = Correction::clip;
    /// Whether final states contribute (x, x) pairs to the regression.
    bool final_self_pairs = true;
    int m_max = 11;
};

/// Everything needed to answer queries for one state.
struct ModelQuery {
    State state;                   // canonical form
    Eigen::VectorXd raw_distance;  // edit distance to every training state
    QueryEmbedding<double> embedding;         // in the space over all states
    QueryEmbedding<double> source_embedding;  // in the space over pair sources
    Eigen::VectorXd source_sqdist;            // corrected, to every regression source
};

/// Fitted hint model: trace pairs, the corrected edit distance space over all
/// training states, and the solved kernel system over the pair sources.
class GprModel {
public:
    GprModel() = default;

    /// `traces` should already be canonicalized and goal-filtered.
    static GprModel fit(const std::vector<Trace>& traces, StateKind kind, CostModel costs, ModelOptions opts,
                        CanonConfig canon = {}, nlohmann::json cost_spec = {{"model", "unit"}});

    /// Reassembles a model from stored parts (see model_io).
    static GprModel from_parts(TracePairs pairs, StateKind kind, CostModel costs, nlohmann::json cost_spec,
                               CanonConfig canon, ModelOptions opts, Eigen::MatrixXd raw_distance,
                               Spaced state_space, std::optional<Spaced> source_space, Eigen::MatrixXd kernel);

    ModelQuery query(const State& x) const;

    const TracePairs& pairs() const { return pairs_; }
    StateKind kind() const { return kind_; }
    const CostModel& costs() const { return costs_; }
    const nlohmann::json& cost_spec() const { return cost_spec_; }
    const CanonConfig& canon() const { return canon_; }
    const ModelOptions& options() const { return opts_; }
    /// Raw edit distances between training states.
    const Eigen::MatrixXd& raw_distance() const { return raw_distance_; }
    const Spaced& state_space() const { return state_space_; }
    const std::optional<Spaced>& separate_source_space() const { return source_space_; }
    const Spaced& source_space() const { return source_space_ ? *source_space_ : state_space_; }
    /// Pair indices used by the regression, in order. Pair i has source state i.
    const std::vector<std::size_t>& sources() const { return sources_; }
    const Eigen::MatrixXd& kernel() const { return kernel_; }
    const KernelSolver& solver() const { return solver_; }

private:
    void finish();

    TracePairs pairs_;
    StateKind kind_ = StateKind::sequence;
    CostModel costs_;
    nlohmann::json cost_spec_;
    CanonConfig canon_;
    ModelOptions opts_;
    Eigen::MatrixXd raw_distance_;
    Spaced state_space_;
    std::optional<Spaced> source_space_;
    std::vector<std::size_t> sources_;
    Eigen::MatrixXd kernel_;
    KernelSolver solver_;
    std::vector<std::size_t> distinct_of_;  // state -> index into distinct_
    std::vector<std::size_t> distinct_;     // first state index of each distinct state
};

/// GPR weights over the regression pairs.
Eigen::VectorXd gpr_weights(const GprModel& m, const ModelQuery& q);
/// Nadaraya-Watson weights; nullopt when every kernel value underflows.
std::optional<Eigen::VectorXd> nwr_weights(const GprModel& m, const ModelQuery& q);
/// Basis vector of the nearest source; ties go to the lowest pair index.
Eigen::VectorXd nn_weights(const GprModel& m, const ModelQuery& q);

/// State coefficients alpha from pair weights gamma:
/// phi(x) + sum gamma_i (phi(y_i) - phi(x_i)) = phi(x) + sum alpha_j phi(x_j).
/// `pair_indices[k]` names the pair carrying gamma(k).
Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma, const TracePairs& pairs,
                                 const std::vector<std::size_t>& pair_indices);
Eigen::VectorXd alpha_from_gamma(const Eigen::VectorXd& gamma, const TracePairs& pairs);

struct SparseApproximation {
    Eigen::VectorXd coefficients;  // over training states then the query; sums to 1
    double error = 0.0;            // squared embedding distance to the target
    bool sparsified = false;
    std::string method;            // "omp", "top", or "none"
};

/// Approximates `target` (coefficients over the training states followed by
/// the query, summing to 1) with at most `m_max` nonzero entries inside
/// `allowed`, keeping the sum at 1. Runs greedy selection with orthogonal
/// refits and a renormalized largest-magnitude truncation and returns
/// whichever lands closer to the target.
SparseApproximation sparsify(const Eigen::MatrixXd& extended_gram, const Eigen::VectorXd& target,
                             const std::vector<bool>& allowed, int m_max);

/// Entries j with d(x_j, x) <= d(x, x*) and d(x_j, x*) <= d(x, x*). The
/// vectors hold raw edit distances to the training states; the query (last
/// entry) is always allowed.
std::vector<bool> allowed_support(const Eigen::VectorXd& dist_to_query, const Eigen::VectorXd& dist_to_star,
                                  double query_to_star);

/// Union of the edits of the shortest scripts from x to each positive state,
/// addressed against x, deduplicated by serialized form, in first-seen
/// order. Edits that fail to apply to x, or whose result is not one step
/// closer to the positive state, are dropped.
std::vector<Edit> candidate_edits(const State& x, const std::vector<State>& positives, const CostModel& costs);

using CandidateFilter = std::function<bool(const State& result)>;

struct HintResult {
    std::string policy;
    std::optional<Edit> edit;
    std::optional<State> result;  // edit applied to the query
    double objective = 0.0;
    std::vector<std::pair<Edit, double>> candidates;
    Eigen::VectorXd alpha_used;   // over training states then the query
    bool sparsified = false;
    std::string reason;           // why no edit was produced
    std::optional<std::size_t> reference;  // baseline reference state
};

/// Scores each candidate by sum_j w_j d(delta(x), s_j)^2 over the weighted
/// states and returns the minimum. Ties (within 1e-9 relative) prefer the
/// edit nearest the root for trees or the smallest position for sequences,
/// then the lexicographically smaller serialized edit.
HintResult preimage_select(const State& x, const std::vector<std::pair<State, double>>& weighted_states,
                           const std::vector<Edit>& candidates, const CostModel& costs,
                           const CandidateFilter& filter = {});
/// Same, scoring with an arbitrary metric in place of the edit distance.
HintResult preimage_select(const State& x, const std::vector<std::pair<State, double>>& weighted_states,
                           const std::vector<Edit>& candidates, const Metric& metric,
                           const CandidateFilter& filter = {});

struct HintOptions {
    Weighting weighting = Weighting::gpr;
    std::optional<int> m_max;  // defaults to the model's
    bool sparsify = true;
    CandidateFilter filter;
};

/// Training end state closest to the query in the corrected space; ties go
/// to the lowest trace id, then the earliest trace.
std::size_t closest_correct(const GprModel& m, const ModelQuery& q);

HintResult chf_hint(const GprModel& m, const State& x, const HintOptions& opts = {});

/// First edit toward the closest training end state (raw edit distance).
HintResult zimmerman_hint(const TracePairs& pairs, const State& x, const CostModel& costs);
/// First edit toward the successor of the closest training state.
HintResult gross_hint(const TracePairs& pairs, const State& x, const CostModel& costs);
/// First edit toward a training state drawn uniformly with the given seed.
HintResult random_hint(const TracePairs& pairs, const State& x, const CostModel& costs, std::uint64_t seed);

/// Dispatches on {chf, nwr, nn, zimmerman, gross, random}.
HintResult hint_by_name(const GprModel& m, const std::string& policy, const State& x, std::uint64_t seed = 0,
                        std::optional<int> m_max = std::nullopt);

nlohmann::json to_json(const HintResult& h, const GprModel& m, const State& query);

}  // namespace chf
