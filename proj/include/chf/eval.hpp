#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chf/dataset.hpp"
#include "chf/policies.hpp"

namespace chf {

enum class Scheme { do_nothing, successor_of_closest, closest_correct, gaussian_process, nwr, nn };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);
const std::vector<Scheme>& all_schemes();

/// Shared state for leave-one-trace-out runs: one corrected space over every
/// retained state, so all folds are scored in the same geometry.
struct EvalContext {
    TracePairs pairs;
    Eigen::MatrixXd raw_distance;
    Spaced space;
    Eigen::MatrixXd sqdist;  // corrected squared distances

    static EvalContext build(const std::vector<Trace>& traces, const CostModel& costs,
                             Correction correction = Correction::clip);
};

struct FoldResult {
    std::string trace;
    std::size_t states = 0;
    double rmse_next = 0.0;
    double rmse_final = 0.0;
    bool skipped = false;
    std::string note;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for fewer than two values
};

MeanStd mean_std(const std::vector<double>& v);

struct RmseReport {
    Scheme scheme = Scheme::do_nothing;
    KernelParams params;
    std::vector<FoldResult> folds;
    MeanStd next;
    MeanStd final;
    std::size_t skipped = 0;
};

/// Leave-one-trace-out RMSE. For each fold the scheme is fitted on the other
/// traces and predicts the next state of every held-out state; the squared
/// corrected distance to the actual next state and to the trace's final
/// state is averaged over the trace and rooted. Needs at least two traces.
RmseReport loo_rmse(const EvalContext& ctx, Scheme scheme, KernelParams params = {}, bool final_self_pairs = true);
RmseReport loo_rmse(const std::vector<Trace>& traces, const CostModel& costs, Scheme scheme,
                    KernelParams params = {}, Correction correction = Correction::clip);

struct QualityRow {
    std::string trace;
    int step = 0;
    State state;
    std::optional<Edit> hint;
    double quality = 0.0;
    std::optional<double> distance;  // raw edit distance to the nearest tutor-hinted state
};

struct QualityReport {
    std::string policy;
    std::vector<QualityRow> rows;
    double median = 0.0;
    MeanStd quality;
    double fraction_positive = 0.0;
    std::optional<double> rmse;  // none when nothing was hinted
    double hintable = 0.0;
};

using HintFn = std::function<std::optional<Edit>(const State&)>;

/// Scores a policy against tutor ratings. Each annotated state (trace, step)
/// gets one hint; an exact match with a tutor edit earns the mean rating of
/// the matching tutor hints, anything else earns 0.
QualityReport hint_quality(const std::vector<TutorHint>& tutor_hints, const HintFn& policy, const CostModel& costs,
                           const std::string& policy_name = "custom");
QualityReport hint_quality(const Dataset& d, const GprModel& model, const std::string& policy, std::uint64_t seed = 0,
                           std::optional<int> m_max = std::nullopt);

struct SearchTrial {
    KernelParams params;
    double mean_next = 0.0;
};

struct SearchResult {
    KernelParams best;
    std::vector<SearchTrial> trials;
};

/// Log-uniform random search over length scale and noise, scored by mean
/// next-step RMSE of the gaussian_process scheme. Ties keep the earlier
/// sample.
SearchResult hyper_search(const EvalContext& ctx, std::pair<double, double> length_scale_range,
                          std::pair<double, double> noise_range, int repeats = 10, std::uint64_t seed = 0);
SearchResult hyper_search(const EvalContext& ctx, const std::vector<KernelParams>& candidates);

nlohmann::json to_json(const RmseReport& r);
nlohmann::json to_json(const QualityReport& r);
nlohmann::json to_json(const SearchResult& r);

/// One row per fold: trace,states,rmse_next,rmse_final,skipped
std::string folds_csv(const std::vector<RmseReport>& reports);
/// One row per annotated state.
std::string quality_csv(const QualityReport& r);

}  // namespace chf
