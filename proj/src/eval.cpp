#include "chf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace chf {

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::do_nothing: return "do_nothing";
        case Scheme::successor_of_closest: return "successor_of_closest";
        case Scheme::closest_correct: return "closest_correct";
        case Scheme::gaussian_process: return "gaussian_process";
        case Scheme::nwr: return "nwr";
        case Scheme::nn: return "nn";
    }
    return "do_nothing";
}

Scheme scheme_from_string(const std::string& s) {
    for (auto sc : all_schemes())
        if (to_string(sc) == s) return sc;
    throw std::invalid_argument("unknown prediction scheme '" + s + "'");
}

const std::vector<Scheme>& all_schemes() {
    static const std::vector<Scheme> all{Scheme::do_nothing,       Scheme::successor_of_closest,
                                         Scheme::closest_correct,  Scheme::gaussian_process,
                                         Scheme::nwr,              Scheme::nn};
    return all;
}

EvalContext EvalContext::build(const std::vector<Trace>& traces, const CostModel& costs, Correction correction) {
    EvalContext ctx;
    ctx.pairs = build_pairs(traces);
    const auto n = static_cast<Eigen::Index>(ctx.pairs.size());
    if (n == 0) throw DataError("no training states");
    const auto dd = pairwise_distances(ctx.pairs.states, costs);
    ctx.raw_distance.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) ctx.raw_distance(i, j) = dd[i][j];
    if (!ctx.raw_distance.allFinite()) throw DataError("infinite edit distance between training states");
    ctx.space = Spaced(ctx.raw_distance.cwiseProduct(ctx.raw_distance), correction);
    ctx.sqdist = ctx.space.corrected_sqdist();
    return ctx;
}

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() < 2) return r;
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return r;
}

namespace {

// Index of the minimum of d over `among`; ties go to the lowest trace id, then
// the lowest index.
std::size_t argmin_over(const Eigen::VectorXd& d, const std::vector<std::size_t>& among, const TracePairs& pairs) {
    std::size_t best = among.front();
    for (auto i : among) {
        if (d(i) < d(best) ||
            (d(i) == d(best) && pairs.trace_ids[pairs.trace_of[i]] < pairs.trace_ids[pairs.trace_of[best]]))
            best = i;
    }
    return best;
}

FoldResult run_fold(const EvalContext& ctx, std::size_t fold, Scheme scheme, KernelParams params,
                    bool final_self_pairs) {
    const auto& pairs = ctx.pairs;
    const auto n = static_cast<Eigen::Index>(pairs.size());
    FoldResult fr;
    fr.trace = pairs.trace_ids[fold];

    std::vector<std::size_t> held, train, sources, finals;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs.trace_of[i] == fold) {
            held.push_back(i);
            continue;
        }
        train.push_back(i);
        if (pairs.is_final(i)) finals.push_back(i);
        if (final_self_pairs || !pairs.is_final(i)) sources.push_back(i);
    }
    fr.states = held.size();
    if (sources.empty() || finals.empty()) {
        fr.skipped = true;
        fr.note = "no training pairs";
        return fr;
    }

    std::optional<KernelSolver> solver;
    const bool kernel_scheme =
        scheme == Scheme::gaussian_process || scheme == Scheme::nwr || scheme == Scheme::nn;
    if (scheme == Scheme::gaussian_process) {
        Eigen::MatrixXd k(sources.size(), sources.size());
        for (std::size_t a = 0; a < sources.size(); ++a)
            for (std::size_t b = 0; b < sources.size(); ++b)
                k(a, b) = rbf(std::max(ctx.sqdist(sources[a], sources[b]), 0.0), params.length_scale);
        try {
            solver = KernelSolver(k, params.noise_std);
        } catch (const NumericalError& e) {
            fr.skipped = true;
            fr.note = e.what();
            return fr;
        }
    }

    const std::size_t goal = held.back();
    double sum_next = 0.0, sum_final = 0.0;
    for (auto h : held) {
        Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
        const Eigen::VectorXd d = ctx.sqdist.col(static_cast<Eigen::Index>(h));
        switch (scheme) {
            case Scheme::do_nothing: p(h) = 1.0; break;
            case Scheme::successor_of_closest: p(pairs.successor(argmin_over(d, train, pairs))) = 1.0; break;
            case Scheme::closest_correct: p(argmin_over(d, finals, pairs)) = 1.0; break;
            default: break;
        }
        if (kernel_scheme) {
            Eigen::VectorXd k(sources.size());
            for (std::size_t a = 0; a < sources.size(); ++a)
                k(a) = rbf(std::max(d(sources[a]), 0.0), params.length_scale);
            Eigen::VectorXd gamma;
            if (scheme == Scheme::gaussian_process) {
                gamma = solver->weights(k);
            } else if (scheme == Scheme::nwr) {
                const double total = k.sum();
                gamma = total > 0.0 ? Eigen::VectorXd(k / total) : Eigen::VectorXd::Zero(k.size());
            } else {
                gamma = Eigen::VectorXd::Zero(k.size());
                Eigen::Index best = 0;
                for (Eigen::Index a = 1; a < k.size(); ++a)
                    if (d(sources[a]) < d(sources[best])) best = a;
                gamma(best) = 1.0;
            }
            p(h) = 1.0;
            p += alpha_from_gamma(gamma, pairs, sources);
        }
        Eigen::VectorXd next = Eigen::VectorXd::Zero(n), fin = Eigen::VectorXd::Zero(n);
        next(pairs.successor(h)) = 1.0;
        fin(goal) = 1.0;
        sum_next += std::max(combo_sqdist(ctx.space, p, next), 0.0);
        sum_final += std::max(combo_sqdist(ctx.space, p, fin), 0.0);
    }
    fr.rmse_next = std::sqrt(sum_next / static_cast<double>(held.size()));
    fr.rmse_final = std::sqrt(sum_final / static_cast<double>(held.size()));
    return fr;
}

}  // namespace

RmseReport loo_rmse(const EvalContext& ctx, Scheme scheme, KernelParams params, bool final_self_pairs) {
    if (ctx.pairs.trace_ids.size() < 2) throw DataError("leave-one-out evaluation needs at least two traces");
    if (!(params.length_scale > 0.0) || !(params.noise_std >= 0.0))
        throw std::invalid_argument("kernel parameters out of range");
    RmseReport r;
    r.scheme = scheme;
    r.params = params;
    const std::size_t folds = ctx.pairs.trace_ids.size();
    r.folds.resize(folds);
    const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, folds);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t f = w; f < folds; f += workers)
                r.folds[f] = run_fold(ctx, f, scheme, params, final_self_pairs);
        });
    for (auto& t : pool) t.join();

    std::vector<double> next, fin;
    for (const auto& f : r.folds) {
        if (f.skipped) {
            ++r.skipped;
            continue;
        }
        next.push_back(f.rmse_next);
        fin.push_back(f.rmse_final);
    }
    r.next = mean_std(next);
    r.final = mean_std(fin);
    if (next.empty()) r.next.mean = r.final.mean = std::numeric_limits<double>::quiet_NaN();
    return r;
}

RmseReport loo_rmse(const std::vector<Trace>& traces, const CostModel& costs, Scheme scheme, KernelParams params,
                    Correction correction) {
    return loo_rmse(EvalContext::build(traces, costs, correction), scheme, params);
}

QualityReport hint_quality(const std::vector<TutorHint>& tutor_hints, const HintFn& policy, const CostModel& costs,
                           const std::string& policy_name) {
    QualityReport r;
    r.policy = policy_name;
    // Annotated states in first-seen order.
    std::vector<std::pair<std::string, int>> order;
    std::map<std::pair<std::string, int>, std::vector<const TutorHint*>> groups;
    for (const auto& t : tutor_hints) {
        auto key = std::make_pair(t.trace, t.step);
        auto& g = groups[key];
        if (g.empty()) order.push_back(key);
        g.push_back(&t);
    }

    std::vector<double> qualities;
    double sq = 0.0;
    std::size_t hinted = 0, positive = 0;
    for (const auto& key : order) {
        const auto& g = groups[key];
        QualityRow row;
        row.trace = key.first;
        row.step = key.second;
        row.state = g.front()->state;
        row.hint = policy(row.state);
        if (row.hint) {
            ++hinted;
            const auto hk = edit_key(*row.hint);
            double total = 0.0;
            int matches = 0;
            for (const auto* t : g)
                if (edit_key(t->edit) == hk) {
                    total += t->quality;
                    ++matches;
                }
            row.quality = matches ? total / matches : 0.0;

            std::optional<State> mine;
            try {
                mine = apply_edit(row.state, *row.hint);
            } catch (const AddressError&) {
            }
            if (mine) {
                for (const auto* t : g) {
                    try {
                        const double d = edit_distance_value(*mine, apply_edit(row.state, t->edit), costs);
                        if (!row.distance || d < *row.distance) row.distance = d;
                    } catch (const AddressError&) {
                    }
                }
            }
            if (row.distance) sq += *row.distance * *row.distance;
        }
        if (row.quality > 0.0) ++positive;
        qualities.push_back(row.quality);
        r.rows.push_back(std::move(row));
    }

    const auto total = static_cast<double>(r.rows.size());
    if (!qualities.empty()) {
        auto sorted = qualities;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t k = sorted.size();
        r.median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
        r.quality = mean_std(qualities);
        r.fraction_positive = positive / total;
        r.hintable = hinted / total;
    }
    std::size_t measured = 0;
    for (const auto& row : r.rows)
        if (row.distance) ++measured;
    if (measured) r.rmse = std::sqrt(sq / static_cast<double>(measured));
    return r;
}

QualityReport hint_quality(const Dataset& d, const GprModel& model, const std::string& policy, std::uint64_t seed,
                           std::optional<int> m_max) {
    if (d.tutor_hints.empty()) throw DataError("dataset has no tutor hints");
    HintFn fn = [&](const State& x) -> std::optional<Edit> {
        return hint_by_name(model, policy, x, seed, m_max).edit;
    };
    return hint_quality(d.tutor_hints, fn, model.costs(), policy);
}

namespace {

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double log_uniform(std::mt19937_64& rng, std::pair<double, double> range) {
    const double lo = std::log(range.first), hi = std::log(range.second);
    if (lo == hi) return range.first;
    return std::exp(lo + (hi - lo) * unit_draw(rng));
}

}  // namespace

SearchResult hyper_search(const EvalContext& ctx, const std::vector<KernelParams>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("no hyper-parameter candidates");
    SearchResult r;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : candidates) {
        const auto rep = loo_rmse(ctx, Scheme::gaussian_process, p);
        const double score = std::isnan(rep.next.mean) ? std::numeric_limits<double>::infinity() : rep.next.mean;
        r.trials.push_back({p, rep.next.mean});
        if (r.trials.size() == 1 || score < best) {
            best = score;
            r.best = p;
        }
    }
    return r;
}

SearchResult hyper_search(const EvalContext& ctx, std::pair<double, double> length_scale_range,
                          std::pair<double, double> noise_range, int repeats, std::uint64_t seed) {
    auto valid = [](std::pair<double, double> r) { return r.first > 0.0 && r.second >= r.first; };
    if (!valid(length_scale_range) || !valid(noise_range))
        throw std::invalid_argument("search ranges must be positive with low <= high");
    if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
    std::mt19937_64 rng(seed);
    std::vector<KernelParams> candidates;
    for (int i = 0; i < repeats; ++i) {
        KernelParams p;
        p.length_scale = log_uniform(rng, length_scale_range);
        p.noise_std = log_uniform(rng, noise_range);
        candidates.push_back(p);
    }
    return hyper_search(ctx, candidates);
}

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const RmseReport& r) {
    nlohmann::json j;
    j["scheme"] = to_string(r.scheme);
    j["length_scale"] = r.params.length_scale;
    j["noise_std"] = r.params.noise_std;
    j["next"] = {{"mean", number_or_null(r.next.mean)}, {"std", number_or_null(r.next.std)}};
    j["final"] = {{"mean", number_or_null(r.final.mean)}, {"std", number_or_null(r.final.std)}};
    j["skipped"] = r.skipped;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json jf{{"trace", f.trace}, {"states", f.states}, {"skipped", f.skipped}};
        jf["rmse_next"] = f.skipped ? nlohmann::json(nullptr) : nlohmann::json(f.rmse_next);
        jf["rmse_final"] = f.skipped ? nlohmann::json(nullptr) : nlohmann::json(f.rmse_final);
        if (!f.note.empty()) jf["note"] = f.note;
        j["folds"].push_back(std::move(jf));
    }
    return j;
}

nlohmann::json to_json(const QualityReport& r) {
    nlohmann::json j;
    j["policy"] = r.policy;
    j["annotated"] = r.rows.size();
    j["median"] = r.median;
    j["mean"] = r.quality.mean;
    j["std"] = r.quality.std;
    j["fraction_positive"] = r.fraction_positive;
    j["rmse"] = r.rmse ? nlohmann::json(*r.rmse) : nlohmann::json(nullptr);
    j["hintable"] = r.hintable;
    return j;
}

nlohmann::json to_json(const SearchResult& r) {
    nlohmann::json j;
    j["best"] = {{"length_scale", r.best.length_scale}, {"noise_std", r.best.noise_std}};
    j["trials"] = nlohmann::json::array();
    for (const auto& t : r.trials)
        j["trials"].push_back({{"length_scale", t.params.length_scale},
                               {"noise_std", t.params.noise_std},
                               {"mean_next", number_or_null(t.mean_next)}});
    return j;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string folds_csv(const std::vector<RmseReport>& reports) {
    std::string out = "scheme,trace,states,rmse_next,rmse_final,skipped\n";
    for (const auto& r : reports)
        for (const auto& f : r.folds) {
            out += to_string(r.scheme) + "," + csv_field(f.trace) + "," + std::to_string(f.states) + ",";
            out += f.skipped ? "," : fmt(f.rmse_next) + "," + fmt(f.rmse_final);
            out += f.skipped ? ",1\n" : ",0\n";
        }
    return out;
}

std::string quality_csv(const QualityReport& r) {
    std::string out = "policy,trace,step,state,hint,quality,distance\n";
    for (const auto& row : r.rows) {
        out += csv_field(r.policy) + "," + csv_field(row.trace) + "," + std::to_string(row.step) + ",";
        out += csv_field(state_text(row.state)) + ",";
        out += (row.hint ? csv_field(edit_key(*row.hint)) : std::string()) + ",";
        out += fmt(row.quality) + ",";
        out += (row.distance ? fmt(*row.distance) : std::string()) + "\n";
    }
    return out;
}

}  // namespace chf
