#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "chf/policies.hpp"
#include "support/oracles.hpp"

using namespace chf;

namespace {

using K = SeqEdit::Kind;

Trace strings(std::string id, std::initializer_list<const char*> states) {
    Trace t{std::move(id), {}, true};
    for (const char* s : states) t.states.push_back(sequence_of_chars(s));
    return t;
}

State str(const char* s) { return sequence_of_chars(s); }

GprModel two_traces(bool final_self_pairs, KernelParams kp = {}) {
    ModelOptions o;
    o.final_self_pairs = final_self_pairs;
    o.kernel = kp;
    return GprModel::fit({strings("1", {"a", "aac"}), strings("2", {"b", "bbc"})}, StateKind::sequence,
                         CostModel::unit(), o);
}

std::set<std::string> keys(const std::vector<Edit>& edits) {
    std::set<std::string> out;
    for (const auto& e : edits) out.insert(edit_key(e));
    return out;
}

// Least-squares fit of `target` on the given support with coefficients
// summing to one, by Lagrange multipliers.
std::pair<Eigen::VectorXd, double> constrained_fit(const Eigen::MatrixXd& g, const Eigen::VectorXd& target,
                                                   const std::vector<int>& support) {
    const int s = static_cast<int>(support.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s + 1, s + 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s + 1);
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) a(i, j) = g(support[i], support[j]);
        a(i, s) = a(s, i) = 1;
        b(i) = g.row(support[i]).dot(target);
    }
    b(s) = 1;
    const Eigen::VectorXd sol = a.completeOrthogonalDecomposition().solve(b);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(target.size());
    for (int i = 0; i < s; ++i) coef(support[i]) = sol(i);
    const Eigen::VectorXd diff = coef - target;
    return {coef, diff.dot(g * diff)};
}

}  // namespace

TEST_CASE("rbf kernel") {
    CHECK(rbf(0.0, 1.0) == 1.0);
    CHECK(rbf(1.0, 1.0) == doctest::Approx(std::exp(-0.5)));
    CHECK(rbf(4.0, 2.0) == doctest::Approx(std::exp(-0.5)));
    Eigen::MatrixXd d2(1, 2);
    d2 << 0, 2;
    const Eigen::MatrixXd k = rbf(d2, 1.0);
    CHECK(k(0, 1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("regression weights on the two-trace example") {
    const auto m = two_traces(false);
    REQUIRE(m.sources().size() == 2);
    CHECK(m.kernel()(0, 1) == doctest::Approx(std::exp(-0.5)));
    const auto q = m.query(str("ab"));
    const Eigen::VectorXd g = gpr_weights(m, q);
    // k = (e^-1/2, e^-1/2) against K = [[1, e^-1/2], [e^-1/2, 1]].
    const double expect = std::exp(-0.5) / (1 + std::exp(-0.5));
    CHECK(g(0) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(g(1) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(g(0) == doctest::Approx(0.3775).epsilon(1e-4));

    const auto nw = nwr_weights(m, q);
    REQUIRE(nw);
    CHECK((*nw)(0) == doctest::Approx(0.5));
    CHECK((*nw)(1) == doctest::Approx(0.5));
    CHECK(nn_weights(m, q) == Eigen::Vector2d(1, 0));

    const Eigen::VectorXd alpha = alpha_from_gamma(g, m.pairs(), m.sources());
    CHECK(alpha(0) == doctest::Approx(-expect));
    CHECK(alpha(1) == doctest::Approx(expect));
    CHECK(alpha(2) == doctest::Approx(-expect));
    CHECK(alpha(3) == doctest::Approx(expect));
}

TEST_CASE("noise-free regression interpolates training sources") {
    const auto m = two_traces(true);
    for (std::size_t i = 0; i < m.sources().size(); ++i) {
        const auto q = m.query(m.pairs().states[m.sources()[i]]);
        const Eigen::VectorXd g = gpr_weights(m, q);
        CHECK((g - Eigen::VectorXd::Unit(g.size(), static_cast<Eigen::Index>(i))).norm() < 1e-8);
    }
}

TEST_CASE("weights decay far from the data") {
    const auto m = two_traces(true, {0.1, 0.0});
    const auto far = str("cccccccccccccccccccc");
    const auto q = m.query(far);
    CHECK(gpr_weights(m, q).norm() < 1e-6);
    CHECK_FALSE(nwr_weights(m, q).has_value());
    CHECK(chf_hint(m, far).reason == "kernel-decay");
    HintOptions nw;
    nw.weighting = Weighting::nwr;
    const auto h = chf_hint(m, far, nw);
    CHECK_FALSE(h.edit);
    CHECK(h.reason == "no-prediction");
}

TEST_CASE("pair weights and state coefficients describe the same point") {
    TracePairs p = build_pairs({strings("1", {"a", "aac"}), strings("2", {"b", "bbc"})});
    Eigen::Vector4d gamma(0.1, 0.7, -0.3, 0.2);
    CHECK(alpha_from_gamma(gamma, p).isApprox(Eigen::Vector4d(-0.1, 0.1, 0.3, -0.3)));

    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    p = build_pairs({strings("1", {"a", "ab", "abc"}), strings("2", {"c", "cc"}), strings("3", {"b"})});
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd pts(n, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) g(i) = normal(rng);
        Eigen::Vector3d moved = Eigen::Vector3d::Zero();
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto [src, dst] = p.pair_of[static_cast<std::size_t>(i)];
            moved += g(i) * (pts.row(static_cast<Eigen::Index>(dst)) - pts.row(static_cast<Eigen::Index>(src))).transpose();
        }
        const Eigen::VectorXd alpha = alpha_from_gamma(g, p);
        CHECK((pts.transpose() * alpha - moved).norm() < 1e-10);
    }
}

TEST_CASE("kernel solver drops tiny singular values") {
    Eigen::MatrixXd k = Eigen::MatrixXd::Ones(2, 2);
    const KernelSolver s(k, 0.0);
    CHECK(s.rank_deficient());
    const Eigen::VectorXd w = s.weights(Eigen::Vector2d(1, 1));
    CHECK(w(0) == doctest::Approx(0.5));
    CHECK(w(1) == doctest::Approx(0.5));
    const KernelSolver noisy(k, 1.0);
    CHECK_FALSE(noisy.rank_deficient());
}

TEST_CASE("allowed support") {
    const Eigen::Vector3d to_query(1, 2, 3), to_star(2, 2, 1);
    const auto a = allowed_support(to_query, to_star, 2.0);
    CHECK(a == std::vector<bool>{true, true, false, true});
}

TEST_CASE("sparse representation of the three-trace example") {
    ModelOptions o;
    o.m_max = 3;
    const auto m = GprModel::fit({strings("1", {"a", "aac"}), strings("2", {"b", "bbc"}), strings("3", {"abcd"})},
                                 StateKind::sequence, CostModel::unit(), o);
    const auto x = str("ab");
    const auto q = m.query(x);
    const std::size_t star = closest_correct(m, q);
    CHECK(m.pairs().states[star] == str("abcd"));

    const Eigen::VectorXd alpha = alpha_from_gamma(gpr_weights(m, q), m.pairs(), m.sources());
    const auto n = alpha.size();
    Eigen::VectorXd target(n + 1);
    target << alpha, 1.0;
    const Eigen::MatrixXd g = m.state_space().extended_gram(q.embedding);
    const auto allowed = allowed_support(q.raw_distance, m.raw_distance().col(static_cast<Eigen::Index>(star)),
                                         q.raw_distance(static_cast<Eigen::Index>(star)));
    // a and b are too far from abcd.
    CHECK(allowed == std::vector<bool>{false, true, false, true, true, true});

    const auto sp = sparsify(g, target, allowed, 3);
    CHECK(sp.sparsified);
    CHECK(sp.coefficients.sum() == doctest::Approx(1.0));
    CHECK((sp.coefficients.array() != 0).count() <= 3);

    // Exhaustive search over supports of up to three allowed entries.
    std::vector<int> pool;
    for (int i = 0; i <= n; ++i)
        if (allowed[static_cast<std::size_t>(i)]) pool.push_back(i);
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_coef;
    for (unsigned mask = 1; mask < (1u << pool.size()); ++mask) {
        std::vector<int> support;
        for (std::size_t b = 0; b < pool.size(); ++b)
            if (mask & (1u << b)) support.push_back(pool[b]);
        if (support.size() > 3) continue;
        const auto [coef, err] = constrained_fit(g, target, support);
        if (err < best - 1e-12) {
            best = err;
            best_coef = coef;
        }
    }
    CHECK(sp.error == doctest::Approx(best).epsilon(1e-8));
    CHECK((sp.coefficients - best_coef).norm() < 1e-6);
    // Equal weight on aac and bbc, the rest on abcd.
    CHECK(sp.coefficients(1) == doctest::Approx(sp.coefficients(3)));
    CHECK(sp.coefficients(4) > sp.coefficients(1));
    CHECK(sp.coefficients(1) == doctest::Approx(0.3043).epsilon(0.01 / 0.3043));
    CHECK(sp.coefficients(4) == doctest::Approx(0.3914).epsilon(0.01 / 0.3914));

    const auto h = chf_hint(m, x);
    REQUIRE(h.edit);
    CHECK(*h.edit == Edit{SeqEdit{K::insert, 3, "c"}});
}

TEST_CASE("single-entry sparsification picks the closest allowed state") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd pts(6, 2);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
        const Eigen::MatrixXd g = pts * pts.transpose();
        Eigen::VectorXd target(6);
        for (int i = 0; i < 6; ++i) target(i) = normal(rng);
        target(5) += 1 - target.sum();
        const std::vector<bool> allowed{true, false, true, true, false, true};
        const auto sp = sparsify(g, target, allowed, 1);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 6; ++i)
            if (allowed[static_cast<std::size_t>(i)]) {
                const Eigen::VectorXd d = Eigen::VectorXd::Unit(6, i) - target;
                best = std::min(best, d.dot(g * d));
            }
        CHECK(sp.error == doctest::Approx(best).epsilon(1e-9));
        CHECK((sp.coefficients.array() != 0).count() == 1);
    }
}

TEST_CASE("candidate edits for the two-trace example") {
    const auto c = candidate_edits(str("ab"), {str("aac"), str("bbc")}, CostModel::unit());
    CHECK(keys(c) == keys({SeqEdit{K::relabel, 2, "a"}, SeqEdit{K::insert, 3, "c"}, SeqEdit{K::relabel, 1, "b"}}));
    CHECK(candidate_edits(str("ab"), {str("ab")}, CostModel::unit()).empty());
}

TEST_CASE("pre-image selection") {
    const double w = std::exp(-0.5) / (1 + std::exp(-0.5));
    std::vector<std::pair<State, double>> ws{{str("a"), -w}, {str("aac"), w}, {str("b"), -w}, {str("bbc"), w},
                                             {str("ab"), 1.0}};
    std::vector<Edit> cands{SeqEdit{K::relabel, 2, "a"}, SeqEdit{K::insert, 3, "c"}, SeqEdit{K::relabel, 1, "b"}};
    const auto h = preimage_select(str("ab"), ws, cands, CostModel::unit());
    REQUIRE(h.edit);
    CHECK(*h.edit == cands[1]);
    CHECK(*h.result == str("abc"));
    REQUIRE(h.candidates.size() == 3);
    // abc is 2 from a and b, 1 from aac, bbc and ab.
    CHECK(h.objective == doctest::Approx(-w * 4 + w * 1 - w * 4 + w * 1 + 1));

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(ws.begin(), ws.end(), rng);
        std::shuffle(cands.begin(), cands.end(), rng);
        const auto again = preimage_select(str("ab"), ws, cands, CostModel::unit());
        CHECK(*again.edit == Edit{SeqEdit{K::insert, 3, "c"}});
    }

    CandidateFilter no_abc = [](const State& s) { return !(s == str("abc")); };
    const auto filtered = preimage_select(str("ab"), ws, cands, CostModel::unit(), no_abc);
    REQUIRE(filtered.edit);
    CHECK_FALSE(*filtered.edit == Edit{SeqEdit{K::insert, 3, "c"}});
    CHECK(preimage_select(str("ab"), ws, {}, CostModel::unit()).reason == "no-candidates");
}

TEST_CASE("pre-image selection matches brute force on random strings") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 100; ++trial) {
        const State x = oracle::random_sequence(rng, "abc", 5);
        std::vector<std::pair<State, double>> ws;
        std::vector<State> positives;
        for (int j = 0; j < 4; ++j) {
            const State s = oracle::random_sequence(rng, "abc", 5);
            const double wj = normal(rng);
            ws.emplace_back(s, wj);
            if (wj > 0) positives.push_back(s);
        }
        const auto cands = candidate_edits(x, positives, CostModel::unit());
        const auto h = preimage_select(x, ws, cands, CostModel::unit());
        if (cands.empty()) {
            CHECK_FALSE(h.edit);
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : cands) {
            const State r = apply_edit(x, e);
            double score = 0;
            for (const auto& [s, wj] : ws) score += wj * std::pow(edit_distance_value(r, s), 2);
            best = std::min(best, score);
        }
        REQUIRE(h.edit);
        CHECK(h.objective == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("pre-image score is the squared distance to the represented point") {
    // Single-symbol sequences name planted points; the metric is Euclidean.
    std::mt19937_64 rng(23);
    std::normal_distribution<double> normal;
    std::vector<Eigen::Vector2d> pts(8);
    for (auto& p : pts) p = Eigen::Vector2d(normal(rng), normal(rng));
    auto point = [&](const State& s) { return pts[std::stoul(std::get<Sequence>(s).symbols.at(0))]; };
    Metric euclid = [&](const State& a, const State& b) { return (point(a) - point(b)).norm(); };
    auto named = [](std::size_t i) { return State{Sequence{{std::to_string(i)}}}; };
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<State, double>> ws;
        Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
        double total = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            const double wj = std::abs(normal(rng)) + 0.1;
            ws.emplace_back(named(j), wj);
            centroid += wj * pts[j];
            total += wj;
        }
        centroid /= total;
        std::vector<Edit> cands;
        for (std::size_t j = 3; j < pts.size(); ++j) cands.push_back(SeqEdit{K::relabel, 1, std::to_string(j)});
        const auto h = preimage_select(named(0), ws, cands, euclid);
        std::size_t nearest = 3;
        for (std::size_t j = 4; j < pts.size(); ++j)
            if ((pts[j] - centroid).norm() < (pts[nearest] - centroid).norm()) nearest = j;
        REQUIRE(h.edit);
        CHECK(*h.edit == Edit{SeqEdit{K::relabel, 1, std::to_string(nearest)}});
        // With weights summing to one, score differences are differences of
        // squared distances to the weighted centroid.
        for (auto& [s, wj] : ws) wj /= total;
        const auto n = preimage_select(named(0), ws, cands, euclid);
        REQUIRE(n.candidates.size() == cands.size());
        for (std::size_t a = 0; a < cands.size(); ++a)
            for (std::size_t b = 0; b < cands.size(); ++b) {
                const auto pa = point(apply_edit(named(0), n.candidates[a].first));
                const auto pb = point(apply_edit(named(0), n.candidates[b].first));
                const double direct = (pa - centroid).squaredNorm() - (pb - centroid).squaredNorm();
                CHECK(std::abs(n.candidates[a].second - n.candidates[b].second - direct) < 1e-8);
            }
    }
}

TEST_CASE("ties prefer the earliest position") {
    const std::vector<std::pair<State, double>> ws{{str("ab"), 1.0}};
    const std::vector<Edit> cands{SeqEdit{K::insert, 3, "c"}, SeqEdit{K::insert, 1, "c"}, SeqEdit{K::insert, 2, "c"}};
    const auto h = preimage_select(str("ab"), ws, cands, CostModel::unit());
    CHECK(*h.edit == cands[1]);
    const std::vector<Edit> same_pos{SeqEdit{K::insert, 1, "c"}, SeqEdit{K::insert, 1, "b"}};
    CHECK(*preimage_select(str("ab"), ws, same_pos, CostModel::unit()).edit == same_pos[1]);
}

TEST_CASE("hints at the goal and from the baselines") {
    const auto m = two_traces(true);
    const auto at_goal = chf_hint(m, str("aac"));
    CHECK_FALSE(at_goal.edit);
    CHECK(at_goal.reason == "no-candidates");

    const auto z = zimmerman_hint(m.pairs(), str("ab"), CostModel::unit());
    REQUIRE(z.edit);
    CHECK(z.reference == std::size_t{1});
    CHECK(edit_distance_value(*z.result, str("aac")) == 1);

    const auto g = gross_hint(m.pairs(), str("ab"), CostModel::unit());
    REQUIRE(g.reference);
    CHECK(*g.reference == 1);  // successor of a
    const auto gz = gross_hint(m.pairs(), str("aac"), CostModel::unit());
    CHECK(gz.reason == "at-reference");

    for (std::uint64_t seed : {0u, 1u, 7u}) {
        const auto r1 = random_hint(m.pairs(), str("ab"), CostModel::unit(), seed);
        const auto r2 = random_hint(m.pairs(), str("ab"), CostModel::unit(), seed);
        CHECK(r1.reference == r2.reference);
        CHECK(r1.edit == r2.edit);
        REQUIRE(r1.reference);
        CHECK(*r1.reference == std::mt19937_64(seed)() % 4);
    }

    CHECK(hint_by_name(m, "chf", str("ab")).policy == "chf");
    CHECK(hint_by_name(m, "nn", str("ab")).policy == "nn");
    CHECK(hint_by_name(m, "zimmerman", str("ab")).policy == "zimmerman");
    CHECK_THROWS(hint_by_name(m, "oracle", str("ab")));
}

TEST_CASE("tree hints") {
    ModelOptions o;
    const auto m = GprModel::fit({Trace{"1", {parse_tree("r"), parse_tree("r(a)"), parse_tree("r(a,b)")}, true},
                                  Trace{"2", {parse_tree("r(b)"), parse_tree("r(a,b)")}, true}},
                                 StateKind::tree, CostModel::unit(), o);
    const auto h = chf_hint(m, parse_tree("r"));
    REQUIRE(h.edit);
    REQUIRE(h.result);
    CHECK(edit_distance_value(*h.result, parse_tree("r(a,b)")) == 1);
}
