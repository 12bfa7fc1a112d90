#include <doctest.h>

#include <random>

#include "chf/space.hpp"
#include "support/oracles.hpp"

using namespace chf;

namespace {

Eigen::MatrixXd sqdist_of(const Eigen::MatrixXd& pts) {
    const auto n = pts.rows();
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (pts.row(i) - pts.row(j)).squaredNorm();
    return d2;
}

Eigen::MatrixXd star() {
    Eigen::MatrixXd d2(4, 4);
    d2 << 0, 1, 1, 1,  //
        1, 0, 4, 4,    //
        1, 4, 0, 4,    //
        1, 4, 4, 0;
    return d2;
}

}  // namespace

TEST_CASE("double centering") {
    Eigen::MatrixXd d2(2, 2);
    d2 << 0, 1, 1, 0;
    Eigen::MatrixXd g(2, 2);
    g << 0.25, -0.25, -0.25, 0.25;
    CHECK((center(d2) - g).norm() < 1e-15);
    CHECK(center(Eigen::MatrixXd::Zero(3, 3)).norm() == 0);
}

TEST_CASE("planted Euclidean points survive clip unchanged") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd pts(12, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    const Eigen::MatrixXd d2 = sqdist_of(pts);
    for (auto mode : {Correction::clip, Correction::flip}) {
        const Spaced cs(d2, mode);
        CHECK((cs.corrected_sqdist() - d2).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("star metric spectrum matches an independent eigensolver") {
    const Eigen::MatrixXd g = center(star());
    std::vector<std::vector<double>> a(4, std::vector<double>(4));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) a[i][j] = g(i, j);
    const auto ev = oracle::jacobi_eigenvalues(a);
    const auto sp = eig_correct(g, Correction::clip);
    for (int i = 0; i < 4; ++i) CHECK(sp.eigenvalues(i) == doctest::Approx(ev[i]).epsilon(1e-10));
    // Two leaf directions at 2, one negative direction, and the constant vector.
    CHECK(ev[0] == doctest::Approx(2.0));
    CHECK(ev[1] == doctest::Approx(2.0));
    CHECK(ev[3] == doctest::Approx(-0.25));
    const Spaced cs(star(), Correction::clip);
    CHECK(cs.sqdist(0, 1) == doctest::Approx(4.0 / 3.0));
    CHECK(cs.sqdist(1, 2) == doctest::Approx(4.0));
}

TEST_CASE("corrections") {
    Eigen::VectorXd lambda(3);
    lambda << 3, 0, -1;
    CHECK(correct_eigenvalues<double>(lambda, Correction::clip) == Eigen::Vector3d(3, 0, 0));
    CHECK(correct_eigenvalues<double>(lambda, Correction::flip) == Eigen::Vector3d(3, 0, 1));
    double shift = 0;
    CHECK(correct_eigenvalues<double>(lambda, Correction::shift, &shift) == Eigen::Vector3d(4, 1, 0));
    CHECK(shift == 1);
    CHECK_THROWS_AS(correction_from_string("wrap"), std::invalid_argument);
}

TEST_CASE("extension of a training state reproduces its row") {
    for (auto mode : {Correction::clip, Correction::flip, Correction::shift}) {
        const Spaced cs(star(), mode);
        for (Eigen::Index j = 0; j < 4; ++j) {
            const auto q = cs.extend(star().col(j));
            CHECK((q.cross_gram - cs.gram().col(j)).norm() < 1e-12);
            CHECK(q.self_inner == doctest::Approx(cs.gram()(j, j)));
        }
    }
}

TEST_CASE("extension recovers held-out planted points") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd pts(10, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    const Spaced cs(sqdist_of(pts.topRows(9)), Correction::clip);
    Eigen::VectorXd d2(9);
    for (Eigen::Index i = 0; i < 9; ++i) d2(i) = (pts.row(i) - pts.row(9)).squaredNorm();
    const auto q = cs.extend(d2);
    CHECK((cs.query_sqdist(q) - d2).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("extension keeps the part outside the training span") {
    // Two points at distance 1; a query at distance 1 from both sits off the
    // line through them.
    Eigen::MatrixXd d2(2, 2);
    d2 << 0, 1, 1, 0;
    const Spaced cs(d2, Correction::clip);
    const auto q = cs.extend(Eigen::Vector2d(1, 1));
    CHECK(q.cross_gram(0) == doctest::Approx(q.cross_gram(1)));
    CHECK(cs.query_sqdist(q)(0) == doctest::Approx(1.0));
    CHECK(cs.query_sqdist(q)(1) == doctest::Approx(1.0));
}

TEST_CASE("distances between combinations") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd pts(6, 2);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = normal(rng);
    const Spaced cs(sqdist_of(pts), Correction::clip);
    for (int k = 0; k < 20; ++k) {
        Eigen::VectorXd a(6), b(6);
        for (int i = 0; i < 6; ++i) {
            a(i) = normal(rng);
            b(i) = normal(rng);
        }
        a /= a.sum();
        b /= b.sum();
        const double direct = (pts.transpose() * (a - b)).squaredNorm();
        CHECK(std::abs(combo_sqdist(cs, a, b) - direct) < 1e-8);
    }
    const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(6, 1), e4 = Eigen::VectorXd::Unit(6, 4);
    CHECK(combo_sqdist(cs, e1, e4) == doctest::Approx(cs.sqdist(1, 4)));
    CHECK(combo_sqdist(cs, e1, e1) == 0);
}

TEST_CASE("classical MDS of an equilateral triangle") {
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
    const Spaced cs(d2, Correction::clip);
    const Eigen::MatrixXd xy = cs.coordinates(2);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) CHECK((xy.row(i) - xy.row(j)).norm() == doctest::Approx(1.0));
}
