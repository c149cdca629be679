#include <doctest.h>

#include "helpers.hpp"
#include "safer/error.hpp"
#include "safer/projector.hpp"
#include "safer/synth.hpp"
#include "safer/tensor_store.hpp"

using namespace safer;

namespace {

ConceptBasis basis_of(const Eigen::MatrixXd& u, std::string label = "c") {
    ConceptBasis b;
    b.basis = u;
    b.label = std::move(label);
    return b;
}

ConceptBasis unit(Eigen::Index d, Eigen::Index i, std::string label = "c") {
    return basis_of(Eigen::MatrixXd::Identity(d, d).col(i), std::move(label));
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("projector") {

TEST_CASE("removing e1 in three dimensions") {
    const auto p = removal_projector(unit(3, 0));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(3, 3);
    expected(0, 0) = 0;
    CHECK(p.matrix == expected);
    CHECK(p.mode == ProjectorMode::Remove);
    Eigen::VectorXd x(3);
    x << 1, 2, 3;
    Eigen::VectorXd y(3);
    y << 0, 2, 3;
    CHECK(apply(p, x) == y);
}

TEST_CASE("amplify with lambda 2 along e1 in two dimensions") {
    const auto p = amplify_projector(unit(2, 0), 2.0);
    Eigen::MatrixXd expected(2, 2);
    expected << 3, 0, 0, 1;
    CHECK(p.matrix == expected);
    CHECK(p.lambda == 2.0);
    CHECK_THROWS_AS(amplify_projector(unit(2, 0), -0.5), ArgumentError);
    const auto partial = amplify_projector(unit(2, 0), -0.5, true);
    CHECK(partial.matrix(0, 0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(amplify_projector(unit(2, 0), std::nan("")), ArgumentError);
    CHECK(max_abs(amplify_projector(unit(2, 0), 0.0).matrix - Eigen::MatrixXd::Identity(2, 2)) == 0.0);
}

TEST_CASE("non-orthonormal basis is refused") {
    Eigen::MatrixXd u(3, 1);
    u << 1, 1, 0;
    CHECK_THROWS_AS(removal_projector(basis_of(u)), ArgumentError);
}

TEST_CASE("property: removal projector invariants") {
    safer::Rng rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        const auto d = 2 + static_cast<Eigen::Index>(rng.uniform() * 30);
        const auto k = 1 + static_cast<Eigen::Index>(rng.uniform() * std::min<Eigen::Index>(d - 1, 4));
        const Eigen::MatrixXd u = testing::random_orthonormal(rng, d, k);
        const auto p = removal_projector(basis_of(u));
        const Eigen::MatrixXd& m = p.matrix;

        CHECK(max_abs(m - m.transpose()) <= 1e-12);
        CHECK(max_abs(m * m - m) <= 1e-9);
        CHECK(max_abs(m * u) <= 1e-10);

        // Vectors orthogonal to the concept pass through unchanged.
        Eigen::VectorXd x = testing::gaussian(rng, d, 1);
        x -= u * (u.transpose() * x);
        CHECK((apply(p, x) - x).norm() <= 1e-10 * std::max(1.0, x.norm()));

        // Spectrum is k zeros and d-k ones, checked by an independent eigen solver.
        const auto eig = oracle::jacobi_eigen(testing::to_rows(m));
        for (Eigen::Index i = 0; i < d; ++i) {
            const double expected = i < d - k ? 1.0 : 0.0;
            CHECK(std::abs(eig.values[static_cast<std::size_t>(i)] - expected) <= 1e-9);
        }

        // Applying twice is the same as once.
        const Eigen::VectorXd y = testing::gaussian(rng, d, 1);
        CHECK((apply(p, apply(p, y)) - apply(p, y)).norm() <= 1e-9 * std::max(1.0, y.norm()));
        CHECK_NOTHROW(validate_projector(p));
    }
}

TEST_CASE("amplify scales the concept and keeps the complement") {
    safer::Rng rng(12);
    const Eigen::MatrixXd u = testing::random_orthonormal(rng, 10, 2);
    for (double lambda : {0.5, 1.0, 3.0}) {
        const auto p = amplify_projector(basis_of(u), lambda);
        CHECK(max_abs(p.matrix * u - (1 + lambda) * u) <= 1e-12);
        Eigen::VectorXd x = testing::gaussian(rng, 10, 1);
        x -= u * (u.transpose() * x);
        CHECK((apply(p, x) - x).norm() <= 1e-12);
        CHECK_NOTHROW(validate_projector(p));
    }
}

TEST_CASE("orthogonal concepts commute and compose to the joint removal") {
    const auto a = removal_projector(unit(4, 0, "a"));
    const auto b = removal_projector(unit(4, 2, "b"));
    const std::vector<Projector> ab{a, b};
    const std::vector<Projector> ba{b, a};
    CHECK(max_abs(compose(ab).matrix - compose(ba).matrix) == 0.0);
    const std::vector<ConceptBasis> both{unit(4, 0, "a"), unit(4, 2, "b")};
    CHECK(max_abs(compose(ab).matrix - orthogonalized_removal(both).matrix) <= 1e-15);
}

TEST_CASE("composition order is list order") {
    const auto r = removal_projector(unit(2, 0, "r"));
    Eigen::MatrixXd u(2, 1);
    u << std::sqrt(0.5), std::sqrt(0.5);
    const auto g = amplify_projector(basis_of(u, "g"), 1.0);
    const std::vector<Projector> rg{r, g};
    const std::vector<Projector> gr{g, r};
    CHECK(max_abs(compose(rg).matrix - r.matrix * g.matrix) == 0.0);
    CHECK(max_abs(compose(gr).matrix - g.matrix * r.matrix) == 0.0);
    CHECK(max_abs(compose(rg).matrix - compose(gr).matrix) > 0.1);
    CHECK(compose(rg).sources == std::vector<std::string>{"r", "g"});
    CHECK(compose(rg).mode == ProjectorMode::Composed);
    CHECK(compose(rg).factors.size() == 2);
}

TEST_CASE("composition is associative") {
    safer::Rng rng(5);
    std::vector<Projector> ps;
    for (int i = 0; i < 3; ++i) ps.push_back(removal_projector(basis_of(testing::random_orthonormal(rng, 6, 1))));
    const std::vector<Projector> left{compose(std::vector<Projector>{ps[0], ps[1]}), ps[2]};
    const std::vector<Projector> right{ps[0], compose(std::vector<Projector>{ps[1], ps[2]})};
    CHECK(max_abs(compose(left).matrix - compose(right).matrix) <= 1e-14);
    CHECK(max_abs(compose(left).matrix - compose(ps).matrix) <= 1e-14);
    CHECK(compose(left).factors.size() == 3);
}

TEST_CASE("compose rejects empty lists and mixed dimensions") {
    CHECK_THROWS_AS(compose(std::vector<Projector>{}), ArgumentError);
    const std::vector<Projector> mixed{removal_projector(unit(3, 0)), removal_projector(unit(4, 0))};
    CHECK_THROWS_AS(compose(mixed), ArgumentError);
}

TEST_CASE("two planted concepts at cosine 0.3 are both erased by the orthogonalized projector") {
    Eigen::VectorXd v1 = Eigen::VectorXd::Zero(16);
    v1(0) = 1;
    Eigen::VectorXd v2 = Eigen::VectorXd::Zero(16);
    v2(0) = 0.3;
    v2(1) = std::sqrt(1 - 0.09);

    auto concept_of = [](const Eigen::VectorXd& v, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.d = 16;
        spec.n = 256;
        spec.seed = seed;
        spec.v_c = v;
        return generate(spec);
    };
    const auto s1 = concept_of(v1, 1);
    const auto s2 = concept_of(v2, 2);
    const std::vector<ConceptBasis> bases{identify_subspace(s1.embeddings, 1, false, "one"),
                                          identify_subspace(s2.embeddings, 1, false, "two")};
    const auto p = orthogonalized_removal(bases);
    CHECK(p.sources == std::vector<std::string>{"one", "two"});
    for (const auto* s : {&s1, &s2}) {
        const auto erased = apply(p, s->embeddings);
        // Mean residual cosine between each erased row and the planted direction.
        double total = 0;
        for (Eigen::Index i = 0; i < erased.rows(); ++i) {
            total += testing::abs_cos(erased.values.row(i).transpose(), s->v_c);
        }
        CHECK(total / static_cast<double>(erased.rows()) <= 0.2);
    }
    CHECK_NOTHROW(validate_projector(p));
}

TEST_CASE("re-identifying after erasure drops the leading ratio") {
    SyntheticSpec spec;
    spec.seed = 3;
    const auto sample = generate(spec);
    const auto before = identify_subspace(sample.embeddings, 1);
    const auto after = identify_subspace(apply(removal_projector(before), sample.embeddings), 1);
    CHECK(after.explained_variance_ratio(0) < before.explained_variance_ratio(0));
    CHECK(testing::abs_cos(after.basis.col(0), sample.v_c) <= 0.2);
}

TEST_CASE("identity projector leaves embeddings untouched") {
    safer::Rng rng(1);
    EmbeddingMatrix emb;
    emb.values = testing::gaussian(rng, 5, 7);
    CHECK(apply(Projector::identity(7), emb).values == emb.values);
    CHECK_THROWS_AS(apply(Projector::identity(6), emb), ArgumentError);
}

TEST_CASE("store round-trip keeps matrix, mode and factors") {
    safer::Rng rng(9);
    const auto r = removal_projector(basis_of(testing::random_orthonormal(rng, 8, 2), "monet"));
    const auto a = amplify_projector(basis_of(testing::random_orthonormal(rng, 8, 1), "ink"), 1.5);
    const auto c = compose(std::vector<Projector>{r, a});
    for (const auto* p : {&r, &a, &c}) {
        const auto store = projector_to_store(*p);
        const auto back = projector_from_store(parse_store(serialize_store(store)));
        CHECK(back.matrix == p->matrix);
        CHECK(back.mode == p->mode);
        CHECK(back.lambda == p->lambda);
        CHECK(back.sources == p->sources);
        REQUIRE(back.factors.size() == p->factors.size());
        for (std::size_t i = 0; i < back.factors.size(); ++i) CHECK(back.factors[i].basis == p->factors[i].basis);
    }
    CHECK(projector_to_store(a).meta("safer.mode") == "amplify");
    CHECK(projector_to_store(a).meta("safer.lambda") == "1.5");
}

TEST_CASE("tampered projector files fail validation") {
    const auto r = removal_projector(unit(3, 1, "x"));
    auto store = projector_to_store(r);
    Eigen::MatrixXd bad = r.matrix;
    bad(0, 1) = 0.25;
    store.replace(NamedTensor::from_matrix("projection", bad, DType::F64));
    CHECK_THROWS_AS(projector_from_store(store), DataError);

    auto bad_mode = projector_to_store(r);
    bad_mode.metadata()["safer.mode"] = "sideways";
    CHECK_THROWS_AS(projector_from_store(bad_mode), FormatError);
}

}
