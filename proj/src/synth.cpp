#include "safer/synth.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

#include "safer/error.hpp"
#include "safer/random.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

namespace {

Eigen::VectorXd unit_vector_on_sphere(Rng& rng, int d) {
    Eigen::VectorXd v(d);
    do {
        for (int i = 0; i < d; ++i) v(i) = rng.normal();
    } while (v.norm() == 0.0);
    return v / v.norm();
}

// Draw order: v_c (when not supplied), then per row alpha_i, o_i, kappa_i.
SyntheticSample draw(const SyntheticSpec& spec, std::uint64_t seed, const Eigen::VectorXd* fixed_v) {
    Rng rng(seed);
    SyntheticSample s;
    s.v_c = fixed_v != nullptr ? *fixed_v : unit_vector_on_sphere(rng, spec.d);
    s.alpha.resize(spec.n);
    s.embeddings.values.resize(spec.n, spec.d);
    for (int i = 0; i < spec.n; ++i) {
        s.alpha(i) = spec.sigma_alpha * rng.normal();
        auto row = s.embeddings.values.row(i);
        row = s.alpha(i) * s.v_c.transpose();
        for (int j = 0; j < spec.d; ++j) row(j) += spec.object_scale * rng.normal();
        for (int j = 0; j < spec.d; ++j) row(j) += spec.noise_scale * rng.normal();
    }
    return s;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (d < 2) throw ArgumentError(fmt::format("d must be at least 2, got {}", d));
    if (n < 1) throw ArgumentError(fmt::format("N must be at least 1, got {}", n));
    if (!(sigma_alpha >= 0) || !(object_scale >= 0) || !(noise_scale >= 0) || !std::isfinite(sigma_alpha) ||
        !std::isfinite(object_scale) || !std::isfinite(noise_scale)) {
        throw ArgumentError("scales must be finite and non-negative");
    }
    if (v_c) {
        if (v_c->size() != d) throw ArgumentError(fmt::format("v_c has length {}, expected {}", v_c->size(), d));
        if (std::abs(v_c->norm() - 1.0) > 1e-12) throw ArgumentError("v_c must be a unit vector");
    }
}

SyntheticSample generate(const SyntheticSpec& spec) {
    spec.validate();
    return draw(spec, spec.seed, spec.v_c ? &*spec.v_c : nullptr);
}

bool CovarianceReport::eigenvalue_within(double relative) const {
    return std::abs(top_eigenvalue - expected_top_eigenvalue) <= relative * expected_top_eigenvalue;
}

CovarianceReport empirical_covariance_check(const SyntheticSpec& spec, int trials) {
    spec.validate();
    if (trials < 1) throw ArgumentError("trials must be positive");
    const SyntheticSample first = generate(spec);

    CovarianceReport r;
    r.trials = trials;
    r.covariance = Eigen::MatrixXd::Zero(spec.d, spec.d);
    for (int t = 0; t < trials; ++t) {
        const SyntheticSample s = t == 0 ? first : draw(spec, derive_seed(spec.seed, static_cast<std::uint64_t>(t)), &first.v_c);
        r.covariance.noalias() += s.embeddings.values.transpose() * s.embeddings.values;
    }
    r.covariance /= static_cast<double>(trials) * spec.n;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r.covariance);
    r.eigenvalues = eig.eigenvalues().reverse();
    r.top_eigenvalue = r.eigenvalues(0);
    r.expected_top_eigenvalue =
        spec.sigma_alpha * spec.sigma_alpha + spec.object_scale * spec.object_scale + spec.noise_scale * spec.noise_scale;
    r.alignment = std::abs(eig.eigenvectors().col(spec.d - 1).dot(first.v_c));
    const double smallest = r.eigenvalues(spec.d - 1);
    r.condition = smallest > 0 ? r.top_eigenvalue / smallest : std::numeric_limits<double>::infinity();
    return r;
}

TensorStore synthetic_to_store(const SyntheticSpec& spec, const SyntheticSample& sample, const std::string& label) {
    TensorStore store = embeddings_to_store(sample.embeddings, label);
    store.insert(NamedTensor::from_vector("ground_truth.v_c", sample.v_c));
    store.insert(NamedTensor::from_vector("ground_truth.alpha", sample.alpha));
    auto& m = store.metadata();
    m["safer.synth.d"] = std::to_string(spec.d);
    m["safer.synth.n"] = std::to_string(spec.n);
    m["safer.synth.sigma_alpha"] = fmt::format("{}", spec.sigma_alpha);
    m["safer.synth.object_scale"] = fmt::format("{}", spec.object_scale);
    m["safer.synth.noise_scale"] = fmt::format("{}", spec.noise_scale);
    m["safer.synth.seed"] = std::to_string(spec.seed);
    m["safer.synth.rng"] = "mt19937_64+box-muller";
    return store;
}

}  // namespace safer
