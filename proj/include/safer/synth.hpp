#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>

#include "safer/subspace.hpp"

namespace safer {

class TensorStore;

// Parameters of the planted signal model e_i = alpha_i v_c + o_i + kappa_i
// with alpha_i ~ N(0, sigma_alpha^2) and o_i, kappa_i isotropic Gaussians.
struct SyntheticSpec {
    int d = 64;
    int n = 128;
    double sigma_alpha = 1.0;
    double object_scale = 0.1;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
    // Unit vector; drawn uniformly on the sphere when absent.
    std::optional<Eigen::VectorXd> v_c;

    void validate() const;
};

struct SyntheticSample {
    EmbeddingMatrix embeddings;
    Eigen::VectorXd v_c;
    Eigen::VectorXd alpha;
};

SyntheticSample generate(const SyntheticSpec& spec);

struct CovarianceReport {
    int trials = 0;
    // Mean of emb^T emb / N over the trials.
    Eigen::MatrixXd covariance;
    Eigen::VectorXd eigenvalues;  // descending
    double top_eigenvalue = 0.0;
    double expected_top_eigenvalue = 0.0;
    double alignment = 0.0;  // |cos(top eigenvector, v_c)|
    double condition = 0.0;  // max / min eigenvalue

    bool eigenvalue_within(double relative) const;
};

// Trial t uses the seed derive_seed(spec.seed, t) and the same v_c.
CovarianceReport empirical_covariance_check(const SyntheticSpec& spec, int trials);

// Embedding store plus `ground_truth.v_c`, `ground_truth.alpha` and the full
// spec under `safer.synth.*` metadata.
TensorStore synthetic_to_store(const SyntheticSpec& spec, const SyntheticSample& sample, const std::string& label);

}  // namespace safer
