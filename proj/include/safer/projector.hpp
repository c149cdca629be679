#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "safer/subspace.hpp"

namespace safer {

class TensorStore;

enum class ProjectorMode { Remove, Amplify, Composed };

std::string_view mode_name(ProjectorMode mode);
ProjectorMode parse_mode(std::string_view name);

// One elementary operator I - U U^T (remove) or I + lambda U U^T (amplify).
struct ProjectorFactor {
    ProjectorMode mode = ProjectorMode::Remove;
    double lambda = 0.0;
    Eigen::MatrixXd basis;
    std::string source;

    Eigen::MatrixXd matrix() const;
};

// A d x d operator on text embeddings plus the factors it was built from, so
// the mode invariants can be re-checked after a round trip through a file.
struct Projector {
    Eigen::MatrixXd matrix;
    ProjectorMode mode = ProjectorMode::Remove;
    double lambda = 0.0;
    std::vector<std::string> sources;
    std::vector<ProjectorFactor> factors;

    Eigen::Index dim() const { return matrix.rows(); }

    static Projector identity(Eigen::Index dim);
};

Projector removal_projector(const ConceptBasis& basis);

// Negative lambda partially removes the concept; it is only accepted when
// `allow_negative` is set.
Projector amplify_projector(const ConceptBasis& basis, double lambda = 1.0, bool allow_negative = false);

// Left-to-right product in list order; applied to a vector the last factor
// acts first.
Projector compose(std::span<const Projector> projectors);

// Gram-Schmidt all bases into one joint basis and build a single symmetric
// removal projector. Directions already spanned are dropped.
Projector orthogonalized_removal(std::span<const ConceptBasis> bases);

// Rows of `emb` (or the vector) replaced by P x.
EmbeddingMatrix apply(const Projector& proj, const EmbeddingMatrix& emb);
Eigen::VectorXd apply(const Projector& proj, const Eigen::VectorXd& x);

// Tolerances for the mode invariants.
struct ProjectorTolerance {
    double idempotence = 1e-9;
    double symmetry = 1e-12;
    double reconstruction = 1e-10;
};

// Throws DataError describing the first violated invariant.
void validate_projector(const Projector& proj, const ProjectorTolerance& tol = {});

// Projector files: `projection` [d, d], `basis.<i>` [d, k_i]; metadata
// `safer.mode`, `safer.lambda`, `safer.sources`, `safer.factors`.
TensorStore projector_to_store(const Projector& proj);
// Re-validates the mode invariants.
Projector projector_from_store(const TensorStore& store);

}  // namespace safer
