#include "safer/subspace.hpp"

#include <cmath>

#include <Eigen/SVD>
#include <fmt/core.h>

#include "safer/error.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

namespace {

// Relative gap below which two singular values count as equal.
constexpr double kTieTolerance = 1e-10;
constexpr double kCenteredTolerance = 1e-9;

void normalize_sign(Eigen::Ref<Eigen::VectorXd> column) {
    Eigen::Index arg = 0;
    column.cwiseAbs().maxCoeff(&arg);
    if (column(arg) < 0) column = -column;
}

}  // namespace

void EmbeddingMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1) {
        throw ArgumentError(fmt::format("embedding matrix must be non-empty, got {}x{}", values.rows(), values.cols()));
    }
    if (!values.allFinite()) throw ArgumentError("embedding matrix contains NaN or Inf");
    if (centered) {
        const double worst = values.colwise().mean().cwiseAbs().maxCoeff();
        if (worst > kCenteredTolerance) {
            throw ArgumentError(fmt::format("matrix flagged centered but has column mean {:.3g}", worst));
        }
    }
}

EmbeddingMatrix EmbeddingMatrix::centered_copy() const {
    EmbeddingMatrix out = *this;
    if (!centered) {
        out.values.rowwise() -= values.colwise().mean();
        out.centered = true;
    }
    return out;
}

ConceptBasis identify_subspace(const EmbeddingMatrix& emb, int rank, bool center, std::string label) {
    emb.validate();
    const Eigen::Index full = std::min(emb.rows(), emb.dim());
    if (rank < 1 || rank > full) {
        throw ArgumentError(fmt::format("rank {} outside [1, min(N, d)] = [1, {}]", rank, full));
    }

    const Eigen::MatrixXd work = center ? emb.centered_copy().values : emb.values;
    // Columns of work^T live in embedding space, so its left singular vectors
    // are the directions we want.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(work.transpose(), Eigen::ComputeThinU);
    const Eigen::VectorXd& sigma = svd.singularValues();

    if (!(sigma(0) > 0.0)) throw DegenerateSpectrumError("embedding matrix is zero; no dominant direction");
    if (rank < full && sigma(rank - 1) - sigma(rank) <= kTieTolerance * sigma(0)) {
        throw ArgumentError(fmt::format("singular values {} and {} are tied ({:.17g}); subspace of rank {} is not unique",
                                        rank - 1, rank, sigma(rank - 1), rank));
    }

    ConceptBasis out;
    out.basis = svd.matrixU().leftCols(rank);
    for (Eigen::Index j = 0; j < out.basis.cols(); ++j) normalize_sign(out.basis.col(j));
    out.singular_values = sigma;
    const Eigen::VectorXd energy = sigma.array().square();
    out.explained_variance_ratio = energy / energy.sum();
    out.label = std::move(label);
    return out;
}

std::vector<SpectrumEntry> spectrum_report(const ConceptBasis& basis) {
    std::vector<SpectrumEntry> report;
    report.reserve(static_cast<std::size_t>(basis.singular_values.size()));
    for (Eigen::Index i = 0; i < basis.singular_values.size(); ++i) {
        report.push_back({static_cast<int>(i), basis.singular_values(i), basis.explained_variance_ratio(i)});
    }
    return report;
}

std::vector<SpectrumEntry> embedding_spectrum(const EmbeddingMatrix& emb, bool center) {
    emb.validate();
    const Eigen::MatrixXd work = center ? emb.centered_copy().values : emb.values;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(work.transpose());
    ConceptBasis spectrum_only;
    spectrum_only.singular_values = svd.singularValues();
    const double total = spectrum_only.singular_values.squaredNorm();
    spectrum_only.explained_variance_ratio = total > 0 ? Eigen::VectorXd(spectrum_only.singular_values.array().square() / total)
                                                       : Eigen::VectorXd::Zero(spectrum_only.singular_values.size());
    return spectrum_report(spectrum_only);
}

void check_orthonormal(const Eigen::MatrixXd& basis, double tolerance) {
    if (basis.cols() < 1 || basis.rows() < basis.cols()) {
        throw ArgumentError(fmt::format("basis of shape {}x{} cannot be orthonormal", basis.rows(), basis.cols()));
    }
    if (!basis.allFinite()) throw ArgumentError("basis contains NaN or Inf");
    const Eigen::MatrixXd gram = basis.transpose() * basis;
    const double err = (gram - Eigen::MatrixXd::Identity(basis.cols(), basis.cols())).cwiseAbs().maxCoeff();
    if (err > tolerance) throw ArgumentError(fmt::format("basis is not orthonormal (max |U^T U - I| = {:.3g})", err));
}

EmbeddingMatrix embeddings_from_store(const TensorStore& store) {
    const auto& t = store.at("embeddings");
    if (t.shape.size() != 2) throw DataError("tensor 'embeddings' must be rank 2 [N, d]");
    EmbeddingMatrix emb;
    emb.values = t.to_matrix();
    emb.provenance = store.meta("safer.prompt_hash").value_or("");
    return emb;
}

TensorStore embeddings_to_store(const EmbeddingMatrix& emb, const std::string& label) {
    TensorStore store;
    store.insert(NamedTensor::from_matrix("embeddings", emb.values));
    store.metadata()["safer.concept_label"] = label;
    if (!emb.provenance.empty()) store.metadata()["safer.prompt_hash"] = emb.provenance;
    return store;
}

ConceptBasis basis_from_store(const TensorStore& store) {
    ConceptBasis b;
    const auto& t = store.at("basis");
    if (t.shape.size() != 2) throw DataError("tensor 'basis' must be rank 2 [d, k]");
    b.basis = t.to_matrix();
    b.singular_values = store.at("singular_values").to_vector();
    b.explained_variance_ratio = store.at("explained_variance_ratio").to_vector();
    b.label = store.meta("safer.concept_label").value_or("");
    return b;
}

TensorStore basis_to_store(const ConceptBasis& basis) {
    TensorStore store;
    store.insert(NamedTensor::from_matrix("basis", basis.basis));
    store.insert(NamedTensor::from_vector("singular_values", basis.singular_values));
    store.insert(NamedTensor::from_vector("explained_variance_ratio", basis.explained_variance_ratio));
    store.metadata()["safer.concept_label"] = basis.label;
    store.metadata()["safer.rank"] = std::to_string(basis.rank());
    store.metadata()["safer.dim"] = std::to_string(basis.dim());
    return store;
}

}  // namespace safer
