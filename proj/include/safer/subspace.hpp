#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace safer {

class TensorStore;

// N prompt embeddings of dimension d, one per row.
struct EmbeddingMatrix {
    Eigen::MatrixXd values;
    bool centered = false;
    std::string provenance;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }

    // Throws ArgumentError on an empty or non-finite matrix, or on a `centered`
    // flag the column means contradict.
    void validate() const;
    // Copy with the row mean subtracted; a no-op copy when already centered.
    EmbeddingMatrix centered_copy() const;
};

// Orthonormal basis (d x k) of a concept subspace with the full spectrum it
// was cut from.
struct ConceptBasis {
    Eigen::MatrixXd basis;
    Eigen::VectorXd singular_values;
    Eigen::VectorXd explained_variance_ratio;
    std::string label;

    Eigen::Index dim() const { return basis.rows(); }
    Eigen::Index rank() const { return basis.cols(); }
};

// Dominant `rank` directions of the embedding rows in R^d.
//
// Each column is sign-normalised so its largest-magnitude entry is positive.
// Throws ArgumentError when rank is out of range or when the cut at `rank`
// falls between equal singular values (the subspace is then not unique), and
// DegenerateSpectrumError for an all-zero matrix.
ConceptBasis identify_subspace(const EmbeddingMatrix& emb, int rank = 1, bool center = false,
                               std::string label = {});

struct SpectrumEntry {
    int index;
    double singular_value;
    double explained_variance_ratio;
};

std::vector<SpectrumEntry> spectrum_report(const ConceptBasis& basis);

// Full singular spectrum of the embedding rows, without choosing a basis.
std::vector<SpectrumEntry> embedding_spectrum(const EmbeddingMatrix& emb, bool center = false);

// Throws ArgumentError unless basis^T basis == I within `tolerance`.
void check_orthonormal(const Eigen::MatrixXd& basis, double tolerance = 1e-9);

// Embedding dumps: tensor `embeddings` [N, d], metadata `safer.concept_label`.
EmbeddingMatrix embeddings_from_store(const TensorStore& store);
TensorStore embeddings_to_store(const EmbeddingMatrix& emb, const std::string& label);

// Basis files: `basis` [d, k], `singular_values`, `explained_variance_ratio`.
ConceptBasis basis_from_store(const TensorStore& store);
TensorStore basis_to_store(const ConceptBasis& basis);

}  // namespace safer
