#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "safer/projector.hpp"
#include "safer/subspace.hpp"

namespace safer {

class TensorStore;

// Image-encoder feature of one reference image. Its length is unrelated to
// the text-embedding dimension.
class FeatureVector {
public:
    // Throws ArgumentError on a non-finite or zero vector.
    FeatureVector(std::string label, Eigen::VectorXd values);

    const std::string& label() const { return label_; }
    const Eigen::VectorXd& values() const { return values_; }
    double norm() const { return norm_; }

private:
    std::string label_;
    Eigen::VectorXd values_;
    double norm_;
};

double similarity(const FeatureVector& a, const FeatureVector& b);

enum class AnchorPolicy { First, AnyAdmitted };

std::string_view anchor_policy_name(AnchorPolicy policy);
AnchorPolicy parse_anchor_policy(std::string_view name);

struct ExpansionConfig {
    double tau = 0.85;
    AnchorPolicy anchor_policy = AnchorPolicy::First;
    // Cap on the total number of erased directions, anchor included.
    std::optional<int> max_rank;

    void validate() const;
};

struct Candidate {
    FeatureVector feature;
    ConceptBasis basis;
};

struct AdmissionRecord {
    std::string label;
    double score;
    double tau;
    bool admitted;
    // Empty unless a candidate over the threshold was refused (rank cap).
    std::string note;
};

struct ExpansionResult {
    Projector projector;
    std::string anchor_label;
    std::vector<AdmissionRecord> log;
};

// Starts from the anchor's removal projector and right-multiplies the removal
// projector of every candidate whose score exceeds tau, in list order.
ExpansionResult expand(const ConceptBasis& anchor_basis, const FeatureVector& anchor_feature,
                       std::span<const Candidate> candidates, const ExpansionConfig& cfg = {});

// One JSON object per line: the anchor, then each candidate decision.
std::string format_admission_log(const ExpansionResult& result);

// Feature dumps: tensor `features` [M, m] with a JSON label list in metadata
// `safer.labels`.
std::vector<FeatureVector> features_from_store(const TensorStore& store);
TensorStore features_to_store(std::span<const FeatureVector> features);

}  // namespace safer
