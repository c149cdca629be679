#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace safer {

class TensorStore;

// Image features, one row per image.
struct FeatureSet {
    std::vector<std::string> labels;
    Eigen::MatrixXd features;

    // Throws ArgumentError on an empty set, zero or non-finite rows, or a
    // label count that disagrees with the row count.
    void validate() const;
};

// Mean over fake rows of the best cosine against any reference row.
double style_similarity(const FeatureSet& ref, const FeatureSet& fake);

struct Prediction {
    std::string id;
    std::string label;
};

struct AccuracySummary {
    double accuracy = 0.0;
    std::size_t total = 0;
    std::map<std::string, std::size_t> counts;
};

// Fraction of predictions equal to `target_label`.
AccuracySummary accuracy_summary(std::span<const Prediction> predictions, const std::string& target_label);

// Reads JSON lines {"id": ..., "label": ...}; blank lines are skipped.
std::vector<Prediction> read_predictions(std::istream& in);

// `features` [N, m] and a JSON label list in `safer.labels`.
FeatureSet feature_set_from_store(const TensorStore& store);

}  // namespace safer
