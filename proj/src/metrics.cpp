#include "safer/metrics.hpp"

#include <algorithm>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "safer/error.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

void FeatureSet::validate() const {
    if (features.rows() < 1 || features.cols() < 1) throw ArgumentError("feature set is empty");
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(features.rows())) {
        throw ArgumentError(fmt::format("{} labels for {} rows", labels.size(), features.rows()));
    }
    if (!features.allFinite()) throw ArgumentError("feature set contains NaN or Inf");
    const Eigen::VectorXd norms = features.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
        if (!(norms(i) > 0)) throw ArgumentError(fmt::format("feature row {} is zero", i));
    }
}

double style_similarity(const FeatureSet& ref, const FeatureSet& fake) {
    ref.validate();
    fake.validate();
    if (ref.features.cols() != fake.features.cols()) {
        throw ArgumentError(fmt::format("feature dimension {} vs {}", ref.features.cols(), fake.features.cols()));
    }
    const Eigen::MatrixXd r = ref.features.rowwise().normalized();
    const Eigen::MatrixXd f = fake.features.rowwise().normalized();
    // Pairwise dot products rather than one GEMM: each cosine then does not
    // depend on the size or order of either set.
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        double best = -1.0;
        for (Eigen::Index j = 0; j < r.rows(); ++j) best = std::max(best, f.row(i).dot(r.row(j)));
        total += std::clamp(best, -1.0, 1.0);
    }
    return std::clamp(total / static_cast<double>(f.rows()), -1.0, 1.0);
}

AccuracySummary accuracy_summary(std::span<const Prediction> predictions, const std::string& target_label) {
    if (predictions.empty()) throw ArgumentError("no predictions");
    AccuracySummary s;
    s.total = predictions.size();
    for (const auto& p : predictions) ++s.counts[p.label];
    const auto hit = s.counts.find(target_label);
    s.accuracy = hit == s.counts.end() ? 0.0 : static_cast<double>(hit->second) / static_cast<double>(s.total);
    return s;
}

std::vector<Prediction> read_predictions(std::istream& in) {
    std::vector<Prediction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("label").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(fmt::format("prediction line {}: {}", lineno, e.what()));
        }
    }
    return out;
}

FeatureSet feature_set_from_store(const TensorStore& store) {
    const auto& t = store.at("features");
    if (t.shape.size() != 2) throw DataError("tensor 'features' must be rank 2 [N, m]");
    FeatureSet fs;
    fs.features = t.to_matrix();
    if (auto raw = store.meta("safer.labels")) {
        try {
            fs.labels = nlohmann::json::parse(*raw).get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(fmt::format("bad safer.labels metadata: {}", e.what()));
        }
    }
    try {
        fs.validate();
    } catch (const ArgumentError& e) {
        throw DataError(e.what());
    }
    return fs;
}

}  // namespace safer
