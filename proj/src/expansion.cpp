#include "safer/expansion.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "safer/error.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

FeatureVector::FeatureVector(std::string label, Eigen::VectorXd values)
    : label_(std::move(label)), values_(std::move(values)), norm_(values_.norm()) {
    if (values_.size() == 0) throw ArgumentError(fmt::format("feature '{}' is empty", label_));
    if (!values_.allFinite()) throw ArgumentError(fmt::format("feature '{}' contains NaN or Inf", label_));
    if (!(norm_ > 0.0)) throw ArgumentError(fmt::format("feature '{}' has zero norm", label_));
}

double similarity(const FeatureVector& a, const FeatureVector& b) {
    if (a.values().size() != b.values().size()) {
        throw ArgumentError(fmt::format("feature lengths differ: {} vs {}", a.values().size(), b.values().size()));
    }
    const double cos = a.values().dot(b.values()) / (a.norm() * b.norm());
    return std::clamp(cos, -1.0, 1.0);
}

std::string_view anchor_policy_name(AnchorPolicy policy) {
    return policy == AnchorPolicy::First ? "first" : "any-admitted";
}

AnchorPolicy parse_anchor_policy(std::string_view name) {
    if (name == "first") return AnchorPolicy::First;
    if (name == "any-admitted") return AnchorPolicy::AnyAdmitted;
    throw ArgumentError(fmt::format("unknown anchor policy '{}'", name));
}

void ExpansionConfig::validate() const {
    if (!(tau >= -1.0 && tau <= 1.0)) throw ArgumentError(fmt::format("tau {} outside [-1, 1]", tau));
    if (max_rank && *max_rank < 1) throw ArgumentError("max_rank must be positive");
}

ExpansionResult expand(const ConceptBasis& anchor_basis, const FeatureVector& anchor_feature,
                       std::span<const Candidate> candidates, const ExpansionConfig& cfg) {
    cfg.validate();
    const Eigen::Index d = anchor_basis.dim();
    for (const auto& c : candidates) {
        if (c.basis.dim() != d) {
            throw ArgumentError(fmt::format("candidate '{}' basis has dimension {}, anchor has {}", c.feature.label(),
                                            c.basis.dim(), d));
        }
        if (c.feature.values().size() != anchor_feature.values().size()) {
            throw ArgumentError(fmt::format("candidate '{}' feature length {} differs from anchor {}",
                                            c.feature.label(), c.feature.values().size(),
                                            anchor_feature.values().size()));
        }
    }
    if (cfg.max_rank && anchor_basis.rank() > *cfg.max_rank) {
        throw ArgumentError(fmt::format("anchor rank {} already exceeds max_rank {}", anchor_basis.rank(), *cfg.max_rank));
    }

    ExpansionResult result;
    result.anchor_label = anchor_feature.label();
    result.projector = removal_projector(anchor_basis);
    std::vector<const FeatureVector*> admitted{&anchor_feature};
    Eigen::Index erased = anchor_basis.rank();

    for (const auto& c : candidates) {
        double score = similarity(anchor_feature, c.feature);
        if (cfg.anchor_policy == AnchorPolicy::AnyAdmitted) {
            for (const auto* f : admitted) score = std::max(score, similarity(*f, c.feature));
        }
        AdmissionRecord rec{c.feature.label(), score, cfg.tau, score > cfg.tau, {}};
        if (rec.admitted && cfg.max_rank && erased + c.basis.rank() > *cfg.max_rank) {
            rec.admitted = false;
            rec.note = "max_rank";
        }
        if (rec.admitted) {
            const Projector step = removal_projector(c.basis);
            const std::vector<Projector> pair{result.projector, step};
            result.projector = compose(pair);
            admitted.push_back(&c.feature);
            erased += c.basis.rank();
        }
        result.log.push_back(std::move(rec));
    }
    return result;
}

std::string format_admission_log(const ExpansionResult& result) {
    std::string out;
    out += fmt::format("{{\"event\":\"anchor\",\"label\":{}}}\n", nlohmann::json(result.anchor_label).dump());
    for (const auto& r : result.log) {
        out += fmt::format("{{\"event\":\"candidate\",\"label\":{},\"score\":{:.6f},\"tau\":{:.6f},\"admitted\":{}",
                           nlohmann::json(r.label).dump(), r.score, r.tau, r.admitted);
        if (!r.note.empty()) out += fmt::format(",\"note\":{}", nlohmann::json(r.note).dump());
        out += "}\n";
    }
    return out;
}

std::vector<FeatureVector> features_from_store(const TensorStore& store) {
    const auto& t = store.at("features");
    if (t.shape.size() != 2) throw DataError("tensor 'features' must be rank 2 [M, m]");
    const Eigen::MatrixXd m = t.to_matrix();
    std::vector<std::string> labels;
    if (auto raw = store.meta("safer.labels")) {
        try {
            labels = nlohmann::json::parse(*raw).get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(fmt::format("bad safer.labels metadata: {}", e.what()));
        }
        if (labels.size() != static_cast<std::size_t>(m.rows())) {
            throw FormatError(fmt::format("{} labels for {} feature rows", labels.size(), m.rows()));
        }
    } else {
        for (Eigen::Index i = 0; i < m.rows(); ++i) labels.push_back(std::to_string(i));
    }
    std::vector<FeatureVector> out;
    out.reserve(labels.size());
    try {
        for (Eigen::Index i = 0; i < m.rows(); ++i) out.emplace_back(labels[static_cast<std::size_t>(i)], m.row(i).transpose());
    } catch (const ArgumentError& e) {
        throw DataError(e.what());
    }
    return out;
}

TensorStore features_to_store(std::span<const FeatureVector> features) {
    if (features.empty()) throw ArgumentError("no features to store");
    const Eigen::Index m = features.front().values().size();
    Eigen::MatrixXd mat(static_cast<Eigen::Index>(features.size()), m);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].values().size() != m) throw ArgumentError("feature lengths differ");
        mat.row(static_cast<Eigen::Index>(i)) = features[i].values().transpose();
        labels.push_back(features[i].label());
    }
    TensorStore store;
    store.insert(NamedTensor::from_matrix("features", mat));
    store.metadata()["safer.labels"] = nlohmann::json(labels).dump();
    return store;
}

}  // namespace safer
