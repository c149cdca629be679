#include "safer/projector.hpp"

#include <cmath>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "safer/error.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

namespace {

// Drop a Gram-Schmidt residual below this norm as already spanned.
constexpr double kDependenceTolerance = 1e-10;

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd product_of(const std::vector<ProjectorFactor>& factors, Eigen::Index dim) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Identity(dim, dim);
    for (const auto& f : factors) out = out * f.matrix();
    return out;
}

double max_abs(const Eigen::MatrixXd& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace

std::string_view mode_name(ProjectorMode mode) {
    switch (mode) {
        case ProjectorMode::Remove: return "remove";
        case ProjectorMode::Amplify: return "amplify";
        case ProjectorMode::Composed: return "composed";
    }
    return "remove";
}

ProjectorMode parse_mode(std::string_view name) {
    if (name == "remove") return ProjectorMode::Remove;
    if (name == "amplify") return ProjectorMode::Amplify;
    if (name == "composed") return ProjectorMode::Composed;
    throw ArgumentError(fmt::format("unknown projector mode '{}'", name));
}

Eigen::MatrixXd ProjectorFactor::matrix() const {
    const Eigen::Index d = basis.rows();
    const Eigen::MatrixXd outer = basis * basis.transpose();
    const double scale = mode == ProjectorMode::Remove ? -1.0 : lambda;
    return symmetrized(Eigen::MatrixXd::Identity(d, d) + scale * outer);
}

Projector Projector::identity(Eigen::Index dim) {
    Projector p;
    p.matrix = Eigen::MatrixXd::Identity(dim, dim);
    p.mode = ProjectorMode::Amplify;
    p.lambda = 0.0;
    return p;
}

Projector removal_projector(const ConceptBasis& basis) {
    check_orthonormal(basis.basis);
    ProjectorFactor factor{ProjectorMode::Remove, 0.0, basis.basis, basis.label};
    Projector p;
    p.matrix = factor.matrix();
    p.mode = ProjectorMode::Remove;
    p.sources = {basis.label};
    p.factors = {std::move(factor)};
    return p;
}

Projector amplify_projector(const ConceptBasis& basis, double lambda, bool allow_negative) {
    if (!std::isfinite(lambda)) throw ArgumentError("lambda must be finite");
    if (lambda < 0 && !allow_negative) {
        throw ArgumentError(fmt::format("negative lambda {} needs allow-negative", lambda));
    }
    check_orthonormal(basis.basis);
    ProjectorFactor factor{ProjectorMode::Amplify, lambda, basis.basis, basis.label};
    Projector p;
    p.matrix = factor.matrix();
    p.mode = ProjectorMode::Amplify;
    p.lambda = lambda;
    p.sources = {basis.label};
    p.factors = {std::move(factor)};
    return p;
}

Projector compose(std::span<const Projector> projectors) {
    if (projectors.empty()) throw ArgumentError("compose needs at least one projector");
    const Eigen::Index d = projectors.front().dim();
    Projector out;
    out.matrix = Eigen::MatrixXd::Identity(d, d);
    out.mode = ProjectorMode::Composed;
    for (const auto& p : projectors) {
        if (p.dim() != d) throw ArgumentError(fmt::format("cannot compose dimension {} with {}", d, p.dim()));
        out.matrix = out.matrix * p.matrix;
        out.sources.insert(out.sources.end(), p.sources.begin(), p.sources.end());
        out.factors.insert(out.factors.end(), p.factors.begin(), p.factors.end());
    }
    return out;
}

Projector orthogonalized_removal(std::span<const ConceptBasis> bases) {
    if (bases.empty()) throw ArgumentError("need at least one basis");
    const Eigen::Index d = bases.front().dim();
    std::vector<Eigen::VectorXd> columns;
    std::vector<std::string> sources;
    for (const auto& b : bases) {
        if (b.dim() != d) throw ArgumentError(fmt::format("basis '{}' has dimension {}, expected {}", b.label, b.dim(), d));
        check_orthonormal(b.basis);
        sources.push_back(b.label);
        for (Eigen::Index j = 0; j < b.rank(); ++j) {
            Eigen::VectorXd v = b.basis.col(j);
            // Two passes of modified Gram-Schmidt keep the joint basis orthonormal to rounding.
            for (int pass = 0; pass < 2; ++pass) {
                for (const auto& q : columns) v -= q.dot(v) * q;
            }
            const double norm = v.norm();
            if (norm > kDependenceTolerance) columns.push_back(v / norm);
        }
    }
    ConceptBasis joint;
    joint.basis.resize(d, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) joint.basis.col(static_cast<Eigen::Index>(j)) = columns[j];
    std::string joined;
    for (const auto& s : sources) joined += (joined.empty() ? "" : "+") + s;
    joint.label = joined;
    Projector p = removal_projector(joint);
    p.sources = std::move(sources);
    return p;
}

EmbeddingMatrix apply(const Projector& proj, const EmbeddingMatrix& emb) {
    if (emb.dim() != proj.dim()) {
        throw ArgumentError(fmt::format("embedding dimension {} does not match projector {}", emb.dim(), proj.dim()));
    }
    EmbeddingMatrix out;
    out.values = emb.values * proj.matrix.transpose();
    out.provenance = emb.provenance;
    if (!out.values.allFinite()) throw DataError("projection produced non-finite values");
    return out;
}

Eigen::VectorXd apply(const Projector& proj, const Eigen::VectorXd& x) {
    if (x.size() != proj.dim()) {
        throw ArgumentError(fmt::format("vector dimension {} does not match projector {}", x.size(), proj.dim()));
    }
    Eigen::VectorXd out = proj.matrix * x;
    if (!out.allFinite()) throw DataError("projection produced non-finite values");
    return out;
}

void validate_projector(const Projector& proj, const ProjectorTolerance& tol) {
    const auto& m = proj.matrix;
    if (m.rows() != m.cols() || m.rows() < 1) throw DataError(fmt::format("projection is {}x{}, not square", m.rows(), m.cols()));
    if (!m.allFinite()) throw DataError("projection contains NaN or Inf");
    for (const auto& f : proj.factors) {
        if (f.basis.rows() != m.rows()) throw DataError(fmt::format("factor '{}' has wrong dimension", f.source));
    }
    const double recon = max_abs(m - product_of(proj.factors, m.rows()));
    if (recon > tol.reconstruction) {
        throw DataError(fmt::format("{} projection differs from its factors by {:.3g}", mode_name(proj.mode), recon));
    }
    if (proj.mode == ProjectorMode::Remove) {
        const double asym = max_abs(m - m.transpose());
        if (asym > tol.symmetry) throw DataError(fmt::format("removal projection not symmetric ({:.3g})", asym));
        const double idem = max_abs(m * m - m);
        if (idem > tol.idempotence) throw DataError(fmt::format("removal projection not idempotent ({:.3g})", idem));
    }
    if (proj.mode == ProjectorMode::Amplify) {
        for (const auto& f : proj.factors) {
            if (f.mode != ProjectorMode::Amplify || f.lambda != proj.lambda) {
                throw DataError("amplify projection has a factor of another mode or lambda");
            }
        }
    }
}

TensorStore projector_to_store(const Projector& proj) {
    TensorStore store;
    store.insert(NamedTensor::from_matrix("projection", proj.matrix));
    nlohmann::ordered_json factors = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < proj.factors.size(); ++i) {
        const auto& f = proj.factors[i];
        store.insert(NamedTensor::from_matrix(fmt::format("basis.{}", i), f.basis));
        factors.push_back({{"mode", mode_name(f.mode)}, {"lambda", f.lambda}, {"source", f.source}});
    }
    store.metadata()["safer.mode"] = std::string(mode_name(proj.mode));
    store.metadata()["safer.lambda"] = fmt::format("{}", proj.lambda);
    store.metadata()["safer.sources"] = nlohmann::ordered_json(proj.sources).dump();
    store.metadata()["safer.factors"] = factors.dump();
    store.metadata()["safer.dim"] = std::to_string(proj.dim());
    return store;
}

Projector projector_from_store(const TensorStore& store) {
    Projector p;
    p.matrix = store.at("projection").to_matrix();
    try {
        p.mode = parse_mode(store.meta("safer.mode").value_or("composed"));
        p.lambda = std::stod(store.meta("safer.lambda").value_or("0"));
        p.sources = nlohmann::json::parse(store.meta("safer.sources").value_or("[]")).get<std::vector<std::string>>();
        const auto factors = nlohmann::json::parse(store.meta("safer.factors").value_or("[]"));
        for (std::size_t i = 0; i < factors.size(); ++i) {
            ProjectorFactor f;
            f.mode = parse_mode(factors[i].at("mode").get<std::string>());
            f.lambda = factors[i].at("lambda").get<double>();
            f.source = factors[i].at("source").get<std::string>();
            f.basis = store.at(fmt::format("basis.{}", i)).to_matrix();
            p.factors.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("bad projector metadata: {}", e.what()));
    } catch (const std::invalid_argument&) {
        throw FormatError("bad projector metadata");
    }
    validate_projector(p);
    return p;
}

}  // namespace safer
