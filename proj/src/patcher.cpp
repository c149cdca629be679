#include "safer/patcher.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/core.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "safer/error.hpp"
#include "safer/random.hpp"

namespace safer {

namespace {

std::regex compile(const std::string& pattern) {
    try {
        return std::regex(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw ArgumentError(fmt::format("invalid selector pattern '{}': {}", pattern, e.what()));
    }
}

std::string sha256_hex(const void* data, std::size_t size) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

// Picks the input axis of a matched weight or explains why it cannot.
Orientation resolve(const NamedTensor& t, const LayerSelector& sel) {
    if (!is_floating(t.dtype)) {
        throw ArgumentError(fmt::format("matched tensor '{}' has non-float dtype {}", t.name, dtype_name(t.dtype)));
    }
    if (t.shape.size() != 2) {
        throw ArgumentError(fmt::format("matched tensor '{}' has rank {}, expected 2", t.name, t.shape.size()));
    }
    const auto d = sel.expected_dim;
    const bool rows = t.shape[0] == d;
    const bool cols = t.shape[1] == d;
    switch (sel.orientation) {
        case Orientation::InputRows:
            if (!rows) throw ArgumentError(fmt::format("'{}' [{}, {}]: axis 0 is not {}", t.name, t.shape[0], t.shape[1], d));
            return Orientation::InputRows;
        case Orientation::InputCols:
            if (!cols) throw ArgumentError(fmt::format("'{}' [{}, {}]: axis 1 is not {}", t.name, t.shape[0], t.shape[1], d));
            return Orientation::InputCols;
        case Orientation::Auto:
            if (rows && cols) {
                throw ArgumentError(fmt::format(
                    "'{}' is {}x{}; orientation is ambiguous, pass input-rows or input-cols", t.name, d, d));
            }
            if (cols) return Orientation::InputCols;
            if (rows) return Orientation::InputRows;
            throw ArgumentError(fmt::format("'{}' [{}, {}] has no axis of extent {}", t.name, t.shape[0], t.shape[1], d));
    }
    return Orientation::InputCols;
}

Eigen::MatrixXd merged(const Eigen::MatrixXd& w, const Eigen::MatrixXd& p, Orientation o) {
    // InputCols: (W P) e = W (P e).  InputRows: (P^T W)^T e = W^T (P e).
    return o == Orientation::InputCols ? Eigen::MatrixXd(w * p) : Eigen::MatrixXd(p.transpose() * w);
}

double max_abs(const Eigen::MatrixXd& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

Eigen::VectorXd layer_output(const Eigen::MatrixXd& w, const Eigen::VectorXd& e, Orientation o) {
    return o == Orientation::InputCols ? Eigen::VectorXd(w * e) : Eigen::VectorXd(w.transpose() * e);
}

}  // namespace

std::string_view orientation_name(Orientation o) {
    switch (o) {
        case Orientation::Auto: return "auto";
        case Orientation::InputRows: return "input-rows";
        case Orientation::InputCols: return "input-cols";
    }
    return "auto";
}

Orientation parse_orientation(std::string_view name) {
    if (name == "auto") return Orientation::Auto;
    if (name == "input-rows") return Orientation::InputRows;
    if (name == "input-cols") return Orientation::InputCols;
    throw ArgumentError(fmt::format("unknown orientation '{}'", name));
}

bool LayerSelector::matches(std::string_view name) const {
    const std::regex re = compile(pattern);
    return std::regex_search(name.begin(), name.end(), re);
}

std::string PatchReport::to_text() const {
    std::string out;
    for (const auto& r : records) {
        out += fmt::format(
            "{{\"name\":{},\"shape\":{},\"orientation\":\"{}\",\"max_delta\":{:.9e},\"frobenius_delta\":{:.9e},"
            "\"cast_delta\":{:.9e}}}\n",
            nlohmann::json(r.name).dump(), nlohmann::json(r.shape).dump(), orientation_name(r.orientation),
            r.max_delta, r.frobenius_delta, r.cast_delta);
    }
    out += fmt::format("{{\"count\":{},\"projector_fingerprint\":\"{}\"}}\n", records.size(), projector_fingerprint);
    return out;
}

std::string projector_fingerprint(const Projector& proj) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m = proj.matrix;
    return sha256_hex(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

PatchResult patch_checkpoint(const TensorStore& ckpt, const Projector& proj, const LayerSelector& sel) {
    if (proj.dim() != sel.expected_dim) {
        throw ArgumentError(fmt::format("projector dimension {} does not match selector dimension {}", proj.dim(),
                                        sel.expected_dim));
    }
    const std::regex re = compile(sel.pattern);

    PatchResult result{ckpt, {}};
    result.report.projector_fingerprint = projector_fingerprint(proj);
    for (const auto& t : ckpt.tensors()) {
        if (!std::regex_search(t.name, re)) continue;
        const Orientation o = resolve(t, sel);
        const Eigen::MatrixXd w = t.to_matrix();
        const Eigen::MatrixXd exact = merged(w, proj.matrix, o);
        NamedTensor patched = NamedTensor::from_matrix(t.name, exact, t.dtype);
        const Eigen::MatrixXd stored = patched.to_matrix();
        result.report.records.push_back({t.name, t.shape, o, max_abs(stored - w), (stored - w).norm(),
                                         max_abs(stored - exact)});
        result.checkpoint.replace(std::move(patched));
    }
    if (result.report.records.empty()) {
        throw ArgumentError(fmt::format("selector '{}' matched no tensors", sel.pattern));
    }
    std::sort(result.report.records.begin(), result.report.records.end(),
              [](const PatchRecord& a, const PatchRecord& b) { return a.name < b.name; });

    const std::string text = result.report.to_text();
    auto& meta = result.checkpoint.metadata();
    meta["safer.patch_report_hash"] = sha256_hex(text.data(), text.size());
    meta["safer.projector_fingerprint"] = result.report.projector_fingerprint;
    meta["safer.patch_selector"] = sel.pattern;
    return result;
}

double verify_tolerance(DType dtype) {
    switch (dtype) {
        case DType::F64: return 1e-9;
        case DType::F32: return 1e-4;
        case DType::F16: return 3e-2;
        case DType::BF16: return 1e-1;
        default: return 0.0;
    }
}

VerifyReport verify_patch(const TensorStore& original, const TensorStore& patched, const Projector& proj,
                          const LayerSelector& sel, int trials, std::uint64_t seed) {
    if (trials < 1) throw ArgumentError("trials must be positive");
    if (proj.dim() != sel.expected_dim) {
        throw ArgumentError(fmt::format("projector dimension {} does not match selector dimension {}", proj.dim(),
                                        sel.expected_dim));
    }
    const std::regex re = compile(sel.pattern);
    VerifyReport report;

    if (original.size() != patched.size()) {
        report.failures.push_back({"<store>", fmt::format("tensor count {} vs {}", original.size(), patched.size())});
    }
    std::uint64_t index = 0;
    for (const auto& a : original.tensors()) {
        ++report.checked_tensors;
        const auto* b = patched.find(a.name);
        if (b == nullptr) {
            report.failures.push_back({a.name, "missing from patched checkpoint"});
            continue;
        }
        if (a.shape != b->shape || a.dtype != b->dtype) {
            report.failures.push_back({a.name, "shape or dtype changed"});
            continue;
        }
        if (!std::regex_search(a.name, re)) {
            if (a.data != b->data) report.failures.push_back({a.name, "unmatched tensor bytes differ"});
            continue;
        }
        ++report.matched_tensors;
        const Orientation o = resolve(a, sel);
        const Eigen::MatrixXd w = a.to_matrix();
        const Eigen::MatrixXd w_patched = b->to_matrix();
        Rng rng(derive_seed(seed, index++));
        double worst = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            Eigen::VectorXd e(proj.dim());
            for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = rng.normal();
            const Eigen::VectorXd expected = layer_output(w, proj.matrix * e, o);
            const Eigen::VectorXd actual = layer_output(w_patched, e, o);
            const double scale = std::max(1.0, max_abs(expected));
            worst = std::max(worst, max_abs(actual - expected) / scale);
        }
        report.worst_error = std::max(report.worst_error, worst);
        if (!(worst <= verify_tolerance(a.dtype))) {
            report.failures.push_back(
                {a.name, fmt::format("max error {:.3e} exceeds {:.1e}", worst, verify_tolerance(a.dtype))});
        }
    }
    return report;
}

}  // namespace safer
