#pragma once

#include <cstdint>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "safer/projector.hpp"
#include "safer/tensor_store.hpp"

namespace safer {

// Which axis of a stored 2-D weight consumes the text embedding.
//   InputCols: shape [out, d], layer output is W e (torch Linear layout)
//   InputRows: shape [d, out], layer output is W^T e
enum class Orientation { Auto, InputRows, InputCols };

std::string_view orientation_name(Orientation o);
Orientation parse_orientation(std::string_view name);

// Matches tensors ending in attn2.to_k.weight / attn2.to_v.weight, the
// cross-attention projections that read text embeddings.
inline constexpr std::string_view kCrossAttentionKV = R"(attn2\.to_[kv]\.weight$)";

struct LayerSelector {
    std::string pattern{kCrossAttentionKV};
    std::int64_t expected_dim = 768;
    Orientation orientation = Orientation::Auto;

    bool matches(std::string_view name) const;
};

struct PatchRecord {
    std::string name;
    std::vector<std::int64_t> shape;
    Orientation orientation;
    // Between original and patched stored values.
    double max_delta;
    double frobenius_delta;
    // Largest rounding change introduced by casting back to the stored dtype.
    double cast_delta;
};

struct PatchReport {
    std::vector<PatchRecord> records;
    std::string projector_fingerprint;

    std::size_t count() const { return records.size(); }
    // One JSON object per line, ordered by tensor name.
    std::string to_text() const;
};

struct PatchResult {
    TensorStore checkpoint;
    PatchReport report;
};

// SHA-256 of the projection matrix as row-major little-endian float64.
std::string projector_fingerprint(const Projector& proj);

// Rewrites every selected weight W so that the layer computes W (P e) for
// each incoming embedding e. Unselected tensors are copied untouched and the
// result keeps each tensor's dtype.
//
// Patching with A and then with B equals a single patch with compose([A, B]):
// the later patch acts on the embedding first.
PatchResult patch_checkpoint(const TensorStore& ckpt, const Projector& proj, const LayerSelector& sel);

struct VerifyFailure {
    std::string name;
    std::string reason;
};

struct VerifyReport {
    std::size_t checked_tensors = 0;
    std::size_t matched_tensors = 0;
    double worst_error = 0.0;
    std::vector<VerifyFailure> failures;

    bool ok() const { return failures.empty(); }
};

// Error allowed for W' e against W (P e), relative to max(1, |W (P e)|_inf).
double verify_tolerance(DType dtype);

// Samples `trials` Gaussian embeddings per matched tensor and checks the
// behavioural contract; every unmatched tensor must be byte-identical.
VerifyReport verify_patch(const TensorStore& original, const TensorStore& patched, const Projector& proj,
                          const LayerSelector& sel, int trials = 100, std::uint64_t seed = 0);

}  // namespace safer
