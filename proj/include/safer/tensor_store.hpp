#pragma once

// Named-tensor container in the safetensors layout: an 8-byte little-endian
// header length, a JSON header, then the tensor payloads back to back.
//
// Only F16/BF16/F32/F64 take part in arithmetic. Every other safetensors
// dtype is carried through as opaque bytes so whole checkpoints survive a
// load/save cycle untouched.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace safer {

enum class DType : std::uint8_t { Bool, U8, I8, U16, I16, F16, BF16, U32, I32, F32, U64, I64, F64 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType dtype);
bool is_floating(DType dtype);

struct NamedTensor {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::int64_t> shape;
    // Row-major, little-endian.
    std::vector<std::byte> data;

    std::int64_t numel() const;
    std::size_t expected_bytes() const;

    // Element values widened to double. Integer and bool dtypes convert too.
    std::vector<double> to_doubles() const;
    // Rank-2 tensor as a matrix; a rank-1 tensor becomes a single column.
    Eigen::MatrixXd to_matrix() const;
    Eigen::VectorXd to_vector() const;

    // Narrowing to `dtype` rounds to nearest; only floating dtypes are accepted.
    static NamedTensor from_doubles(std::string name, DType dtype, std::vector<std::int64_t> shape,
                                    std::span<const double> values);
    static NamedTensor from_matrix(std::string name, const Eigen::MatrixXd& m, DType dtype = DType::F64);
    static NamedTensor from_vector(std::string name, const Eigen::VectorXd& v, DType dtype = DType::F64);

    bool operator==(const NamedTensor&) const = default;
};

class TensorStore {
public:
    using Metadata = std::map<std::string, std::string>;

    // Appends; throws ArgumentError on an empty/duplicate name or a payload
    // whose length disagrees with shape and dtype.
    void insert(NamedTensor tensor);
    // Replaces an existing entry in place, keeping its position.
    void replace(NamedTensor tensor);

    bool contains(std::string_view name) const;
    const NamedTensor* find(std::string_view name) const;
    // Throws DataError naming the missing tensor.
    const NamedTensor& at(std::string_view name) const;

    std::span<const NamedTensor> tensors() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    Metadata& metadata() { return metadata_; }
    const Metadata& metadata() const { return metadata_; }
    std::optional<std::string> meta(const std::string& key) const;

    bool operator==(const TensorStore& other) const;

private:
    std::vector<NamedTensor> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    Metadata metadata_;
};

struct SaveOptions {
    bool allow_nonfinite = false;
};

std::vector<std::byte> serialize_store(const TensorStore& store, const SaveOptions& options = {});
TensorStore parse_store(std::span<const std::byte> bytes);

TensorStore load_store(const std::filesystem::path& path);
void save_store(const TensorStore& store, const std::filesystem::path& path, const SaveOptions& options = {});

}  // namespace safer
