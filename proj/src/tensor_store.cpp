#include "safer/tensor_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "safer/error.hpp"

static_assert(std::endian::native == std::endian::little, "payloads are read and written in host order");

namespace safer {

namespace {

constexpr std::string_view kMetadataKey = "__metadata__";

struct DTypeInfo {
    DType dtype;
    std::string_view name;
    std::size_t size;
};

constexpr std::array<DTypeInfo, 13> kDTypes{{
    {DType::Bool, "BOOL", 1},
    {DType::U8, "U8", 1},
    {DType::I8, "I8", 1},
    {DType::U16, "U16", 2},
    {DType::I16, "I16", 2},
    {DType::F16, "F16", 2},
    {DType::BF16, "BF16", 2},
    {DType::U32, "U32", 4},
    {DType::I32, "I32", 4},
    {DType::F32, "F32", 4},
    {DType::U64, "U64", 8},
    {DType::I64, "I64", 8},
    {DType::F64, "F64", 8},
}};

const DTypeInfo& info(DType dtype) {
    return kDTypes[static_cast<std::size_t>(dtype)];
}

template <typename T>
T load_as(const std::byte* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

template <typename T>
void store_as(std::byte* p, T value) {
    std::memcpy(p, &value, sizeof(T));
}

double element_at(DType dtype, const std::byte* p) {
    switch (dtype) {
        case DType::Bool: return load_as<std::uint8_t>(p) != 0 ? 1.0 : 0.0;
        case DType::U8: return load_as<std::uint8_t>(p);
        case DType::I8: return load_as<std::int8_t>(p);
        case DType::U16: return load_as<std::uint16_t>(p);
        case DType::I16: return load_as<std::int16_t>(p);
        case DType::F16: return static_cast<float>(load_as<Eigen::half>(p));
        case DType::BF16: return static_cast<float>(load_as<Eigen::bfloat16>(p));
        case DType::U32: return load_as<std::uint32_t>(p);
        case DType::I32: return load_as<std::int32_t>(p);
        case DType::F32: return load_as<float>(p);
        case DType::U64: return static_cast<double>(load_as<std::uint64_t>(p));
        case DType::I64: return static_cast<double>(load_as<std::int64_t>(p));
        case DType::F64: return load_as<double>(p);
    }
    return 0.0;
}

void write_element(DType dtype, std::byte* p, double value) {
    switch (dtype) {
        case DType::F16: store_as(p, Eigen::half(static_cast<float>(value))); break;
        case DType::BF16: store_as(p, Eigen::bfloat16(static_cast<float>(value))); break;
        case DType::F32: store_as(p, static_cast<float>(value)); break;
        case DType::F64: store_as(p, value); break;
        default: throw ArgumentError(fmt::format("cannot encode values as {}", dtype_name(dtype)));
    }
}

bool all_finite(const NamedTensor& t) {
    if (!is_floating(t.dtype)) return true;
    const std::size_t step = dtype_size(t.dtype);
    for (std::size_t off = 0; off < t.data.size(); off += step) {
        if (!std::isfinite(element_at(t.dtype, t.data.data() + off))) return false;
    }
    return true;
}

std::size_t checked_bytes(const std::vector<std::int64_t>& shape, DType dtype) {
    std::size_t n = dtype_size(dtype);
    for (auto extent : shape) {
        if (extent < 0) throw ArgumentError("negative extent in tensor shape");
        n *= static_cast<std::size_t>(extent);
    }
    return n;
}

}  // namespace

std::string_view dtype_name(DType dtype) {
    return info(dtype).name;
}

DType parse_dtype(std::string_view name) {
    for (const auto& entry : kDTypes) {
        if (entry.name == name) return entry.dtype;
    }
    throw FormatError(fmt::format("unknown dtype '{}'", name));
}

std::size_t dtype_size(DType dtype) {
    return info(dtype).size;
}

bool is_floating(DType dtype) {
    return dtype == DType::F16 || dtype == DType::BF16 || dtype == DType::F32 || dtype == DType::F64;
}

std::int64_t NamedTensor::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>{});
}

std::size_t NamedTensor::expected_bytes() const {
    return checked_bytes(shape, dtype);
}

std::vector<double> NamedTensor::to_doubles() const {
    const std::size_t step = dtype_size(dtype);
    std::vector<double> out(data.size() / step);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = element_at(dtype, data.data() + i * step);
    return out;
}

Eigen::MatrixXd NamedTensor::to_matrix() const {
    if (shape.size() == 1) return to_vector();
    if (shape.size() != 2) {
        throw DataError(fmt::format("tensor '{}' has rank {}, expected a matrix", name, shape.size()));
    }
    const auto values = to_doubles();
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    return Eigen::Map<const RowMajor>(values.data(), shape[0], shape[1]);
}

Eigen::VectorXd NamedTensor::to_vector() const {
    const auto values = to_doubles();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

NamedTensor NamedTensor::from_doubles(std::string name, DType dtype, std::vector<std::int64_t> shape,
                                      std::span<const double> values) {
    NamedTensor t{std::move(name), dtype, std::move(shape), {}};
    t.data.resize(t.expected_bytes());
    if (values.size() != static_cast<std::size_t>(t.numel())) {
        throw ArgumentError(fmt::format("tensor '{}': {} values for {} elements", t.name, values.size(), t.numel()));
    }
    const std::size_t step = dtype_size(dtype);
    for (std::size_t i = 0; i < values.size(); ++i) write_element(dtype, t.data.data() + i * step, values[i]);
    return t;
}

NamedTensor NamedTensor::from_matrix(std::string name, const Eigen::MatrixXd& m, DType dtype) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = m;
    return from_doubles(std::move(name), dtype, {m.rows(), m.cols()},
                        std::span<const double>(row_major.data(), static_cast<std::size_t>(row_major.size())));
}

NamedTensor NamedTensor::from_vector(std::string name, const Eigen::VectorXd& v, DType dtype) {
    return from_doubles(std::move(name), dtype, {v.size()},
                        std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

void TensorStore::insert(NamedTensor tensor) {
    if (tensor.name.empty()) throw ArgumentError("tensor name must be non-empty");
    if (tensor.name == kMetadataKey) throw ArgumentError("'__metadata__' is reserved");
    if (index_.contains(tensor.name)) throw ArgumentError(fmt::format("duplicate tensor name '{}'", tensor.name));
    if (tensor.data.size() != tensor.expected_bytes()) {
        throw ArgumentError(fmt::format("tensor '{}': payload is {} bytes, shape and dtype need {}", tensor.name,
                                        tensor.data.size(), tensor.expected_bytes()));
    }
    index_.emplace(tensor.name, entries_.size());
    entries_.push_back(std::move(tensor));
}

void TensorStore::replace(NamedTensor tensor) {
    auto it = index_.find(tensor.name);
    if (it == index_.end()) throw ArgumentError(fmt::format("no tensor named '{}' to replace", tensor.name));
    if (tensor.data.size() != tensor.expected_bytes()) {
        throw ArgumentError(fmt::format("tensor '{}': payload size disagrees with shape", tensor.name));
    }
    entries_[it->second] = std::move(tensor);
}

bool TensorStore::contains(std::string_view name) const {
    return find(name) != nullptr;
}

const NamedTensor* TensorStore::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &entries_[it->second];
}

const NamedTensor& TensorStore::at(std::string_view name) const {
    if (const auto* t = find(name)) return *t;
    throw DataError(fmt::format("missing tensor '{}'", name));
}

std::optional<std::string> TensorStore::meta(const std::string& key) const {
    auto it = metadata_.find(key);
    if (it == metadata_.end()) return std::nullopt;
    return it->second;
}

bool TensorStore::operator==(const TensorStore& other) const {
    return entries_ == other.entries_ && metadata_ == other.metadata_;
}

std::vector<std::byte> serialize_store(const TensorStore& store, const SaveOptions& options) {
    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    if (!store.metadata().empty()) {
        auto& meta = header[std::string(kMetadataKey)] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : store.metadata()) meta[k] = v;
    }
    std::size_t offset = 0;
    for (const auto& t : store.tensors()) {
        if (!options.allow_nonfinite && !all_finite(t)) {
            throw ArgumentError(fmt::format("tensor '{}' holds NaN or Inf", t.name));
        }
        header[t.name] = {{"dtype", dtype_name(t.dtype)},
                          {"shape", t.shape},
                          {"data_offsets", {offset, offset + t.data.size()}}};
        offset += t.data.size();
    }

    std::string json = header.dump();
    // Pad so the payload starts 8-byte aligned, as the reference writer does.
    json.append((8 - json.size() % 8) % 8, ' ');

    std::vector<std::byte> out(8 + json.size() + offset);
    store_as<std::uint64_t>(out.data(), json.size());
    std::memcpy(out.data() + 8, json.data(), json.size());
    std::byte* payload = out.data() + 8 + json.size();
    for (const auto& t : store.tensors()) {
        if (!t.data.empty()) std::memcpy(payload, t.data.data(), t.data.size());
        payload += t.data.size();
    }
    return out;
}

TensorStore parse_store(std::span<const std::byte> bytes) {
    if (bytes.size() < 8) throw FormatError("file shorter than the 8-byte header length");
    const auto header_len = load_as<std::uint64_t>(bytes.data());
    if (header_len > bytes.size() - 8) {
        throw IntegrityError(fmt::format("header length {} exceeds file size {}", header_len, bytes.size()));
    }
    const auto* text = reinterpret_cast<const char*>(bytes.data() + 8);
    const std::string_view header_text(text, header_len);

    // nlohmann keeps the last of repeated keys, so duplicates are caught while parsing.
    std::vector<std::string> top_level_keys;
    nlohmann::ordered_json::parser_callback_t collect_keys =
        [&](int depth, nlohmann::ordered_json::parse_event_t event, nlohmann::ordered_json& parsed) {
            if (event == nlohmann::ordered_json::parse_event_t::key && depth == 1) {
                top_level_keys.push_back(parsed.get<std::string>());
            }
            return true;
        };
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(header_text.begin(), header_text.end(), collect_keys);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("malformed header: {}", e.what()));
    }
    if (!header.is_object()) throw FormatError("header is not a JSON object");
    {
        auto sorted = top_level_keys;
        std::sort(sorted.begin(), sorted.end());
        if (auto dup = std::adjacent_find(sorted.begin(), sorted.end()); dup != sorted.end()) {
            throw FormatError(fmt::format("duplicate tensor name '{}'", *dup));
        }
    }

    struct Slot {
        NamedTensor tensor;
        std::uint64_t begin;
        std::uint64_t end;
        std::size_t position;
    };
    std::vector<Slot> slots;
    TensorStore store;
    try {
        for (const auto& [key, value] : header.items()) {
            if (key == kMetadataKey) {
                if (!value.is_object()) throw FormatError("__metadata__ must be an object");
                for (const auto& [mk, mv] : value.items()) {
                    if (!mv.is_string()) throw FormatError(fmt::format("metadata value for '{}' is not a string", mk));
                    store.metadata()[mk] = mv.get<std::string>();
                }
                continue;
            }
            NamedTensor t;
            t.name = key;
            t.dtype = parse_dtype(value.at("dtype").get<std::string>());
            t.shape = value.at("shape").get<std::vector<std::int64_t>>();
            const auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offsets.size() != 2 || offsets[0] > offsets[1]) {
                throw FormatError(fmt::format("tensor '{}': bad data_offsets", key));
            }
            if (offsets[1] - offsets[0] != checked_bytes(t.shape, t.dtype)) {
                throw FormatError(fmt::format("tensor '{}': data_offsets span {} bytes, shape needs {}", key,
                                              offsets[1] - offsets[0], checked_bytes(t.shape, t.dtype)));
            }
            slots.push_back({std::move(t), offsets[0], offsets[1], slots.size()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("malformed tensor entry: {}", e.what()));
    } catch (const ArgumentError& e) {
        throw FormatError(e.what());
    }

    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
        return a.begin != b.begin ? a.begin < b.begin : a.position < b.position;
    });
    const std::size_t payload_size = bytes.size() - 8 - header_len;
    std::uint64_t expected = 0;
    for (const auto& s : slots) {
        if (s.end > payload_size) {
            throw IntegrityError(fmt::format("tensor '{}' extends past end of file (needs {} payload bytes, have {})",
                                             s.tensor.name, s.end, payload_size));
        }
        if (s.begin != expected) throw FormatError(fmt::format("tensor '{}': payload is not contiguous", s.tensor.name));
        expected = s.end;
    }
    if (expected != payload_size) {
        throw FormatError(fmt::format("{} trailing bytes after last tensor", payload_size - expected));
    }

    const std::byte* payload = bytes.data() + 8 + header_len;
    for (auto& s : slots) {
        s.tensor.data.assign(payload + s.begin, payload + s.end);
        store.insert(std::move(s.tensor));
    }
    return store;
}

TensorStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
        throw DataError(fmt::format("failed reading '{}'", path.string()));
    }
    try {
        return parse_store(bytes);
    } catch (const FormatError& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    } catch (const IntegrityError& e) {
        throw IntegrityError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void save_store(const TensorStore& store, const std::filesystem::path& path, const SaveOptions& options) {
    const auto bytes = serialize_store(store, options);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace safer
