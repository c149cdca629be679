#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>
#include <Eigen/QR>

#include "oracles.hpp"
#include "safer/random.hpp"
#include "safer/tensor_store.hpp"

namespace testing {

inline Eigen::MatrixXd gaussian(safer::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

inline Eigen::MatrixXd random_orthonormal(safer::Rng& rng, Eigen::Index d, Eigen::Index k) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, d, k));
    return qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
}

inline oracle::Matrix to_rows(const Eigen::MatrixXd& m) {
    oracle::Matrix out(static_cast<std::size_t>(m.rows()), oracle::Vector(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return out;
}

inline oracle::Vector to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

inline double abs_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

// Mixed dtypes and ranks 0-3, including zero extents. Float payloads are
// finite; integer payloads are random bytes.
inline safer::TensorStore random_store(safer::Rng& rng) {
    using safer::DType;
    constexpr DType kinds[] = {DType::F16, DType::BF16, DType::F32, DType::F64, DType::I64, DType::U8};
    safer::TensorStore store;
    const int count = static_cast<int>(rng.uniform() * 6);
    for (int t = 0; t < count; ++t) {
        safer::NamedTensor tensor;
        tensor.name = "t" + std::to_string(t) + (rng.uniform() < 0.5 ? ".weight" : "");
        tensor.dtype = kinds[static_cast<int>(rng.uniform() * 6)];
        const int rank = static_cast<int>(rng.uniform() * 4);
        for (int r = 0; r < rank; ++r) tensor.shape.push_back(static_cast<std::int64_t>(rng.uniform() * 5));
        const auto numel = static_cast<std::size_t>(tensor.numel());
        if (safer::is_floating(tensor.dtype)) {
            std::vector<double> values(numel);
            for (auto& v : values) v = 10.0 * rng.normal();
            tensor = safer::NamedTensor::from_doubles(tensor.name, tensor.dtype, tensor.shape, values);
        } else {
            tensor.data.resize(numel * safer::dtype_size(tensor.dtype));
            for (auto& b : tensor.data) b = static_cast<std::byte>(rng.next_u64() & 0xFF);
        }
        store.insert(std::move(tensor));
    }
    if (rng.uniform() < 0.5) store.metadata()["safer.note"] = "random " + std::to_string(count);
    return store;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("safer_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

}  // namespace testing
