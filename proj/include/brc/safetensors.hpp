#pragma once

#include "brc/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace brc {

/// Single-file safetensors archive: 8-byte little-endian header length,
/// JSON header mapping tensor name -> {dtype, shape, data_offsets}, then a
/// packed data section. Only F32 tensors are materialized.
class SafetensorsFile {
public:
    struct TensorInfo {
        std::string dtype;
        std::vector<int64_t> shape;
        uint64_t begin = 0;  // offsets into the data section
        uint64_t end = 0;
    };

    static SafetensorsFile open(const std::string& path);

    bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
    const TensorInfo& info(const std::string& name) const;
    const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }

    /// Tensor data as a row-major matrix of the given dimensions. Throws
    /// DataError naming the tensor on any dtype/shape mismatch.
    MatrixF matrix(const std::string& name, int64_t rows, int64_t cols) const;
    VectorF vector(const std::string& name, int64_t size) const;

    uint64_t fingerprint() const { return fingerprint_; }

private:
    const float* f32_data(const std::string& name, int64_t expected_elems) const;

    std::string path_;
    std::map<std::string, TensorInfo> tensors_;
    std::vector<uint8_t> data_;
    uint64_t fingerprint_ = 0;
};

}  // namespace brc
