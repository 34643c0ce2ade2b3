#include "brc/safetensors.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace brc {

SafetensorsFile SafetensorsFile::open(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    uint8_t len_bytes[8];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 8))
        throw DataError("checkpoint " + path + ": file shorter than header length field");
    uint64_t header_len = 0;
    for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | len_bytes[i];
    if (header_len == 0 || header_len > (100ull << 20))
        throw DataError("checkpoint " + path + ": implausible header length " +
                        std::to_string(header_len));

    std::string header(header_len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header_len)))
        throw DataError("checkpoint " + path + ": truncated JSON header");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + ": header is not valid JSON: " + e.what());
    }
    if (!meta.is_object()) throw DataError("checkpoint " + path + ": header is not an object");

    SafetensorsFile file;
    file.path_ = path;
    for (const auto& [name, entry] : meta.items()) {
        if (name == "__metadata__") continue;
        TensorInfo info;
        try {
            info.dtype = entry.at("dtype").get<std::string>();
            info.shape = entry.at("shape").get<std::vector<int64_t>>();
            const auto offs = entry.at("data_offsets").get<std::vector<uint64_t>>();
            if (offs.size() != 2 || offs[1] < offs[0])
                throw DataError("checkpoint " + path + ": tensor '" + name +
                                "' has malformed data_offsets");
            info.begin = offs[0];
            info.end = offs[1];
        } catch (const nlohmann::json::exception& e) {
            throw DataError("checkpoint " + path + ": tensor '" + name +
                            "' has malformed metadata: " + e.what());
        }
        file.tensors_.emplace(name, std::move(info));
    }

    file.data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    for (const auto& [name, info] : file.tensors_) {
        if (info.end > file.data_.size())
            throw DataError("checkpoint " + path + ": tensor '" + name +
                            "' data extends past end of file (truncated checkpoint?)");
    }

    Fnv1a hash;
    hash.update(header);
    hash.update(file.data_.data(), file.data_.size());
    file.fingerprint_ = hash.digest();
    return file;
}

const SafetensorsFile::TensorInfo& SafetensorsFile::info(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw DataError("checkpoint " + path_ + ": missing tensor '" + name + "'");
    return it->second;
}

const float* SafetensorsFile::f32_data(const std::string& name, int64_t expected_elems) const {
    const TensorInfo& t = info(name);
    if (t.dtype != "F32")
        throw DataError("checkpoint " + path_ + ": tensor '" + name + "' has dtype " + t.dtype +
                        ", expected F32");
    const uint64_t bytes = t.end - t.begin;
    if (bytes != static_cast<uint64_t>(expected_elems) * sizeof(float))
        throw DataError("checkpoint " + path_ + ": tensor '" + name + "' holds " +
                        std::to_string(bytes / sizeof(float)) + " elements, expected " +
                        std::to_string(expected_elems));
    return reinterpret_cast<const float*>(data_.data() + t.begin);
}

namespace {

std::string shape_string(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace

MatrixF SafetensorsFile::matrix(const std::string& name, int64_t rows, int64_t cols) const {
    const TensorInfo& t = info(name);
    if (t.shape != std::vector<int64_t>{rows, cols})
        throw DataError("checkpoint " + path_ + ": tensor '" + name + "' has shape " +
                        shape_string(t.shape) + ", expected [" + std::to_string(rows) + ", " +
                        std::to_string(cols) + "]");
    MatrixF m(rows, cols);
    std::memcpy(m.data(), f32_data(name, rows * cols), sizeof(float) * rows * cols);
    return m;
}

VectorF SafetensorsFile::vector(const std::string& name, int64_t size) const {
    const TensorInfo& t = info(name);
    if (t.shape != std::vector<int64_t>{size})
        throw DataError("checkpoint " + path_ + ": tensor '" + name + "' has shape " +
                        shape_string(t.shape) + ", expected [" + std::to_string(size) + "]");
    VectorF v(size);
    std::memcpy(v.data(), f32_data(name, size), sizeof(float) * size);
    return v;
}

}  // namespace brc
