#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "brc/safetensors.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

using brc::SafetensorsFile;

namespace {

std::string make_archive(const std::string& header, const std::vector<float>& data) {
    std::string out;
    const uint64_t n = header.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
    out += header;
    const size_t bytes = data.size() * sizeof(float);
    const size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, data.data(), bytes);
    return out;
}

std::string write_temp(const std::string& name, const std::string& contents) {
    const std::string dir = "/tmp/brc_safetensors_test";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    return path;
}

const std::string kHeader =
    R"({"a":{"dtype":"F32","shape":[2,3],"data_offsets":[0,24]},)"
    R"("b":{"dtype":"F32","shape":[2],"data_offsets":[24,32]},)"
    R"("__metadata__":{"format":"pt"}})";

}  // namespace

TEST_CASE("parses tensors with shapes and values") {
    const std::vector<float> data = {1, 2, 3, 4, 5, 6, 7.5f, -8};
    const auto path = write_temp("ok.safetensors", make_archive(kHeader, data));
    const auto file = SafetensorsFile::open(path);

    CHECK(file.tensors().size() == 2);
    const auto a = file.matrix("a", 2, 3);
    CHECK(a(0, 0) == 1.0f);
    CHECK(a(1, 2) == 6.0f);
    const auto b = file.vector("b", 2);
    CHECK(b[0] == 7.5f);
    CHECK(b[1] == -8.0f);
}

TEST_CASE("reopening yields an identical fingerprint") {
    const std::vector<float> data = {1, 2, 3, 4, 5, 6, 7, 8};
    const auto path = write_temp("fp.safetensors", make_archive(kHeader, data));
    const auto f1 = SafetensorsFile::open(path);
    const auto f2 = SafetensorsFile::open(path);
    CHECK(f1.fingerprint() == f2.fingerprint());
    const auto other = write_temp("fp2.safetensors",
                                  make_archive(kHeader, {1, 2, 3, 4, 5, 6, 7, 9}));
    CHECK(SafetensorsFile::open(other).fingerprint() != f1.fingerprint());
}

TEST_CASE("truncated data section names the offending tensor") {
    const std::vector<float> data = {1, 2, 3, 4, 5, 6};  // 24 bytes, 'b' needs up to 32
    const auto path = write_temp("trunc.safetensors", make_archive(kHeader, data));
    CHECK_THROWS_WITH_AS(static_cast<void>(SafetensorsFile::open(path)),
                         doctest::Contains("'b'"), brc::DataError);
}

TEST_CASE("missing tensor and shape mismatches are reported by name") {
    const std::vector<float> data = {1, 2, 3, 4, 5, 6, 7, 8};
    const auto path = write_temp("shape.safetensors", make_archive(kHeader, data));
    const auto file = SafetensorsFile::open(path);
    CHECK_THROWS_WITH_AS(static_cast<void>(file.matrix("zzz", 1, 1)),
                         doctest::Contains("'zzz'"), brc::DataError);
    CHECK_THROWS_WITH_AS(static_cast<void>(file.matrix("a", 3, 2)), doctest::Contains("'a'"),
                         brc::DataError);
    CHECK_THROWS_AS(static_cast<void>(file.vector("a", 6)), brc::DataError);
}

TEST_CASE("rejects malformed headers") {
    CHECK_THROWS_AS(static_cast<void>(SafetensorsFile::open("/nonexistent.safetensors")),
                    brc::DataError);
    const auto bad_json = write_temp("badjson.safetensors", make_archive("not json {", {}));
    CHECK_THROWS_AS(static_cast<void>(SafetensorsFile::open(bad_json)), brc::DataError);
    const auto tiny = write_temp("tiny.safetensors", std::string("\x03\x00", 2));
    CHECK_THROWS_AS(static_cast<void>(SafetensorsFile::open(tiny)), brc::DataError);
    const auto bad_dtype = write_temp(
        "dtype.safetensors",
        make_archive(R"({"a":{"dtype":"F16","shape":[2],"data_offsets":[0,4]}})", {1.0f}));
    const auto file = SafetensorsFile::open(bad_dtype);
    CHECK_THROWS_WITH_AS(static_cast<void>(file.vector("a", 2)), doctest::Contains("F16"),
                         brc::DataError);
}
