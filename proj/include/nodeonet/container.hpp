#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nodeonet/dense_array.hpp"
#include "nodeonet/error.hpp"

namespace nodeonet {

/// Binary container holding named float64 arrays plus free-form JSON
/// metadata. Layout:
///   magic "NODEONET" | u32 version (LE) | u32 header_len (LE)
///   | UTF-8 JSON header | zero padding to 8 bytes | payload
/// The header lists {name, shape, byte_offset} per array; offsets are
/// absolute, 8-byte aligned, non-overlapping. Same content always encodes to
/// the same bytes.
struct Container {
    std::map<std::string, DenseArray> arrays;
    nlohmann::json meta = nlohmann::json::object();
};

namespace container_detail {

constexpr char kMagic[8] = {'N', 'O', 'D', 'E', 'O', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    return v;
}

}  // namespace container_detail

inline std::string encode_container(const Container& c) {
    using namespace container_detail;
    nlohmann::json header;
    header["meta"] = c.meta;
    header["arrays"] = nlohmann::json::array();

    // First pass with zero offsets to learn the header size, second pass with
    // real offsets. The decimal width of an offset can change the header
    // length, so iterate until the layout is stable.
    auto layout = [&](std::size_t header_len) {
        std::size_t pos = 8 + 4 + 4 + header_len;
        pos = (pos + 7) / 8 * 8;
        std::vector<std::size_t> offsets;
        for (const auto& [name, arr] : c.arrays) {
            offsets.push_back(pos);
            pos += arr.size() * sizeof(double);
        }
        return offsets;
    };
    auto render_header = [&](const std::vector<std::size_t>& offsets) {
        nlohmann::json h;
        h["meta"] = c.meta;
        h["arrays"] = nlohmann::json::array();
        std::size_t i = 0;
        for (const auto& [name, arr] : c.arrays) {
            nlohmann::json e;
            e["name"] = name;
            e["shape"] = arr.shape();
            e["byte_offset"] = offsets[i++];
            h["arrays"].push_back(e);
        }
        return h.dump();
    };

    std::string header_str = render_header(layout(0));
    for (int iter = 0; iter < 8; ++iter) {
        std::string next = render_header(layout(header_str.size()));
        if (next.size() == header_str.size()) {
            header_str = next;
            break;
        }
        header_str = next;
    }

    std::string out;
    out.append(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(header_str.size()));
    out += header_str;
    while (out.size() % 8 != 0) out.push_back('\0');
    for (const auto& [name, arr] : c.arrays) {
        const char* bytes = reinterpret_cast<const char*>(arr.data());
        out.append(bytes, arr.size() * sizeof(double));
    }
    return out;
}

inline Container decode_container(const std::string& buf) {
    using namespace container_detail;
    require(buf.size() >= 16, Error::Io, "container too short");
    require(std::memcmp(buf.data(), kMagic, 8) == 0, Error::Io, "bad container magic");
    const std::uint32_t version = get_u32(buf, 8);
    require(version == kVersion, Error::Io, "unsupported container version " + std::to_string(version));
    const std::uint32_t header_len = get_u32(buf, 12);
    require(16 + static_cast<std::size_t>(header_len) <= buf.size(), Error::Io,
            "header overruns the file");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Io, std::string("container header is not valid JSON: ") + e.what());
    }

    Container c;
    c.meta = header.value("meta", nlohmann::json::object());
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& e : header.at("arrays")) {
        const std::string name = e.at("name").get<std::string>();
        Shape shape = e.at("shape").get<Shape>();
        const std::size_t offset = e.at("byte_offset").get<std::size_t>();
        const std::size_t bytes = shape_size(shape) * sizeof(double);
        require(offset % 8 == 0, Error::Io, "array " + name + " is not 8-byte aligned");
        require(offset + bytes <= buf.size(), Error::Io, "array " + name + " overruns the file");
        for (auto [o, b] : spans)
            require(offset + bytes <= o || o + b <= offset, Error::Io,
                    "array " + name + " overlaps another array");
        spans.emplace_back(offset, bytes);
        std::vector<double> data(shape_size(shape));
        std::memcpy(data.data(), buf.data() + offset, bytes);
        c.arrays.emplace(name, DenseArray(std::move(shape), std::move(data)));
    }
    return c;
}

inline void write_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Io, "cannot open " + path + " for writing");
    const std::string bytes = encode_container(c);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Error::Io, "short write to " + path);
}

inline Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Io, "cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_container(buf);
}

}  // namespace nodeonet
