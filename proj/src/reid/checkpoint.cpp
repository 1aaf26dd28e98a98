#include "playertrack/reid/checkpoint.hpp"

#include <cstring>
#include <map>

#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"

namespace playertrack::nn {

namespace {

constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void floats(float* dst, std::size_t count) {
        need(count * sizeof(float));
        std::memcpy(dst, bytes_.data() + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

void put_tensor(std::vector<unsigned char>& out, const std::string& name, const Mat<float>& m) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    const auto* p = reinterpret_cast<const unsigned char*>(m.data());
    out.insert(out.end(), p, p + m.size() * static_cast<Eigen::Index>(sizeof(float)));
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ProjectConfig& config, const ModelParams<float>& params) {
    std::vector<unsigned char> out{'T', 'L', 'C', 'K'};
    put<std::uint32_t>(out, kVersion);
    const std::string cfg = io::to_json(config).dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());

    std::uint32_t count = 2;
    params.visit([&](const std::string&, const Mat<float>&) { ++count; });
    put<std::uint32_t>(out, count);
    params.visit([&](const std::string& name, const Mat<float>& m) { put_tensor(out, name, m); });
    put_tensor(out, "feature_norm.running_mean", params.running_mean);
    put_tensor(out, "feature_norm.running_var", params.running_var);
    put<std::uint32_t>(out, io::crc32(out));
    return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "TLCK", 4) != 0) {
        throw FormatError("checkpoint: bad magic");
    }
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (io::crc32(bytes.first(bytes.size() - 4)) != stored_crc) throw FormatError("checkpoint: CRC mismatch");

    Reader r(bytes.first(bytes.size() - 4));
    r.get<std::uint32_t>();  // magic
    if (r.get<std::uint32_t>() != kVersion) throw FormatError("checkpoint: unsupported version");
    Checkpoint ck;
    ck.config = io::config_from_json(nlohmann::json::parse(r.string()));
    ck.params = allocate_params<float>(ModelShape::from(ck.config));

    std::map<std::string, Mat<float>*> slots;
    ck.params.visit([&](const std::string& name, Mat<float>& m) { slots[name] = &m; });
    Mat<float> running_mean;
    Mat<float> running_var;
    slots["feature_norm.running_mean"] = &running_mean;
    slots["feature_norm.running_var"] = &running_var;

    const auto count = r.get<std::uint32_t>();
    if (count != slots.size()) throw FormatError("checkpoint: tensor count does not match configuration");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.string();
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        auto it = slots.find(name);
        if (it == slots.end()) throw FormatError("checkpoint: unexpected tensor " + name);
        Mat<float>& dst = *it->second;
        if (dst.size() != 0 && (static_cast<std::uint64_t>(dst.rows()) != rows ||
                                static_cast<std::uint64_t>(dst.cols()) != cols)) {
            throw FormatError("checkpoint: tensor " + name + " has the wrong shape");
        }
        dst.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        r.floats(dst.data(), static_cast<std::size_t>(rows * cols));
    }
    if (running_mean.rows() != 1 || running_mean.cols() != ck.params.shape.d2 || running_var.rows() != 1 ||
        running_var.cols() != ck.params.shape.d2) {
        throw FormatError("checkpoint: missing or malformed running statistics");
    }
    ck.params.running_mean = running_mean;
    ck.params.running_var = running_var;
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ProjectConfig& config, const ModelParams<float>& params) {
    io::write_file_atomic(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

std::string content_hash(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace playertrack::nn
