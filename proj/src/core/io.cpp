#include "playertrack/core/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "playertrack/core/error.hpp"

namespace playertrack::io {

namespace {

using nlohmann::json;

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view field, const fs::path& path, std::size_t line_no) {
    // from_chars rejects a leading '+' and surrounding blanks; trim the latter.
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
        field.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field '" +
                          std::string(field) + "'");
    }
    return v;
}

struct MotRow {
    int frame;
    int id;
    BoundingBox box;
    double conf;
};

// Calls `fn(row, data_line_index)` for each non-blank line.
template <typename Fn>
void read_mot_rows(const fs::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    std::size_t data_index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() < 7) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected at least 7 comma-separated fields, got " +
                              std::to_string(fields.size()));
        }
        std::array<double, 7> v{};
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = parse_double(fields[i], path, line_no);
        if (v[0] < 1.0 || v[0] != std::floor(v[0])) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": frame must be a positive integer (1-based)");
        }
        if (v[4] <= 0.0 || v[5] <= 0.0) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": width and height must be positive");
        }
        MotRow row{static_cast<int>(v[0]) - 1, static_cast<int>(v[1]), {v[2], v[3], v[4], v[5]}, v[6]};
        fn(row, data_index);
        ++data_index;
    }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

}  // namespace

std::vector<Detection> load_detections(const fs::path& path, double min_confidence) {
    std::vector<Detection> out;
    read_mot_rows(path, [&](const MotRow& row, std::size_t index) {
        if (row.conf < min_confidence) return;
        out.push_back({row.frame, row.box, row.conf, index});
    });
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
    return out;
}

void save_detections(const fs::path& path, std::span<const Detection> detections) {
    std::string text;
    for (const auto& d : detections) {
        text += std::to_string(d.frame + 1) + ",-1," + format_double(d.box.left) + "," +
                format_double(d.box.top) + "," + format_double(d.box.width) + "," +
                format_double(d.box.height) + "," + format_double(d.confidence) + ",-1,-1,-1\n";
    }
    write_text_atomic(path, text);
}

std::vector<GroundTruthBox> load_ground_truth(const fs::path& path) {
    std::vector<GroundTruthBox> out;
    read_mot_rows(path, [&](const MotRow& row, std::size_t) { out.push_back({row.frame, row.id, row.box}); });
    std::stable_sort(out.begin(), out.end(),
                     [](const GroundTruthBox& a, const GroundTruthBox& b) { return a.frame < b.frame; });
    return out;
}

void save_ground_truth(const fs::path& path, std::span<const GroundTruthBox> boxes) {
    std::string text;
    for (const auto& g : boxes) {
        text += std::to_string(g.frame + 1) + "," + std::to_string(g.identity) + "," +
                format_double(g.box.left) + "," + format_double(g.box.top) + "," +
                format_double(g.box.width) + "," + format_double(g.box.height) + ",1,-1,-1,-1\n";
    }
    write_text_atomic(path, text);
}

std::uint32_t crc32(std::span<const unsigned char> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

EmbeddingMatrix load_embeddings(const fs::path& path, std::optional<std::size_t> expected_dim) {
    const auto bytes = read_file(path);
    constexpr std::size_t header = 4 + 8 + 8;
    if (bytes.size() < header || std::memcmp(bytes.data(), "TLEB", 4) != 0) {
        throw FormatError(path.string() + ": not an embedding file (bad magic)");
    }
    const auto rows = get_le<std::uint64_t>(bytes.data() + 4);
    const auto dim = get_le<std::uint64_t>(bytes.data() + 12);
    if (expected_dim && dim != *expected_dim) {
        throw FormatError(path.string() + ": embedding dimension " + std::to_string(dim) +
                          " does not match configured d1 = " + std::to_string(*expected_dim));
    }
    if (dim != 0 && rows > (bytes.size() / 4) / dim) {
        throw FormatError(path.string() + ": truncated payload (header declares " + std::to_string(rows) +
                          " rows)");
    }
    const std::size_t payload = rows * dim * 4;
    if (bytes.size() < header + payload + 4) {
        throw FormatError(path.string() + ": truncated payload (header declares " + std::to_string(rows) +
                          "x" + std::to_string(dim) + ")");
    }
    if (bytes.size() != header + payload + 4) {
        throw FormatError(path.string() + ": trailing bytes after checksum");
    }
    const std::uint32_t stored = get_le<std::uint32_t>(bytes.data() + header + payload);
    const std::uint32_t actual = crc32({bytes.data() + header, payload});
    if (stored != actual) {
        throw FormatError(path.string() + ": payload checksum mismatch");
    }
    std::vector<float> data(rows * dim);
    std::memcpy(data.data(), bytes.data() + header, payload);
    for (float v : data) {
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite embedding value");
    }
    return EmbeddingMatrix(rows, dim, std::move(data));
}

void save_embeddings(const fs::path& path, const EmbeddingMatrix& matrix) {
    std::vector<unsigned char> out;
    const std::size_t payload = matrix.data().size() * 4;
    out.reserve(4 + 16 + payload + 4);
    out.insert(out.end(), {'T', 'L', 'E', 'B'});
    put_le<std::uint64_t>(out, matrix.rows());
    put_le<std::uint64_t>(out, matrix.dim());
    const auto* p = reinterpret_cast<const unsigned char*>(matrix.data().data());
    out.insert(out.end(), p, p + payload);
    put_le<std::uint32_t>(out, crc32({p, payload}));
    write_file_atomic(path, out);
}

json to_json(const ProjectConfig& c) {
    return json{{"v", kSchemaVersion},
                {"n_players", c.n_players},
                {"fps", c.fps},
                {"l_min", c.l_min},
                {"mu", c.mu},
                {"iou_min", c.iou_min},
                {"min_confidence", c.min_confidence},
                {"d_t", c.d_t},
                {"d1", c.d1},
                {"d2", c.d2},
                {"n_queries", c.n_queries},
                {"n_selected_queries", c.n_selected_queries},
                {"encoder_layers", c.encoder_layers},
                {"decoder_layers", c.decoder_layers},
                {"heads", c.heads},
                {"alpha", c.alpha},
                {"epochs", c.training.epochs},
                {"learning_rate", c.training.learning_rate},
                {"weight_decay", c.training.weight_decay},
                {"batch_size", c.training.batch_size},
                {"eta_app", c.eta_app},
                {"eta_loc", c.eta_loc},
                {"tau", c.tau},
                {"theta_0", c.theta_0},
                {"rnmf_iterations", c.rnmf_iterations},
                {"seed", c.seed}};
}

ProjectConfig config_from_json(const json& j) {
    if (j.value("v", kSchemaVersion) != kSchemaVersion) {
        throw FormatError("unsupported config schema version");
    }
    ProjectConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_players", c.n_players);
    get("fps", c.fps);
    get("l_min", c.l_min);
    get("mu", c.mu);
    get("iou_min", c.iou_min);
    get("min_confidence", c.min_confidence);
    get("d_t", c.d_t);
    get("d1", c.d1);
    get("d2", c.d2);
    get("n_queries", c.n_queries);
    get("n_selected_queries", c.n_selected_queries);
    get("encoder_layers", c.encoder_layers);
    get("decoder_layers", c.decoder_layers);
    get("heads", c.heads);
    get("alpha", c.alpha);
    get("epochs", c.training.epochs);
    get("learning_rate", c.training.learning_rate);
    get("weight_decay", c.training.weight_decay);
    get("batch_size", c.training.batch_size);
    get("eta_app", c.eta_app);
    get("eta_loc", c.eta_loc);
    get("tau", c.tau);
    get("theta_0", c.theta_0);
    get("rnmf_iterations", c.rnmf_iterations);
    get("seed", c.seed);
    c.validate();
    return c;
}

ProjectConfig load_config(const fs::path& path) { return config_from_json(read_json(path)); }

void save_config(const fs::path& path, const ProjectConfig& config) { write_json(path, to_json(config)); }

json tracklets_to_json(std::span<const Tracklet> tracklets) {
    json arr = json::array();
    for (const auto& t : tracklets) {
        json dets = json::array();
        for (const auto& d : t.detections) {
            dets.push_back({d.frame, d.box.left, d.box.top, d.box.width, d.box.height, d.confidence,
                            d.embedding_row});
        }
        arr.push_back({{"id", t.id}, {"detections", std::move(dets)}});
    }
    return json{{"v", kSchemaVersion},
                {"fields", {"frame", "left", "top", "width", "height", "conf", "row"}},
                {"tracklets", std::move(arr)}};
}

std::vector<Tracklet> tracklets_from_json(const json& j) {
    if (j.at("v").get<int>() != kSchemaVersion) throw FormatError("unsupported tracklets schema version");
    std::vector<Tracklet> out;
    for (const auto& jt : j.at("tracklets")) {
        Tracklet t;
        t.id = jt.at("id").get<TrackletId>();
        for (const auto& jd : jt.at("detections")) {
            Detection d;
            d.frame = jd.at(0).get<int>();
            d.box = {jd.at(1).get<double>(), jd.at(2).get<double>(), jd.at(3).get<double>(),
                     jd.at(4).get<double>()};
            d.confidence = jd.at(5).get<double>();
            d.embedding_row = jd.at(6).get<std::size_t>();
            t.detections.push_back(d);
        }
        if (t.detections.empty()) throw FormatError("tracklet " + std::to_string(t.id) + " is empty");
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Tracklet> load_tracklets(const fs::path& path) { return tracklets_from_json(read_json(path)); }

void save_tracklets(const fs::path& path, std::span<const Tracklet> tracklets) {
    write_json(path, tracklets_to_json(tracklets));
}

std::vector<Annotation> load_annotations(const fs::path& path) {
    const json j = read_json(path);
    if (j.at("v").get<int>() != kSchemaVersion) throw FormatError("unsupported annotations schema version");
    std::vector<Annotation> out;
    for (const auto& ja : j.at("annotations")) {
        out.push_back({ja.at("tracklet_id").get<TrackletId>(), ja.at("identity").get<Identity>(),
                       ja.at("round").get<int>()});
    }
    return out;
}

void save_annotations(const fs::path& path, std::span<const Annotation> log) {
    json arr = json::array();
    for (const auto& a : log) {
        arr.push_back({{"tracklet_id", a.tracklet_id}, {"identity", a.identity}, {"round", a.round}});
    }
    write_json(path, json{{"v", kSchemaVersion}, {"annotations", std::move(arr)}});
}

std::vector<Annotation> latest_annotations(std::span<const Annotation> log) {
    std::map<TrackletId, Annotation> latest;
    for (const auto& a : log) latest[a.tracklet_id] = a;
    std::vector<Annotation> out;
    out.reserve(latest.size());
    for (const auto& [id, a] : latest) out.push_back(a);
    return out;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(1) + "\n"); }

void write_file_atomic(const fs::path& path, std::span<const unsigned char> bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace playertrack::io
