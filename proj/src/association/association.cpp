#include "playertrack/association/association.hpp"

#include "playertrack/core/error.hpp"
#include "playertrack/core/io.hpp"

namespace playertrack {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::annotated: return "annotated";
        case Provenance::iterative: return "iterative";
        case Provenance::rnmf: return "rnmf";
        case Provenance::unassigned: return "unassigned-to-0";
    }
    return "unassigned-to-0";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "annotated") return Provenance::annotated;
    if (s == "iterative") return Provenance::iterative;
    if (s == "rnmf") return Provenance::rnmf;
    if (s == "unassigned-to-0") return Provenance::unassigned;
    throw FormatError("unknown provenance '" + s + "'");
}

const AssociationEntry* Association::find(TrackletId id) const {
    for (const auto& e : entries) {
        if (e.tracklet_id == id) return &e;
    }
    return nullptr;
}

nlohmann::json to_json(const Association& a) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : a.entries) {
        entries.push_back({{"tracklet_id", e.tracklet_id},
                           {"identity", e.identity},
                           {"provenance", to_string(e.provenance)},
                           {"score", e.score}});
    }
    return {{"v", io::kSchemaVersion},
            {"method", a.method},
            {"checkpoint", a.checkpoint},
            {"round", a.round},
            {"entries", std::move(entries)}};
}

Association association_from_json(const nlohmann::json& j) {
    if (j.at("v").get<int>() != io::kSchemaVersion) throw FormatError("unsupported association schema version");
    Association a;
    a.method = j.at("method").get<std::string>();
    a.checkpoint = j.value("checkpoint", std::string());
    a.round = j.value("round", 0);
    for (const auto& je : j.at("entries")) {
        a.entries.push_back({je.at("tracklet_id").get<TrackletId>(), je.at("identity").get<Identity>(),
                             provenance_from_string(je.at("provenance").get<std::string>()),
                             je.at("score").get<double>()});
    }
    return a;
}

void save_association(const std::filesystem::path& path, const Association& a) { io::write_json(path, to_json(a)); }

Association load_association(const std::filesystem::path& path) { return association_from_json(io::read_json(path)); }

}  // namespace playertrack
