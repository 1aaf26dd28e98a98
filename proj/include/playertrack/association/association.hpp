#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "playertrack/core/types.hpp"

namespace playertrack {

enum class Provenance { annotated, iterative, rnmf, unassigned };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct AssociationEntry {
    TrackletId tracklet_id = 0;
    Identity identity = 0;
    Provenance provenance = Provenance::unassigned;
    double score = 0.0;

    friend bool operator==(const AssociationEntry&, const AssociationEntry&) = default;
};

/// Tracklet -> identity mapping, one entry per tracklet in tracklet order.
struct Association {
    std::string method;      // "iterative" or "rnmf"
    std::string checkpoint;  // hash of the model that produced the scores
    int round = 0;
    std::vector<AssociationEntry> entries;

    const AssociationEntry* find(TrackletId id) const;
};

nlohmann::json to_json(const Association& a);
Association association_from_json(const nlohmann::json& j);
void save_association(const std::filesystem::path& path, const Association& a);
Association load_association(const std::filesystem::path& path);

}  // namespace playertrack
