#pragma once

// Persisted pipeline artifacts. Files are canonical JSON (sorted keys, fixed
// indentation, shortest round-trip doubles) so identical content always
// produces identical bytes and digests.

#include <array>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gptgeo/digest.hpp"
#include "gptgeo/error.hpp"

namespace gptgeo {

enum class ArtifactKind {
    ingested_corpus,
    linked_corpus,
    geocoded_corpus,
    labeled_corpus,
    activity_matrix,
    relatedness_matrix,
    metrics_report,
    feature_table,
    model_report,
};

inline constexpr std::array<ArtifactKind, 9> kAllArtifactKinds = {
    ArtifactKind::ingested_corpus,    ArtifactKind::linked_corpus,  ArtifactKind::geocoded_corpus,
    ArtifactKind::labeled_corpus,     ArtifactKind::activity_matrix, ArtifactKind::relatedness_matrix,
    ArtifactKind::metrics_report,     ArtifactKind::feature_table,  ArtifactKind::model_report,
};

inline std::string_view to_string(ArtifactKind k) {
    switch (k) {
    case ArtifactKind::ingested_corpus: return "ingested_corpus";
    case ArtifactKind::linked_corpus: return "linked_corpus";
    case ArtifactKind::geocoded_corpus: return "geocoded_corpus";
    case ArtifactKind::labeled_corpus: return "labeled_corpus";
    case ArtifactKind::activity_matrix: return "activity_matrix";
    case ArtifactKind::relatedness_matrix: return "relatedness_matrix";
    case ArtifactKind::metrics_report: return "metrics_report";
    case ArtifactKind::feature_table: return "feature_table";
    case ArtifactKind::model_report: return "model_report";
    }
    return "unknown";
}

inline ArtifactKind artifact_kind_from_string(std::string_view s) {
    for (auto k : kAllArtifactKinds)
        if (to_string(k) == s) return k;
    throw Error("unknown_artifact_kind", std::string(s));
}

/// Current on-disk schema version per kind. Bump when a payload layout changes.
inline int current_schema_version(ArtifactKind k) {
    switch (k) {
    case ArtifactKind::ingested_corpus: return 1;
    case ArtifactKind::linked_corpus: return 1;
    case ArtifactKind::geocoded_corpus: return 1;
    case ArtifactKind::labeled_corpus: return 1;
    case ArtifactKind::activity_matrix: return 1;
    case ArtifactKind::relatedness_matrix: return 1;
    case ArtifactKind::metrics_report: return 1;
    case ArtifactKind::feature_table: return 1;
    case ArtifactKind::model_report: return 1;
    }
    return 0;
}

struct Provenance {
    std::string config_hash;
    std::map<std::string, std::string> input_digests;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PipelineArtifact {
    ArtifactKind kind = ArtifactKind::ingested_corpus;
    int schema_version = 0;
    nlohmann::json payload;
    Provenance provenance;

    friend bool operator==(const PipelineArtifact&, const PipelineArtifact&) = default;
};

inline PipelineArtifact make_artifact(ArtifactKind kind, nlohmann::json payload, Provenance provenance) {
    return {kind, current_schema_version(kind), std::move(payload), std::move(provenance)};
}

inline std::string serialize_artifact(const PipelineArtifact& a) {
    nlohmann::json doc;
    doc["kind"] = std::string(to_string(a.kind));
    doc["schema_version"] = a.schema_version;
    doc["payload"] = a.payload;
    doc["provenance"] = {{"config_hash", a.provenance.config_hash}, {"input_digests", a.provenance.input_digests}};
    return doc.dump(1) + "\n";
}

inline PipelineArtifact parse_artifact(std::string_view bytes, const std::string& origin = "<memory>") {
    const auto doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("kind") || !doc.contains("schema_version"))
        throw Error("schema_mismatch", origin + " is not a pipeline artifact");
    PipelineArtifact a;
    a.kind = artifact_kind_from_string(doc.at("kind").get<std::string>());
    a.schema_version = doc.at("schema_version").get<int>();
    if (a.schema_version != current_schema_version(a.kind)) {
        throw Error("incompatible_schema", origin + ": " + std::string(to_string(a.kind)) + " schema_version " +
                                               std::to_string(a.schema_version) + ", expected " +
                                               std::to_string(current_schema_version(a.kind)));
    }
    a.payload = doc.value("payload", nlohmann::json());
    const auto& prov = doc.at("provenance");
    a.provenance.config_hash = prov.at("config_hash").get<std::string>();
    a.provenance.input_digests = prov.at("input_digests").get<std::map<std::string, std::string>>();
    return a;
}

/// Writes the artifact and returns the SHA-256 of the written bytes.
inline std::string persist_artifact(const PipelineArtifact& a, const std::string& path) {
    const auto bytes = serialize_artifact(a);
    write_file(path, bytes);
    return sha256_hex(bytes);
}

inline PipelineArtifact load_artifact(const std::string& path) { return parse_artifact(read_file(path), path); }

} // namespace gptgeo
