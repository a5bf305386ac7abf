#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace dusa::config {

using Json = nlohmann::json;

/// Every recognised key with its default value.
Json defaults();

/// Defaults with the document's values laid over them. Keys missing from the
/// defaults are rejected.
Json merged(const Json& doc);
Json load(const std::filesystem::path& path);

/// Value at a dotted path such as "csm.k"; throws when absent.
const Json& at(const Json& cfg, const std::string& dotted);
bool has(const Json& cfg, const std::string& dotted);

/// Parses `text` with the type of the value already stored at `dotted`.
/// Arrays take comma-separated elements.
void set(Json& cfg, const std::string& dotted, const std::string& text);

/// Hex fingerprint of the canonical dump.
std::string hash(const Json& cfg);

}  // namespace dusa::config
