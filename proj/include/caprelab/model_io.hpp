#pragma once

// JSON reader/writer for application models.

#include <filesystem>
#include <string>
#include <string_view>

#include "caprelab/ir_model.hpp"
#include "json.hpp"

namespace caprelab {

/// Reads, normalizes and resolves an application file.
/// Throws ParseError on malformed input and ResolveError on dangling names.
ApplicationModel parse_application(const std::filesystem::path& path);
ApplicationModel parse_application_text(std::string_view text);

/// Builds a model from an already-parsed document (same checks as above).
ApplicationModel application_from_json(const nlohmann::json& doc);
nlohmann::ordered_json application_to_json(const ApplicationModel& model);

/// Pretty-printed JSON, stable across runs.
std::string serialize_application(const ApplicationModel& model);

/// Parses JSON text, converting nlohmann byte offsets into line/column.
nlohmann::json parse_json_text(std::string_view text);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace caprelab
