#pragma once

#include <string>

#include "canseg/pipeline.hpp"

namespace canseg {

/// Load a pipeline configuration from a JSON file. Unknown keys, wrong types
/// and out-of-range values are rejected with the offending key path; JSON
/// syntax errors carry the parser's position diagnostics.
PipelineConfig load_config(const std::string& path);

/// Parse from an in-memory JSON document (same validation).
PipelineConfig parse_config(const std::string& text, const std::string& origin = "<config>");

/// Serialized form of the defaults, used by `config --emit-default`.
std::string default_config_json();

}  // namespace canseg
