#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spm/json_io.hpp"
#include "spm/trainer.hpp"

namespace spm {

struct PathsConfig {
  std::string out = "out";
  std::string checkpoint;   ///< input checkpoint directory (adapt, eval)
  std::string source_data;  ///< dataset directory; empty means generate from data.*
  std::string target_data;
  std::string eval_data;    ///< labelled evaluation set (eval, adapt's accuracy column)
};

/// Everything a CLI run depends on. The JSON form mirrors the struct layout:
/// top-level keys seed, seeds, arch, source, adapt (with nested spm and
/// warmup), data and paths.
struct RunConfig {
  ExperimentConfig experiment;
  PathsConfig paths;
  std::uint64_t seed = 0;
};

json to_json(const RunConfig& cfg);

/// Strict conversion: every key must exist in the default document and carry
/// a compatible type. Missing keys take their defaults. Domain entries may be
/// given as a preset name instead of an object.
RunConfig run_config_from_json(const json& doc);

/// Applies one "key=value" override to a full document. `key` is either a
/// dotted path ("adapt.spm.rho") or a bare leaf name ("rho"). A bare name that
/// occurs in several sections resolves to the one under `prefer` if present.
/// The value is parsed as JSON, falling back to a plain string.
void apply_override(json& doc, const std::string& assignment, const std::string& prefer = {});

/// Defaults, then the file at `path` (if non-empty), then the overrides in order.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& prefer = {});

/// Writes <dir>/config.resolved.json with every default materialised.
void write_resolved_config(const RunConfig& cfg, const std::string& dir);

}  // namespace spm
