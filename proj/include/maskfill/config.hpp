// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "maskfill/metrics.hpp"
#include "maskfill/zeroshot.hpp"

namespace maskfill {

/// Flat key/value view of a run configuration. Text form is one
/// "key = value" per line; '#' starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string &text);
std::string format_config_text(const ConfigMap &map);

/// Reads a text config, or the "config" object of a JSON run manifest.
ConfigMap read_config_file(const std::filesystem::path &path);

/// Names accepted by preset_config().
std::vector<std::string> preset_names();

/// synthetic-default, synthetic-faster, real-default, real-sidd.
DenoiseConfig preset_config(const std::string &name);

/// Starts from the map's "preset" (synthetic-default when absent) and applies
/// every other key on top. Unknown keys are a ConfigError.
DenoiseConfig denoise_config_from_map(const ConfigMap &map);

/// Every key of the config, suitable for denoise_config_from_map.
ConfigMap denoise_config_to_map(const DenoiseConfig &config);

/// 64-bit FNV-1a over the file bytes, as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::filesystem::path &path);

/// One JSON object per line: {"t":..,"loss":..,"lr":..[,"psnr":..]}.
std::string trace_jsonl(const std::vector<TraceRow> &trace);

struct EvalResult {
  QualityReport report;
  std::vector<std::string> unmatched; ///< filenames present in only one directory
};

/// Pairs images by filename (ignoring extension) and scores each pair.
/// Rows are ordered by filename. When test_dir holds a noise.csv written by
/// add-noise, its kind/param columns are copied into the rows.
EvalResult run_eval(const std::filesystem::path &clean_dir, const std::filesystem::path &test_dir,
                    bool quantize = false);

} // namespace maskfill
