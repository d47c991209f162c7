#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "climvol/config.hpp"

namespace climvol {

// Stages run in this order; a subcommand stops after its own stage.
enum class Stage { ingest, aggregate, returns, egarch, tests, sarimax, lstm, surfaces };

std::string to_string(Stage s);

struct PipelineResult {
    nlohmann::json report;
    std::vector<std::string> warnings;
};

using Logger = std::function<void(const std::string&)>;

// Runs every stage up to and including `until`, writing CSV/JSON outputs
// into cfg.out_dir. Errors propagate as DataError / NumericalError with the
// failing stage as a "[stage] " message prefix.
PipelineResult run_pipeline(const PipelineConfig& cfg, Stage until = Stage::surfaces, const Logger& log = {});

}  // namespace climvol
