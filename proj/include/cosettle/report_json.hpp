#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cosettle/gradcheck.hpp"
#include "cosettle/metrics.hpp"
#include "cosettle/pea.hpp"
#include "cosettle/theory.hpp"
#include "cosettle/trainer.hpp"

namespace cosettle {

using Json = nlohmann::ordered_json;

Json to_json(const TradeoffMetrics& m);
Json to_json(const StepRecord& r);
Json to_json(const EpochRecord& r);
Json to_json(const SpectralReport& r);
Json to_json(const ShortcutProbeReport& r);
Json to_json(const GradcheckReport& r);

/// One JSON object per line: every StepRecord, then every EpochRecord (tagged by "kind").
std::string history_json_lines(const TrainHistory& history);

/// Writes `text` to `path`, replacing any existing file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cosettle
