#pragma once

#include "wearad/error.hpp"
#include "wearad/pipeline.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wearad {

enum class Stage { kSimulate, kLabel, kFeatures, kTrain, kDetect, kEvaluate, kExplain, kReport };

inline constexpr std::array<Stage, 8> kStages{Stage::kSimulate, Stage::kLabel,    Stage::kFeatures,
                                              Stage::kTrain,    Stage::kDetect,   Stage::kEvaluate,
                                              Stage::kExplain,  Stage::kReport};

std::string_view to_string(Stage stage);
std::optional<Stage> stage_from_string(std::string_view text);

/// Files a stage writes into the workdir (report/ entries are relative).
std::vector<std::string> stage_outputs(Stage stage);

/// A required input file is absent; names the stage that produces it.
class MissingInputError : public Error {
public:
    MissingInputError(const std::string &file, Stage producer);

    [[nodiscard]] Stage producer() const noexcept { return producer_; }

private:
    Stage producer_;
};

struct StageResult {
    std::vector<std::string> written;
    std::vector<std::string> warnings;
    std::string summary; // one line for the terminal
};

/// Runs one stage. Reads only earlier stages' files from `workdir` (the
/// cohort may come from config.cohort instead), writes each output through a
/// temporary file and a rename, and stamps every output with the config
/// hash and seed. Re-running with unchanged inputs rewrites identical bytes.
StageResult run_stage(Stage stage, const std::filesystem::path &workdir, const PipelineConfig &config);

} // namespace wearad
