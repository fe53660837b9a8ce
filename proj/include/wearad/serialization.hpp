#pragma once

#include "wearad/features.hpp"
#include "wearad/labeling.hpp"
#include "wearad/lstm_ae.hpp"

#include <string_view>

#include <nlohmann/json.hpp>

namespace wearad {

/// Version tag written into, and required from, every model checkpoint.
inline constexpr std::string_view kCheckpointVersion = "wearad-lstm-ae/1";

// Config readers start from the defaults, overwrite the keys present and
// reject unknown keys, so partial config files are valid.
void to_json(nlohmann::json &j, const LabelingConfig &c);
void from_json(const nlohmann::json &j, LabelingConfig &c);
void to_json(nlohmann::json &j, const FeatureConfig &c);
void from_json(const nlohmann::json &j, FeatureConfig &c);
void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);
void to_json(nlohmann::json &j, const NormalizationConstants &n);
void from_json(const nlohmann::json &j, NormalizationConstants &n);
void to_json(nlohmann::json &j, const TrainReport &r);
void from_json(const nlohmann::json &j, TrainReport &r);

/// Checkpoint document: version, config, activation, normalization
/// constants, threshold and every parameter tensor as a row-major array.
/// Doubles are written as shortest round-trip decimals, so save/load is
/// bitwise exact.
nlohmann::json model_to_json(const LstmAutoencoder &model);
LstmAutoencoder model_from_json(const nlohmann::json &j);

/// Throws Error naming `what` when `j` has a key outside `allowed`.
void reject_unknown_keys(const nlohmann::json &j, std::initializer_list<std::string_view> allowed,
                         std::string_view what);

} // namespace wearad
