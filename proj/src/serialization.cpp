#include "wearad/serialization.hpp"

#include "wearad/error.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace wearad {

namespace {

template <typename T> void read_if_present(const nlohmann::json &j, const char *key, T &out) {
    if (const auto it = j.find(key); it != j.end()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception &e) {
            throw Error(fmt::format("field '{}': {}", key, e.what()));
        }
    }
}

void require_object(const nlohmann::json &j, std::string_view what) {
    if (!j.is_object()) {
        throw Error(fmt::format("{} must be a JSON object", what));
    }
}

} // namespace

void reject_unknown_keys(const nlohmann::json &j, std::initializer_list<std::string_view> allowed,
                         std::string_view what) {
    require_object(j, what);
    for (const auto &item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw Error(fmt::format("unknown {} key '{}'", what, item.key()));
        }
    }
}

void to_json(nlohmann::json &j, const LabelingConfig &c) {
    j = nlohmann::json{{"normal_score_limit", c.normal_score_limit},
                       {"min_normal_span_days", c.min_normal_span_days},
                       {"min_normal_assessments", c.min_normal_assessments},
                       {"max_assessment_gap_days", c.max_assessment_gap_days},
                       {"covid_days_before", c.covid_days_before},
                       {"covid_days_after", c.covid_days_after},
                       {"episode_delta", c.episode_delta},
                       {"large_delta", c.large_delta},
                       {"anomalous_days_before", c.anomalous_days_before},
                       {"anomalous_days_after", c.anomalous_days_after}};
}

void from_json(const nlohmann::json &j, LabelingConfig &c) {
    reject_unknown_keys(j,
                        {"normal_score_limit", "min_normal_span_days", "min_normal_assessments",
                         "max_assessment_gap_days", "covid_days_before", "covid_days_after",
                         "episode_delta", "large_delta", "anomalous_days_before",
                         "anomalous_days_after"},
                        "labeling");
    read_if_present(j, "normal_score_limit", c.normal_score_limit);
    read_if_present(j, "min_normal_span_days", c.min_normal_span_days);
    read_if_present(j, "min_normal_assessments", c.min_normal_assessments);
    read_if_present(j, "max_assessment_gap_days", c.max_assessment_gap_days);
    read_if_present(j, "covid_days_before", c.covid_days_before);
    read_if_present(j, "covid_days_after", c.covid_days_after);
    read_if_present(j, "episode_delta", c.episode_delta);
    read_if_present(j, "large_delta", c.large_delta);
    read_if_present(j, "anomalous_days_before", c.anomalous_days_before);
    read_if_present(j, "anomalous_days_after", c.anomalous_days_after);
}

void to_json(nlohmann::json &j, const FeatureConfig &c) {
    j = nlohmann::json{{"max_missing_fraction", c.max_missing_fraction},
                       {"resting_run_minutes", c.resting_run_minutes},
                       {"max_window_missing_fraction", c.max_window_missing_fraction}};
}

void from_json(const nlohmann::json &j, FeatureConfig &c) {
    reject_unknown_keys(j, {"max_missing_fraction", "resting_run_minutes", "max_window_missing_fraction"},
                        "features");
    read_if_present(j, "max_missing_fraction", c.max_missing_fraction);
    read_if_present(j, "resting_run_minutes", c.resting_run_minutes);
    read_if_present(j, "max_window_missing_fraction", c.max_window_missing_fraction);
}

void to_json(nlohmann::json &j, const TrainConfig &c) {
    j = nlohmann::json{{"hidden_size", c.hidden_size},
                       {"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},
                       {"patience", c.patience},
                       {"validation_fraction", c.validation_fraction},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"epsilon", c.epsilon},
                       {"clip_norm", c.clip_norm},
                       {"activation", to_string(c.activation)},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json &j, TrainConfig &c) {
    reject_unknown_keys(j,
                        {"hidden_size", "learning_rate", "batch_size", "max_epochs", "patience",
                         "validation_fraction", "beta1", "beta2", "epsilon", "clip_norm",
                         "activation", "seed"},
                        "train");
    read_if_present(j, "hidden_size", c.hidden_size);
    read_if_present(j, "learning_rate", c.learning_rate);
    read_if_present(j, "batch_size", c.batch_size);
    read_if_present(j, "max_epochs", c.max_epochs);
    read_if_present(j, "patience", c.patience);
    read_if_present(j, "validation_fraction", c.validation_fraction);
    read_if_present(j, "beta1", c.beta1);
    read_if_present(j, "beta2", c.beta2);
    read_if_present(j, "epsilon", c.epsilon);
    read_if_present(j, "clip_norm", c.clip_norm);
    std::string activation(to_string(c.activation));
    read_if_present(j, "activation", activation);
    c.activation = activation_from_string(activation);
    read_if_present(j, "seed", c.seed);
}

void to_json(nlohmann::json &j, const NormalizationConstants &n) {
    j = nlohmann::json::object();
    for (auto f : kAllFeatures) {
        j[std::string(to_string(f))] = {{"mean", n[f].mean}, {"std", n[f].std}};
    }
}

void from_json(const nlohmann::json &j, NormalizationConstants &n) {
    reject_unknown_keys(j, {"sleep", "steps", "resting_hr"}, "normalization");
    for (auto f : kAllFeatures) {
        const auto &m = j.at(std::string(to_string(f)));
        n[f].mean = m.at("mean").get<double>();
        n[f].std = m.at("std").get<double>();
    }
}

void to_json(nlohmann::json &j, const TrainReport &r) {
    j = nlohmann::json{{"epochs_run", r.epochs_run},
                       {"best_epoch", r.best_epoch},
                       {"best_validation_loss", r.best_validation_loss},
                       {"train_loss", r.train_loss},
                       {"validation_loss", r.validation_loss},
                       {"validation_errors", r.validation_errors},
                       {"validation_indices", r.validation_indices},
                       {"train_windows", r.train_windows},
                       {"validation_windows", r.validation_windows}};
}

void from_json(const nlohmann::json &j, TrainReport &r) {
    r.epochs_run = j.at("epochs_run").get<int>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_validation_loss = j.at("best_validation_loss").get<double>();
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.validation_loss = j.at("validation_loss").get<std::vector<double>>();
    r.validation_errors = j.at("validation_errors").get<std::vector<double>>();
    r.validation_indices = j.at("validation_indices").get<std::vector<std::size_t>>();
    r.train_windows = j.at("train_windows").get<std::size_t>();
    r.validation_windows = j.at("validation_windows").get<std::size_t>();
}

nlohmann::json model_to_json(const LstmAutoencoder &model) {
    nlohmann::json tensors = nlohmann::json::object();
    const auto flat = model.params.flat();
    for (const auto &t : model.params.tensors()) {
        const auto n = static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols);
        tensors[std::string(t.name)] = {
            {"shape", {t.rows, t.cols}},
            {"data", std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(t.offset),
                                         flat.begin() + static_cast<std::ptrdiff_t>(t.offset + n))}};
    }
    nlohmann::json normalization = nlohmann::json::object();
    for (const auto &[pid, constants] : model.normalization) {
        normalization[pid] = constants;
    }
    return {{"version", kCheckpointVersion},
            {"config", model.config},
            {"activation", to_string(model.config.activation)},
            {"hidden_size", model.hidden_size()},
            {"normalization", std::move(normalization)},
            {"threshold", model.threshold ? nlohmann::json(*model.threshold) : nlohmann::json()},
            {"threshold_percentile", model.threshold_percentile
                                         ? nlohmann::json(*model.threshold_percentile)
                                         : nlohmann::json()},
            {"tensors", std::move(tensors)}};
}

LstmAutoencoder model_from_json(const nlohmann::json &j) {
    require_object(j, "checkpoint");
    const auto version = j.value("version", std::string());
    if (version != kCheckpointVersion) {
        throw Error(fmt::format("checkpoint version '{}' is not '{}'", version, kCheckpointVersion));
    }
    try {
        LstmAutoencoder model;
        model.config = j.at("config").get<TrainConfig>();
        if (activation_from_string(j.at("activation").get<std::string>()) != model.config.activation) {
            throw Error("checkpoint activation disagrees with its config");
        }
        const int hidden = j.at("hidden_size").get<int>();
        if (hidden != model.config.hidden_size) {
            throw Error("checkpoint hidden_size disagrees with its config");
        }
        model.params = Parameters(hidden);
        auto flat = model.params.flat();
        const auto &tensors = j.at("tensors");
        if (tensors.size() != model.params.tensors().size()) {
            throw Error("checkpoint tensor count mismatch");
        }
        for (const auto &t : model.params.tensors()) {
            const auto &jt = tensors.at(std::string(t.name));
            const auto shape = jt.at("shape").get<std::vector<int>>();
            if (shape != std::vector<int>{t.rows, t.cols}) {
                throw Error(fmt::format("tensor '{}' has the wrong shape", t.name));
            }
            const auto data = jt.at("data").get<std::vector<double>>();
            if (data.size() != static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols)) {
                throw Error(fmt::format("tensor '{}' has the wrong element count", t.name));
            }
            std::copy(data.begin(), data.end(), flat.begin() + static_cast<std::ptrdiff_t>(t.offset));
        }
        for (const auto &item : j.at("normalization").items()) {
            model.normalization[item.key()] = item.value().get<NormalizationConstants>();
        }
        if (!j.at("threshold").is_null()) {
            model.threshold = j.at("threshold").get<double>();
        }
        if (!j.at("threshold_percentile").is_null()) {
            model.threshold_percentile = j.at("threshold_percentile").get<double>();
        }
        return model;
    } catch (const nlohmann::json::exception &e) {
        throw Error(fmt::format("malformed checkpoint: {}", e.what()));
    }
}

} // namespace wearad
