#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pseudoscene/common.hpp"
#include "pseudoscene/dataset_io.hpp"

namespace pseudoscene::dataset_io {

enum class ManifestMode { Detection, Segmentation };

struct ManifestConfig {
    std::string gold_dataset_path = "gold.json";
    std::string pseudo_dataset_path = "pseudo.json";
    int batch_size = 16;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double learning_rate = 2e-4;
    std::int64_t finetune_iterations = 90000;
    ManifestMode mode = ManifestMode::Detection;
    bool cls_only_finetune = false;
};

struct ManifestStage {
    std::string name;
    std::string dataset_path;
    std::vector<std::string> losses;
    std::optional<std::int64_t> iterations;
    std::optional<std::string> base_schedule;
    std::optional<std::int64_t> extra_iterations;
    int batch_size = 0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    double learning_rate = 0.0;
    std::string init_from;
    std::vector<std::string> frozen;
};

struct TrainingManifest {
    std::vector<ManifestStage> stages;
    std::string checkpoint_selection;
};

inline void require_valid(const ManifestConfig& config) {
    if (config.batch_size < 1) {
        throw ConfigError("batch size must be at least 1");
    }
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw ConfigError("momentum must lie in [0,1)");
    }
    if (!(config.weight_decay >= 0.0) || !std::isfinite(config.weight_decay)) {
        throw ConfigError("weight decay must be non-negative and finite");
    }
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        throw ConfigError("learning rate must be positive and finite");
    }
    if (config.finetune_iterations < 1) {
        throw ConfigError("fine-tune iteration count must be at least 1");
    }
    if (config.gold_dataset_path.empty() || config.pseudo_dataset_path.empty()) {
        throw ConfigError("dataset paths must be non-empty");
    }
}

// Four-stage schedule: pretrain the detector on the scene-centric gold set,
// generate pseudo labels over the object-centric pool, fine-tune on the
// pseudo data, fine-tune again on gold. Weights chain stage 4 <- stage 3 <-
// stage 1 <- backbone; the pseudo-labeling stage produces data, not weights,
// so it carries no losses and no iterations. Mask loss joins stages 1 and 4
// in segmentation mode but never the pseudo fine-tune.
inline TrainingManifest make_manifest(const ManifestConfig& config) {
    require_valid(config);
    const bool segmentation = config.mode == ManifestMode::Segmentation;

    auto training_stage = [&](std::string name, std::string dataset_path,
                              std::vector<std::string> losses, std::string init_from,
                              std::vector<std::string> frozen) {
        ManifestStage stage;
        stage.name = std::move(name);
        stage.dataset_path = std::move(dataset_path);
        stage.losses = std::move(losses);
        stage.batch_size = config.batch_size;
        stage.momentum = config.momentum;
        stage.weight_decay = config.weight_decay;
        stage.learning_rate = config.learning_rate;
        stage.init_from = std::move(init_from);
        stage.frozen = std::move(frozen);
        return stage;
    };

    std::vector<std::string> full_losses = {"rpn", "cls", "reg"};
    std::vector<std::string> full_losses_mask = full_losses;
    if (segmentation) {
        full_losses_mask.push_back("mask");
    }

    TrainingManifest manifest;
    manifest.checkpoint_selection =
        "advisory: keep the checkpoint with the highest validation box AP";

    ManifestStage pretrain = training_stage("detector_pretraining", config.gold_dataset_path,
                                            full_losses_mask, "backbone", {});
    pretrain.base_schedule = "1x";
    pretrain.extra_iterations = config.finetune_iterations;
    manifest.stages.push_back(std::move(pretrain));

    ManifestStage labeling = training_stage("pseudo_labeling", config.pseudo_dataset_path, {},
                                            "detector_pretraining", {});
    labeling.iterations = 0;
    labeling.batch_size = config.batch_size;
    manifest.stages.push_back(std::move(labeling));

    ManifestStage first = training_stage(
        "first_stage_finetune", config.pseudo_dataset_path,
        config.cls_only_finetune ? std::vector<std::string>{"cls"} : full_losses,
        "detector_pretraining", {"batch_norm"});
    first.iterations = config.finetune_iterations;
    manifest.stages.push_back(std::move(first));

    ManifestStage second = training_stage("second_stage_finetune", config.gold_dataset_path,
                                          full_losses_mask, "first_stage_finetune",
                                          {"batch_norm"});
    second.iterations = config.finetune_iterations;
    manifest.stages.push_back(std::move(second));

    return manifest;
}

inline json manifest_to_json(const TrainingManifest& manifest) {
    json root;
    root["checkpoint_selection"] = manifest.checkpoint_selection;
    root["stages"] = json::array();
    for (const auto& stage : manifest.stages) {
        json obj;
        obj["name"] = stage.name;
        obj["dataset_path"] = stage.dataset_path;
        obj["losses"] = stage.losses;
        if (stage.iterations) {
            obj["iterations"] = *stage.iterations;
        }
        if (stage.base_schedule) {
            obj["base_schedule"] = *stage.base_schedule;
        }
        if (stage.extra_iterations) {
            obj["extra_iterations"] = *stage.extra_iterations;
        }
        obj["batch_size"] = stage.batch_size;
        obj["momentum"] = stage.momentum;
        obj["weight_decay"] = stage.weight_decay;
        obj["learning_rate"] = stage.learning_rate;
        obj["init_from"] = stage.init_from;
        obj["frozen"] = stage.frozen;
        root["stages"].push_back(std::move(obj));
    }
    return root;
}

inline void emit_manifest(const ManifestConfig& config, const std::string& path) {
    write_json_file(manifest_to_json(make_manifest(config)), path);
}

}  // namespace pseudoscene::dataset_io
