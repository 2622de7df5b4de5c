#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svitq/model.hpp"
#include "svitq/quant.hpp"

namespace svitq {

// Plain-text key = value run configuration. '#' starts a comment. Unknown keys
// are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
    uint64_t seed = 42;
    std::string output_dir = "runs/out";
    QuantMode mode = QuantMode::Faithful;
    double delta = 5.0;
    std::vector<int> bits = {32, 16, 12, 8, 4};
    int workers = 1;

    // model source: either a checkpoint to load or toy-build parameters
    std::string model_checkpoint; // empty -> build + train the toy model
    ToyConfig model;

    // dataset source
    std::string data_kind = "synthetic"; // synthetic | idx
    size_t train_n = 512;
    size_t val_n = 256;
    int data_classes = 4;
    int data_h = 16;
    int data_w = 16;
    double data_noise = 0.08;
    std::string idx_train_images, idx_train_labels;
    std::string idx_val_images, idx_val_labels;

    // evaluation subset for the search stages (0 = full validation set)
    size_t subset_size = 0;
    uint64_t subset_seed = 7;

    int train_epochs = 20;
    int train_batch = 32;
    double train_lr = 2e-3;

    std::string digest() const;        // fnv64 hex of the canonical echo text
    std::string echo() const;          // canonical effective-config listing
    void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// CLI-level overrides applied on top of the file (flag or environment)
struct ConfigOverrides {
    std::optional<std::string> output_dir;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<size_t> subset_size;
    std::optional<double> delta;
    std::optional<QuantMode> mode;
};

RunConfig apply_overrides(RunConfig cfg, const ConfigOverrides& ov);

} // namespace svitq
