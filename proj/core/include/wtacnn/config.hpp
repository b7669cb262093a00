#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wtacnn/datasets.hpp"
#include "wtacnn/network.hpp"
#include "wtacnn/wta.hpp"

namespace wtacnn {

/// Flat, ordered `key = value` document with `#` comments. Keys may repeat
/// (layer lists rely on order). Parse errors carry the 1-based line number.
class KeyValueDoc {
public:
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };

    static KeyValueDoc parse(const std::string& text);
    static KeyValueDoc load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;
    /// Last occurrence wins for scalar keys.
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    std::vector<std::string> get_all(const std::string& key) const;
    int line_of(const std::string& key) const;

    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::string serialize() const;

private:
    std::vector<Entry> entries_;
};

/// Canonical text form of a network spec; parse(serialize(s)) reproduces s
/// and serialize is a fixed point of the composition.
std::string serialize_network_spec(const NetworkSpec& spec);
NetworkSpec parse_network_spec(const std::string& text);

/// Every run hyperparameter in one place. Defaults depend on the preset; the
/// config file and CLI flags override them field by field.
struct TrainConfig {
    std::string preset = "mnist";
    ActivationKind activation = ActivationKind::Wta;
    std::string dataset = "mnist";  // mnist | cifar10 | image-folder
    std::string data_dir;
    std::string out_dir;

    std::uint64_t seed = 1;
    double rho = 0.5e-3;
    double conscience_c = 5.0;
    double sgd_lr = 0.01;
    int batch_pretrain = 100;
    int batch_finetune = 100;
    std::uint64_t iters_pretrain = 15000;
    std::uint64_t iters_finetune = 3000;
    std::uint64_t lr_decay_period = 0;  // 0 disables decay
    double lr_decay_factor = 0.1;
    std::uint64_t eval_interval = 100;
    std::uint64_t checkpoint_interval = 0;  // 0 keeps only the final checkpoint
    int eval_batch = 100;

    AugmentPolicy augment_policy = AugmentPolicy::None;
    int crop_size = 0;

    bool wta_keep_value = false;
    bool raw_update = false;
    bool finetune_last_only = false;
    /// Pre-training step size: sgd_lr * rho when true, rho alone when false.
    bool pretrain_step_scaled_by_lr = false;
    bool mnist_full_train = false;
    /// "finetune" trains the baseline for iters_finetune steps; "matched"
    /// adds the pre-training budget on top.
    std::string baseline_budget = "finetune";

    ActivationKind mnist_hidden = ActivationKind::Relu;
    int cifar_conv1 = 0;  // 0 = preset default
    int cifar_conv2 = 0;
    int imagenet_input = 64;
    double inception_split = 0.5;

    static TrainConfig defaults_for(const std::string& preset);
    static TrainConfig from_doc(const KeyValueDoc& doc);
    KeyValueDoc to_doc() const;

    void validate() const;

    PresetOptions preset_options() const;
    PresetOptions baseline_preset_options() const;
    CompetitiveHyper hyper() const;
    std::uint64_t baseline_iterations() const;
};

}  // namespace wtacnn
