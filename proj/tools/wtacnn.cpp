// Training and inspection CLI for the competitive pre-training engine.
//
// Subcommands: pretrain, finetune, baseline, eval, export-filters,
// inspect-checkpoint. Hyperparameters resolve in three layers: preset
// defaults, then the --config file, then explicit flags.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "wtacnn/checkpoint.hpp"
#include "wtacnn/config.hpp"
#include "wtacnn/datasets.hpp"
#include "wtacnn/filter_export.hpp"
#include "wtacnn/trainer.hpp"
#include "wtacnn/version.hpp"
#include "wtacnn/wta.hpp"

namespace fs = std::filesystem;
using namespace wtacnn;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// Flag values land here as strings; set ones are appended onto the config
// document so they win over file values.
struct FlagOverrides {
    std::vector<std::pair<std::string, std::string>> entries;

    void add(const std::string& key, const std::string& value) {
        entries.emplace_back(key, value);
    }
};

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint_path;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> iterations;
    std::optional<std::int64_t> batch_size;
    std::optional<double> lr;
    std::optional<double> rho;
    std::optional<double> conscience_c;
    std::optional<std::string> activation;
    std::optional<std::string> dataset;
    std::optional<std::string> pretrain_step;
    std::optional<std::string> augment;
    std::optional<std::int64_t> crop_size;
    std::optional<std::int64_t> eval_interval;
    std::optional<std::int64_t> checkpoint_interval;
    std::optional<std::int64_t> cifar_conv1;
    std::optional<std::int64_t> cifar_conv2;
    std::optional<std::int64_t> imagenet_input;
    std::optional<std::string> baseline_budget;
    bool wta_keep_value = false;
    bool raw_eq2 = false;
    bool finetune_last_only = false;
    bool mnist_full_train = false;
};

void attach_common(CLI::App* cmd, CommonArgs& args, bool with_dataset = true) {
    cmd->add_option("--config", args.config_path, "key = value config file");
    cmd->add_option("--preset", args.preset, "network preset: mnist, cifar, imagenet");
    cmd->add_option("--seed", args.seed, "run seed");
    cmd->add_option("--out", args.out_dir, "output directory for manifests/checkpoints");
    cmd->add_option("--data-dir", args.data_dir,
                    "dataset directory (default: $WTA_DATA_DIR)");
    cmd->add_option("--iterations", args.iterations, "iteration budget for this phase");
    cmd->add_option("--batch-size", args.batch_size, "minibatch size for this phase");
    cmd->add_option("--lr", args.lr, "SGD learning coefficient");
    cmd->add_option("--rho", args.rho, "competitive learning coefficient");
    cmd->add_option("--conscience-c", args.conscience_c,
                    "conscience constant (0 disables the conscience)");
    cmd->add_option("--activation", args.activation, "conv activation: wta or relu");
    if (with_dataset) {
        cmd->add_option("--dataset", args.dataset,
                        "dataset: mnist, cifar10, image-folder");
    }
    cmd->add_option("--pretrain-step", args.pretrain_step,
                    "pre-training step size: rho or lr-times-rho");
    cmd->add_option("--augment", args.augment, "augmentation: none or flip-five-crop");
    cmd->add_option("--crop-size", args.crop_size, "crop size for flip-five-crop");
    cmd->add_option("--eval-interval", args.eval_interval, "iterations between evals");
    cmd->add_option("--checkpoint-interval", args.checkpoint_interval,
                    "iterations between rolling checkpoints (0 = final only)");
    cmd->add_option("--cifar-conv1", args.cifar_conv1, "competitive cifar conv1 width");
    cmd->add_option("--cifar-conv2", args.cifar_conv2, "competitive cifar conv2 width");
    cmd->add_option("--imagenet-input", args.imagenet_input, "imagenet preset input size");
    cmd->add_option("--baseline-budget", args.baseline_budget,
                    "baseline iteration budget: finetune or matched");
    cmd->add_flag("--wta-keep-value", args.wta_keep_value,
                  "WTA keeps the winning value instead of emitting 1.0");
    cmd->add_flag("--raw-eq2", args.raw_eq2,
                  "use the raw additive competitive update (moves weights away "
                  "from inputs) instead of the descent form");
    cmd->add_flag("--finetune-last-only", args.finetune_last_only,
                  "train only the final fully-connected layer during fine-tuning");
    cmd->add_flag("--mnist-full-train", args.mnist_full_train,
                  "use all MNIST training images instead of the first 50,000");
}

TrainConfig resolve_config(const CommonArgs& args, const std::string& phase) {
    KeyValueDoc doc;
    if (!args.config_path.empty()) {
        doc = KeyValueDoc::load(args.config_path);
    }
    auto set = [&doc](const std::string& k, const std::string& v) { doc.set(k, v); };
    if (!args.preset.empty()) set("preset", args.preset);
    if (args.seed) set("seed", std::to_string(*args.seed));
    if (!args.out_dir.empty()) set("out_dir", args.out_dir);
    if (args.iterations) {
        set(phase == "pretrain" ? "iters_pretrain" : "iters_finetune",
            std::to_string(*args.iterations));
    }
    if (args.batch_size) {
        set(phase == "pretrain" ? "batch_pretrain" : "batch_finetune",
            std::to_string(*args.batch_size));
    }
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    if (args.lr) set("sgd_lr", fmt(*args.lr));
    if (args.rho) set("rho", fmt(*args.rho));
    if (args.conscience_c) set("conscience_c", fmt(*args.conscience_c));
    if (args.activation) set("activation", *args.activation);
    if (args.dataset) set("dataset", *args.dataset);
    if (args.pretrain_step) set("pretrain_step", *args.pretrain_step);
    if (args.augment) set("augment", *args.augment);
    if (args.crop_size) set("crop_size", std::to_string(*args.crop_size));
    if (args.eval_interval) set("eval_interval", std::to_string(*args.eval_interval));
    if (args.checkpoint_interval) {
        set("checkpoint_interval", std::to_string(*args.checkpoint_interval));
    }
    if (args.cifar_conv1) set("cifar_conv1", std::to_string(*args.cifar_conv1));
    if (args.cifar_conv2) set("cifar_conv2", std::to_string(*args.cifar_conv2));
    if (args.imagenet_input) set("imagenet_input", std::to_string(*args.imagenet_input));
    if (args.baseline_budget) set("baseline_budget", *args.baseline_budget);
    if (args.wta_keep_value) set("wta_keep_value", "true");
    if (args.raw_eq2) set("raw_update", "true");
    if (args.finetune_last_only) set("finetune_last_only", "true");
    if (args.mnist_full_train) set("mnist_full_train", "true");

    if (!args.data_dir.empty()) {
        set("data_dir", args.data_dir);
    } else if (!doc.has("data_dir") || doc.get("data_dir").empty()) {
        if (const char* env = std::getenv("WTA_DATA_DIR")) {
            set("data_dir", env);
        }
    }
    return TrainConfig::from_doc(doc);
}

fs::path first_existing(const std::vector<fs::path>& candidates,
                        const std::vector<const char*>& probes) {
    for (const fs::path& c : candidates) {
        for (const char* probe : probes) {
            if (fs::exists(c / probe)) return c;
        }
    }
    return candidates.front();
}

std::pair<Dataset, Dataset> load_train_test(const TrainConfig& config) {
    if (config.data_dir.empty()) {
        throw std::runtime_error(
            "no data directory given (use --data-dir or WTA_DATA_DIR)");
    }
    const fs::path root(config.data_dir);
    if (config.dataset == "mnist") {
        const fs::path dir =
            first_existing({root, root / "mnist", root / "MNIST" / "raw"},
                           {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
        return load_mnist(dir.string(), config.mnist_full_train);
    }
    if (config.dataset == "cifar10") {
        const fs::path dir = first_existing(
            {root, root / "cifar10", root / "cifar-10-batches-bin"}, {"data_batch_1.bin"});
        return load_cifar10(dir.string());
    }
    // image-folder: <root>/train/<class>/*.ppm and <root>/test/<class>/*.ppm
    Dataset train = load_image_folder((root / "train").string());
    Dataset test = load_image_folder((root / "test").string());
    return {std::move(train), std::move(test)};
}

void write_manifest(const TrainConfig& config, const std::string& command) {
    if (config.out_dir.empty()) return;
    fs::create_directories(config.out_dir);
    KeyValueDoc doc = config.to_doc();
    doc.set("command", command);
    doc.set("build_id", build_id());
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[64];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    doc.set("started_at", stamp);
    doc.set("metrics_csv", (fs::path(config.out_dir) / (command + "-metrics.csv")).string());
    doc.set("final_checkpoint",
            (fs::path(config.out_dir) / (command + "-final.ckpt")).string());

    const fs::path path = fs::path(config.out_dir) / "manifest.txt";
    const std::string partial = path.string() + ".partial";
    {
        std::ofstream out(partial, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write manifest " + partial);
        out << doc.serialize();
    }
    fs::rename(partial, path.string());
}

int cmd_pretrain(const CommonArgs& args) {
    TrainConfig config = resolve_config(args, "pretrain");
    write_manifest(config, "pretrain");
    auto [train, test] = load_train_test(config);
    (void)test;
    std::optional<Checkpoint> resume;
    if (!args.checkpoint_path.empty()) {
        resume = load_checkpoint(args.checkpoint_path);
    }
    RunResult r = run_pretrain(config, train, resume ? &*resume : nullptr);
    std::cout << "pretrain done: " << r.checkpoint.iteration << " iterations";
    if (!config.out_dir.empty()) {
        std::cout << ", checkpoint " << (fs::path(config.out_dir) / "pretrain-final.ckpt").string();
    }
    std::cout << "\n";
    return 0;
}

int cmd_finetune(const CommonArgs& args) {
    TrainConfig config = resolve_config(args, "finetune");
    if (args.checkpoint_path.empty()) {
        throw std::invalid_argument("finetune needs --checkpoint <pretrain checkpoint>");
    }
    write_manifest(config, "finetune");
    Checkpoint start = load_checkpoint(args.checkpoint_path);
    auto [train, test] = load_train_test(config);
    // A finetune-phase checkpoint resumes that run; a pretrain checkpoint
    // starts a fresh fine-tuning phase from its features.
    const bool resuming = start.phase == "finetune";
    RunResult r = run_finetune(config, start, train, test,
                               resuming ? &start : nullptr);
    const MetricRow& last = r.log.rows.back();
    std::printf("finetune done: top1=%.2f%% top5=%.2f%% after %llu iterations\n",
                last.top1, last.top5,
                static_cast<unsigned long long>(r.checkpoint.iteration));
    return 0;
}

int cmd_baseline(const CommonArgs& args) {
    TrainConfig config = resolve_config(args, "baseline");
    write_manifest(config, "baseline");
    auto [train, test] = load_train_test(config);
    std::optional<Checkpoint> resume;
    if (!args.checkpoint_path.empty()) {
        resume = load_checkpoint(args.checkpoint_path);
    }
    RunResult r = run_baseline(config, train, test, resume ? &*resume : nullptr);
    const MetricRow& last = r.log.rows.back();
    std::printf("baseline done: top1=%.2f%% top5=%.2f%% after %llu iterations\n",
                last.top1, last.top5,
                static_cast<unsigned long long>(r.checkpoint.iteration));
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& eval_dataset) {
    if (args.checkpoint_path.empty()) {
        throw std::invalid_argument("eval needs --checkpoint");
    }
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    Network net = ckpt.restore_network();

    // eval accepts mnist-test / mnist-train / cifar10-test / ... spellings.
    std::string name = eval_dataset;
    std::string split = "test";
    for (const char* suffix : {"-test", "-train"}) {
        const std::string s(suffix);
        if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
            split = s.substr(1);
            name = name.substr(0, name.size() - s.size());
        }
    }
    CommonArgs data_args = args;
    data_args.dataset = name;
    TrainConfig config = resolve_config(data_args, "eval");
    auto [train, test] = load_train_test(config);
    const Dataset& ds = split == "train" ? train : test;
    EvalResult r = evaluate(net, ds, config.eval_batch);
    if (std::isnan(r.top5_error)) {
        std::printf("top1=%.4f top5=n/a\n", r.top1_error);
    } else {
        std::printf("top1=%.4f top5=%.4f\n", r.top1_error, r.top5_error);
    }
    return 0;
}

int cmd_export_filters(const CommonArgs& args, int layer, const std::string& out_image) {
    if (args.checkpoint_path.empty()) {
        throw std::invalid_argument("export-filters needs --checkpoint");
    }
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    Network net = ckpt.restore_network();
    export_filters(net, layer, out_image);
    std::cout << "wrote " << out_image << "\n";
    return 0;
}

int cmd_inspect(const CommonArgs& args) {
    if (args.checkpoint_path.empty()) {
        throw std::invalid_argument("inspect-checkpoint needs --checkpoint");
    }
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    std::cout << "phase: " << ckpt.phase << "\n";
    std::cout << "iteration: " << ckpt.iteration << "\n";
    std::cout << "network:\n" << serialize_network_spec(ckpt.spec);
    for (std::size_t li = 0; li < ckpt.params.size(); ++li) {
        const LayerParams& p = ckpt.params[li];
        if (p.weights.empty() && p.branch_weights.empty()) continue;
        std::cout << "layer " << li << " (" << layer_kind_name(ckpt.spec.layers[li].kind)
                  << "): ";
        if (!p.weights.empty()) {
            double norm_sq = 0.0;
            for (std::size_t i = 0; i < p.weights.size(); ++i) {
                norm_sq += p.weights.data()[i] * p.weights.data()[i];
            }
            std::cout << "weights " << p.weights.shape_str() << " frobenius "
                      << std::sqrt(norm_sq);
        }
        for (const Tensor& b : p.branch_weights) {
            std::cout << " branch " << b.shape_str();
        }
        if (!p.bias.empty()) std::cout << " bias[" << p.bias.size() << "]";
        std::cout << "\n";
    }
    for (std::size_t li = 0; li < ckpt.conscience.size(); ++li) {
        const ConscienceState& s = ckpt.conscience[li];
        if (s.unit_count == 0) continue;
        std::uint64_t dead = 0;
        for (std::uint64_t w : s.lifetime_wins) {
            if (w == 0) ++dead;
        }
        std::cout << "conscience layer " << li << ": units " << s.unit_count
                  << " entropy " << win_rate_entropy(s) << " zero-win units " << dead
                  << " competitions " << s.competitions_seen << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"hierarchical competitive pre-training for CNNs"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string eval_dataset = "mnist-test";
    int export_layer = 0;
    std::string export_out = "filters.ppm";

    CLI::App* pretrain = app.add_subcommand("pretrain", "unsupervised competitive pre-training");
    attach_common(pretrain, args);
    pretrain->add_option("--checkpoint", args.checkpoint_path, "resume from a checkpoint");

    CLI::App* finetune = app.add_subcommand("finetune", "train the classifier head on frozen features");
    attach_common(finetune, args);
    finetune->add_option("--checkpoint", args.checkpoint_path,
                         "pre-training checkpoint to start from")->required();

    CLI::App* baseline = app.add_subcommand("baseline", "train the ReLU variant end to end");
    attach_common(baseline, args);
    baseline->add_option("--checkpoint", args.checkpoint_path, "resume from a checkpoint");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    attach_common(eval_cmd, args, false);
    eval_cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint to evaluate")
        ->required();
    eval_cmd->add_option("--dataset", eval_dataset,
                         "dataset[-split], e.g. mnist-test or cifar10-train");

    CLI::App* export_cmd = app.add_subcommand("export-filters", "render a conv layer's filters to PPM");
    attach_common(export_cmd, args);
    export_cmd->add_option("--checkpoint", args.checkpoint_path, "source checkpoint")
        ->required();
    export_cmd->add_option("--layer", export_layer, "conv layer index");
    export_cmd->add_option("--out-image", export_out, "output PPM path");

    CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "print checkpoint contents");
    attach_common(inspect, args);
    inspect->add_option("--checkpoint", args.checkpoint_path, "checkpoint to inspect")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(args);
        if (finetune->parsed()) return cmd_finetune(args);
        if (baseline->parsed()) return cmd_baseline(args);
        if (eval_cmd->parsed()) return cmd_eval(args, eval_dataset);
        if (export_cmd->parsed()) return cmd_export_filters(args, export_layer, export_out);
        if (inspect->parsed()) return cmd_inspect(args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
