#include "wtacnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "wtacnn/backprop.hpp"
#include "wtacnn/rng.hpp"
#include "wtacnn/wta.hpp"

namespace fs = std::filesystem;

namespace wtacnn {

namespace {

constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

// Stream ids for deriving per-phase seeds from the run seed.
enum PhaseStream : std::uint64_t { kPretrain = 1, kFinetune = 2, kBaseline = 3 };

std::string phase_name(PhaseStream p) {
    switch (p) {
        case kPretrain: return "pretrain";
        case kFinetune: return "finetune";
        case kBaseline: return "baseline";
    }
    return "?";
}

void check_labels(const Dataset& ds, int classes) {
    for (int l : ds.labels) {
        if (l < 0 || l >= classes) {
            throw std::invalid_argument("dataset label " + std::to_string(l) +
                                        " out of range for " + std::to_string(classes) +
                                        " network outputs");
        }
    }
}

Checkpoint make_checkpoint(const Network& net, PhaseStream phase,
                           const std::vector<ConscienceState>& states,
                           std::uint64_t iteration, const Rng& rng,
                           const BatchIterator& it) {
    Checkpoint c = Checkpoint::capture(net, phase_name(phase), states, iteration);
    c.trainer_rng = rng.serialize();
    c.iterator_seed = it.seed();
    c.iterator_epoch = it.epoch();
    c.iterator_cursor = it.cursor();
    return c;
}

void maybe_save(const Checkpoint& c, const std::string& out_dir, const std::string& name) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    save_checkpoint(c, (fs::path(out_dir) / name).string());
}

double mean_entropy(const std::vector<ConscienceState>& states) {
    double sum = 0.0;
    int n = 0;
    for (const ConscienceState& s : states) {
        if (s.unit_count > 0) {
            sum += win_rate_entropy(s);
            ++n;
        }
    }
    return n > 0 ? sum / n : kAbsent;
}

struct PhaseSetup {
    Network net;
    std::vector<ConscienceState> states;
    BatchIterator iterator;
    Rng rng;
    std::uint64_t start_iteration = 0;
};

// Applies a resume checkpoint (or phase defaults) to network, conscience,
// iterator and rng state.
PhaseSetup setup_phase(Network net, std::vector<ConscienceState> states,
                       const Dataset& train, int batch_size, std::uint64_t seed,
                       PhaseStream phase, const Checkpoint* resume) {
    PhaseSetup s{std::move(net), std::move(states),
                 BatchIterator(train, batch_size, derive_seed(seed, phase)),
                 Rng(derive_seed(seed, phase + 100)), 0};
    if (resume != nullptr) {
        if (resume->phase != phase_name(phase)) {
            throw std::invalid_argument("resume checkpoint is from phase '" +
                                        resume->phase + "', expected '" +
                                        phase_name(phase) + "'");
        }
        if (resume->spec.name != s.net.spec.name) {
            throw std::invalid_argument("resume checkpoint network '" + resume->spec.name +
                                        "' does not match configured network '" +
                                        s.net.spec.name + "'");
        }
        s.net.params = resume->params;
        s.states = resume->conscience;
        s.iterator.restore(resume->iterator_epoch, resume->iterator_cursor);
        s.rng.restore(resume->trainer_rng);
        s.start_iteration = resume->iteration;
    }
    return s;
}

}  // namespace

EvalResult evaluate(const Network& net, const Dataset& test, int batch_size) {
    if (test.size() == 0) {
        throw std::invalid_argument("evaluate: empty test set");
    }
    const int classes = net.spec.output_width();
    check_labels(test, classes);
    std::size_t top1_miss = 0, top5_miss = 0;
    const std::size_t sample_size = static_cast<std::size_t>(test.images.c()) *
                                    test.images.h() * test.images.w();
    for (int begin = 0; begin < test.size(); begin += batch_size) {
        const int take = std::min(batch_size, test.size() - begin);
        Tensor batch(take, test.images.c(), test.images.h(), test.images.w());
        std::copy(test.images.data() + begin * sample_size,
                  test.images.data() + (begin + take) * sample_size, batch.data());
        ForwardTrace trace = forward(net, batch, RunMode::Eval);
        const Tensor& logits = trace.logits();
        for (int i = 0; i < take; ++i) {
            const int label = test.labels[begin + i];
            const double* row = logits.data() + logits.index(i, 0, 0, 0);
            // Rank of the true label under (value desc, index asc).
            int rank = 0;
            for (int c = 0; c < classes; ++c) {
                if (row[c] > row[label] || (row[c] == row[label] && c < label)) {
                    ++rank;
                }
            }
            if (rank >= 1) ++top1_miss;
            if (rank >= 5) ++top5_miss;
        }
    }
    EvalResult r;
    r.top1_error = 100.0 * static_cast<double>(top1_miss) / test.size();
    r.top5_error = classes >= 5
                       ? 100.0 * static_cast<double>(top5_miss) / test.size()
                       : kAbsent;
    return r;
}

double lr_at(double base, std::uint64_t iteration, std::uint64_t period, double factor) {
    if (period == 0) return base;
    return base * std::pow(factor, static_cast<double>(iteration / period));
}

std::string MetricLog::to_csv() const {
    std::string out = "iteration,phase,top1_error,top5_error,loss,entropy\n";
    char buf[64];
    auto field = [&buf](double v) -> std::string {
        if (std::isnan(v)) return "";
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return buf;
    };
    for (const MetricRow& r : rows) {
        out += std::to_string(r.iteration);
        out += ',';
        out += r.phase;
        out += ',';
        out += field(r.top1);
        out += ',';
        out += field(r.top5);
        out += ',';
        out += field(r.loss);
        out += ',';
        out += field(r.entropy);
        out += '\n';
    }
    return out;
}

void MetricLog::write_csv(const std::string& path) const {
    const std::string partial = path + ".partial";
    {
        std::ofstream out(partial, std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write metrics " + partial);
        }
        out << to_csv();
        if (!out) {
            throw std::runtime_error("short write on metrics " + partial);
        }
    }
    fs::rename(partial, path);
}

RunResult run_pretrain(const TrainConfig& config, const Dataset& train,
                       const Checkpoint* resume) {
    Network net = build_network(preset_by_name(config.preset, config.preset_options()),
                                config.seed);
    bool any_competitive = false;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (net.is_competitive(static_cast<int>(i))) any_competitive = true;
    }
    if (!any_competitive) {
        throw std::invalid_argument(
            "run_pretrain: network '" + net.spec.name +
            "' has no competitive layers (pre-training needs WTA activations)");
    }

    std::vector<ConscienceState> states = init_conscience(net, config.conscience_c);
    PhaseSetup s = setup_phase(std::move(net), std::move(states), train,
                               config.batch_pretrain, config.seed, kPretrain, resume);
    if (resume == nullptr) {
        normalize_competitive_filters(s.net);
    }
    const CompetitiveHyper hyper = config.hyper();

    RunResult result;
    for (std::uint64_t iter = s.start_iteration; iter < config.iters_pretrain; ++iter) {
        BatchView batch = s.iterator.next();  // labels deliberately unused
        Tensor images =
            augment(batch.images, config.augment_policy, config.crop_size, s.rng);
        pretrain_pass(s.net, images, hyper, s.states);

        const std::uint64_t done = iter + 1;
        if (done % config.eval_interval == 0 || done == config.iters_pretrain) {
            MetricRow row;
            row.iteration = done;
            row.phase = phase_name(kPretrain);
            row.top1 = kAbsent;
            row.top5 = kAbsent;
            row.loss = kAbsent;
            row.entropy = mean_entropy(s.states);
            result.log.rows.push_back(std::move(row));
        }
        if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 &&
            done != config.iters_pretrain) {
            maybe_save(make_checkpoint(s.net, kPretrain, s.states, done, s.rng, s.iterator),
                       config.out_dir, "pretrain-ckpt-" + std::to_string(done) + ".ckpt");
        }
    }
    result.checkpoint = make_checkpoint(s.net, kPretrain, s.states, config.iters_pretrain,
                                        s.rng, s.iterator);
    maybe_save(result.checkpoint, config.out_dir, "pretrain-final.ckpt");
    if (!config.out_dir.empty()) {
        result.log.write_csv((fs::path(config.out_dir) / "pretrain-metrics.csv").string());
    }
    return result;
}

namespace {

RunResult supervised_run(const TrainConfig& config, Network net,
                         std::vector<ConscienceState> states, PhaseStream phase,
                         std::uint64_t budget, const Dataset& train, const Dataset& test,
                         const Checkpoint* resume) {
    check_labels(train, net.spec.output_width());
    PhaseSetup s = setup_phase(std::move(net), std::move(states), train,
                               config.batch_finetune, config.seed, phase, resume);

    RunResult result;
    const std::string phase_str = phase_name(phase);
    for (std::uint64_t iter = s.start_iteration; iter < budget; ++iter) {
        BatchView batch = s.iterator.next();
        Tensor images =
            augment(batch.images, config.augment_policy, config.crop_size, s.rng);
        ForwardTrace trace = forward(s.net, images, RunMode::Train);
        auto [loss, dlogits] = softmax_cross_entropy(trace.logits(), batch.labels);
        GradientSet grads = network_backward(s.net, images, trace, dlogits);
        sgd_apply(s.net, grads,
                  lr_at(config.sgd_lr, iter, config.lr_decay_period,
                        config.lr_decay_factor));

        const std::uint64_t done = iter + 1;
        if (done % config.eval_interval == 0 || done == budget) {
            EvalResult eval = evaluate(s.net, test, config.eval_batch);
            MetricRow row;
            row.iteration = done;
            row.phase = phase_str;
            row.top1 = eval.top1_error;
            row.top5 = eval.top5_error;
            row.loss = loss;
            row.entropy = kAbsent;
            result.log.rows.push_back(std::move(row));
        }
        if (config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 &&
            done != budget) {
            maybe_save(make_checkpoint(s.net, phase, s.states, done, s.rng, s.iterator),
                       config.out_dir, phase_str + "-ckpt-" + std::to_string(done) + ".ckpt");
        }
    }
    result.checkpoint =
        make_checkpoint(s.net, phase, s.states, budget, s.rng, s.iterator);
    maybe_save(result.checkpoint, config.out_dir, phase_str + "-final.ckpt");
    if (!config.out_dir.empty()) {
        result.log.write_csv(
            (fs::path(config.out_dir) / (phase_str + "-metrics.csv")).string());
    }
    return result;
}

}  // namespace

RunResult run_finetune(const TrainConfig& config, const Checkpoint& pretrained,
                       const Dataset& train, const Dataset& test,
                       const Checkpoint* resume) {
    const NetworkSpec expected =
        preset_by_name(config.preset, config.preset_options());
    if (pretrained.spec.name != expected.name) {
        throw std::invalid_argument("run_finetune: checkpoint network '" +
                                    pretrained.spec.name + "' does not match preset '" +
                                    expected.name + "'");
    }
    Network net = pretrained.restore_network();

    // Conv layers stay frozen; the classifier head trains. With
    // finetune_last_only only the final FC layer moves.
    int last_fc = -1;
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        if (net.spec.layers[i].kind == LayerKind::FullyConnected) {
            last_fc = static_cast<int>(i);
        }
    }
    for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
        const LayerKind kind = net.spec.layers[i].kind;
        if (kind == LayerKind::Conv || kind == LayerKind::InceptionConv) {
            net.trainable[i] = false;
        } else if (kind == LayerKind::FullyConnected) {
            net.trainable[i] =
                config.finetune_last_only ? (static_cast<int>(i) == last_fc) : true;
        }
    }

    return supervised_run(config, std::move(net), pretrained.conscience, kFinetune,
                          config.iters_finetune, train, test, resume);
}

RunResult run_baseline(const TrainConfig& config, const Dataset& train,
                       const Dataset& test, const Checkpoint* resume) {
    Network net = build_network(
        preset_by_name(config.preset, config.baseline_preset_options()), config.seed);
    std::vector<ConscienceState> empty_states(net.spec.layers.size());
    return supervised_run(config, std::move(net), std::move(empty_states), kBaseline,
                          config.baseline_iterations(), train, test, resume);
}

}  // namespace wtacnn
