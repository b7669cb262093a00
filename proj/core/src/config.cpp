#include "wtacnn/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wtacnn {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void parse_error(int line, const std::string& what) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(const std::string& text) {
    KeyValueDoc doc;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            parse_error(line_no, "expected 'key = value', got '" + line + "'");
        }
        Entry e;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) {
            parse_error(line_no, "empty key");
        }
        doc.entries_.push_back(std::move(e));
    }
    return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void KeyValueDoc::set(const std::string& key, const std::string& value) {
    entries_.push_back(Entry{key, value, 0});
}

bool KeyValueDoc::has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return e.key == key; });
}

const std::string& KeyValueDoc::get(const std::string& key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->key == key) return it->value;
    }
    throw std::invalid_argument("config: missing key '" + key + "'");
}

std::string KeyValueDoc::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

std::vector<std::string> KeyValueDoc::get_all(const std::string& key) const {
    std::vector<std::string> out;
    for (const Entry& e : entries_) {
        if (e.key == key) out.push_back(e.value);
    }
    return out;
}

int KeyValueDoc::line_of(const std::string& key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->key == key) return it->line;
    }
    return 0;
}

double KeyValueDoc::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' (line " +
                                    std::to_string(line_of(key)) + "): '" + v +
                                    "' is not a number");
    }
}

std::int64_t KeyValueDoc::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const std::int64_t i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "' (line " +
                                    std::to_string(line_of(key)) + "): '" + v +
                                    "' is not an integer");
    }
}

bool KeyValueDoc::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config key '" + key + "' (line " +
                                std::to_string(line_of(key)) + "): '" + v +
                                "' is not a boolean");
}

std::string KeyValueDoc::serialize() const {
    std::ostringstream out;
    for (const Entry& e : entries_) {
        out << e.key << " = " << e.value << "\n";
    }
    return out.str();
}

namespace {

std::string layer_to_line(const LayerSpec& layer) {
    std::ostringstream out;
    switch (layer.kind) {
        case LayerKind::Conv:
            out << "conv filters=" << layer.conv.out_channels
                << " kernel=" << layer.conv.kernel_h << " stride=" << layer.conv.stride
                << " pad=" << layer.conv.padding;
            break;
        case LayerKind::InceptionConv: {
            out << "inception";
            for (const auto& b : layer.branches) {
                out << " " << b.kernel << "x" << b.filters;
            }
            break;
        }
        case LayerKind::FullyConnected:
            out << "fc out=" << layer.fc_out;
            break;
        case LayerKind::ReLU:
            out << "relu";
            break;
        case LayerKind::Wta:
            out << "wta";
            if (layer.wta_keep_value) out << " keep_value=1";
            break;
        case LayerKind::MaxPool:
            out << "maxpool window=" << layer.pool_window
                << " stride=" << layer.pool_stride;
            break;
        case LayerKind::Flatten:
            out << "flatten";
            break;
    }
    return out.str();
}

// Splits "a=1 b=2" tails into (key, value) pairs; bare tokens keep empty keys.
std::vector<std::pair<std::string, std::string>> split_fields(const std::string& s) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        const std::size_t eq = tok.find('=');
        if (eq == std::string::npos) {
            out.emplace_back("", tok);
        } else {
            out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
        }
    }
    return out;
}

int field_int(const std::vector<std::pair<std::string, std::string>>& fields,
              const std::string& key, const std::string& where, int fallback = INT32_MIN) {
    for (const auto& [k, v] : fields) {
        if (k == key) return std::stoi(v);
    }
    if (fallback != INT32_MIN) return fallback;
    throw std::invalid_argument(where + ": missing field '" + key + "'");
}

LayerSpec line_to_layer(const std::string& value) {
    std::istringstream in(value);
    std::string kind;
    in >> kind;
    std::string rest;
    std::getline(in, rest);
    const auto fields = split_fields(rest);
    const std::string where = "network layer '" + kind + "'";
    if (kind == "conv") {
        return LayerSpec::make_conv(field_int(fields, "filters", where),
                                    field_int(fields, "kernel", where),
                                    field_int(fields, "stride", where, 1),
                                    field_int(fields, "pad", where, 0));
    }
    if (kind == "inception") {
        std::vector<InceptionBranch> branches;
        for (const auto& [k, v] : fields) {
            if (!k.empty()) {
                throw std::invalid_argument(where + ": unexpected field '" + k + "'");
            }
            const std::size_t x = v.find('x');
            if (x == std::string::npos) {
                throw std::invalid_argument(where + ": branch '" + v +
                                            "' is not kernelxfilters");
            }
            branches.push_back(
                InceptionBranch{std::stoi(v.substr(0, x)), std::stoi(v.substr(x + 1))});
        }
        return LayerSpec::make_inception(std::move(branches));
    }
    if (kind == "fc") {
        return LayerSpec::make_fc(field_int(fields, "out", where));
    }
    if (kind == "relu") return LayerSpec::make_relu();
    if (kind == "wta") {
        return LayerSpec::make_wta(field_int(fields, "keep_value", where, 0) != 0);
    }
    if (kind == "maxpool") {
        return LayerSpec::make_maxpool(field_int(fields, "window", where),
                                       field_int(fields, "stride", where));
    }
    if (kind == "flatten") return LayerSpec::make_flatten();
    throw std::invalid_argument("unknown network layer kind '" + kind + "'");
}

}  // namespace

std::string serialize_network_spec(const NetworkSpec& spec) {
    std::ostringstream out;
    out << "name = " << spec.name << "\n";
    out << "input = " << spec.input.c << "x" << spec.input.h << "x" << spec.input.w
        << "\n";
    for (const LayerSpec& layer : spec.layers) {
        out << "layer = " << layer_to_line(layer) << "\n";
    }
    return out.str();
}

NetworkSpec parse_network_spec(const std::string& text) {
    const KeyValueDoc doc = KeyValueDoc::parse(text);
    NetworkSpec spec;
    spec.name = doc.get("name");
    const std::string input = doc.get("input");
    const std::size_t x1 = input.find('x');
    const std::size_t x2 = input.find('x', x1 + 1);
    if (x1 == std::string::npos || x2 == std::string::npos) {
        throw std::invalid_argument("network input '" + input + "' is not CxHxW");
    }
    spec.input = Shape3{std::stoi(input.substr(0, x1)),
                        std::stoi(input.substr(x1 + 1, x2 - x1 - 1)),
                        std::stoi(input.substr(x2 + 1))};
    for (const std::string& line : doc.get_all("layer")) {
        spec.layers.push_back(line_to_layer(line));
    }
    spec.validate();
    return spec;
}

TrainConfig TrainConfig::defaults_for(const std::string& preset) {
    TrainConfig c;
    c.preset = preset;
    if (preset == "mnist") {
        c.dataset = "mnist";
        c.batch_pretrain = 100;
        c.batch_finetune = 100;
        c.iters_pretrain = 15000;
        c.iters_finetune = 3000;
    } else if (preset == "cifar") {
        c.dataset = "cifar10";
        c.batch_pretrain = 100;
        c.batch_finetune = 100;
        c.iters_pretrain = 75000;
        c.iters_finetune = 15000;
    } else if (preset == "imagenet") {
        c.dataset = "image-folder";
        c.batch_pretrain = 8;
        c.batch_finetune = 64;
        c.iters_pretrain = 150000;
        c.iters_finetune = 60000;
        c.lr_decay_period = 20000;
        c.lr_decay_factor = 0.1;
        c.augment_policy = AugmentPolicy::FlipFiveCrop;
        c.crop_size = 64;
        c.eval_interval = 1000;
    } else {
        throw std::invalid_argument("unknown preset '" + preset +
                                    "' (valid presets: mnist, cifar, imagenet)");
    }
    return c;
}

TrainConfig TrainConfig::from_doc(const KeyValueDoc& doc) {
    TrainConfig c = defaults_for(doc.get_or("preset", "mnist"));
    for (const auto& e : doc.entries()) {
        const std::string& k = e.key;
        if (k == "preset") {
            // consumed by defaults_for
        } else if (k == "activation") {
            c.activation = activation_from_string(doc.get(k));
        } else if (k == "dataset") {
            c.dataset = doc.get(k);
        } else if (k == "data_dir") {
            c.data_dir = doc.get(k);
        } else if (k == "out_dir") {
            c.out_dir = doc.get(k);
        } else if (k == "seed") {
            c.seed = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "rho") {
            c.rho = doc.get_double(k);
        } else if (k == "conscience_c") {
            c.conscience_c = doc.get_double(k);
        } else if (k == "sgd_lr") {
            c.sgd_lr = doc.get_double(k);
        } else if (k == "batch_pretrain") {
            c.batch_pretrain = static_cast<int>(doc.get_int(k));
        } else if (k == "batch_finetune") {
            c.batch_finetune = static_cast<int>(doc.get_int(k));
        } else if (k == "iters_pretrain") {
            c.iters_pretrain = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "iters_finetune") {
            c.iters_finetune = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "lr_decay_period") {
            c.lr_decay_period = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "lr_decay_factor") {
            c.lr_decay_factor = doc.get_double(k);
        } else if (k == "eval_interval") {
            c.eval_interval = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "checkpoint_interval") {
            c.checkpoint_interval = static_cast<std::uint64_t>(doc.get_int(k));
        } else if (k == "eval_batch") {
            c.eval_batch = static_cast<int>(doc.get_int(k));
        } else if (k == "augment") {
            c.augment_policy = augment_policy_from_string(doc.get(k));
        } else if (k == "crop_size") {
            c.crop_size = static_cast<int>(doc.get_int(k));
        } else if (k == "wta_keep_value") {
            c.wta_keep_value = doc.get_bool(k);
        } else if (k == "raw_update") {
            c.raw_update = doc.get_bool(k);
        } else if (k == "finetune_last_only") {
            c.finetune_last_only = doc.get_bool(k);
        } else if (k == "pretrain_step") {
            const std::string& v = doc.get(k);
            if (v == "rho") {
                c.pretrain_step_scaled_by_lr = false;
            } else if (v == "lr-times-rho") {
                c.pretrain_step_scaled_by_lr = true;
            } else {
                throw std::invalid_argument("config key 'pretrain_step' (line " +
                                            std::to_string(e.line) + "): '" + v +
                                            "' is not one of rho, lr-times-rho");
            }
        } else if (k == "mnist_full_train") {
            c.mnist_full_train = doc.get_bool(k);
        } else if (k == "baseline_budget") {
            const std::string& v = doc.get(k);
            if (v != "finetune" && v != "matched") {
                throw std::invalid_argument("config key 'baseline_budget' (line " +
                                            std::to_string(e.line) + "): '" + v +
                                            "' is not one of finetune, matched");
            }
            c.baseline_budget = v;
        } else if (k == "mnist_hidden") {
            c.mnist_hidden = activation_from_string(doc.get(k));
        } else if (k == "cifar_conv1") {
            c.cifar_conv1 = static_cast<int>(doc.get_int(k));
        } else if (k == "cifar_conv2") {
            c.cifar_conv2 = static_cast<int>(doc.get_int(k));
        } else if (k == "imagenet_input") {
            c.imagenet_input = static_cast<int>(doc.get_int(k));
        } else if (k == "inception_split") {
            c.inception_split = doc.get_double(k);
        } else {
            throw std::invalid_argument("config: unknown key '" + k + "' (line " +
                                        std::to_string(e.line) + ")");
        }
    }
    c.validate();
    return c;
}

KeyValueDoc TrainConfig::to_doc() const {
    KeyValueDoc d;
    d.set("preset", preset);
    d.set("activation", to_string(activation));
    d.set("dataset", dataset);
    d.set("data_dir", data_dir);
    d.set("out_dir", out_dir);
    d.set("seed", std::to_string(seed));
    char buf[64];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    d.set("rho", fmt(rho));
    d.set("conscience_c", fmt(conscience_c));
    d.set("sgd_lr", fmt(sgd_lr));
    d.set("batch_pretrain", std::to_string(batch_pretrain));
    d.set("batch_finetune", std::to_string(batch_finetune));
    d.set("iters_pretrain", std::to_string(iters_pretrain));
    d.set("iters_finetune", std::to_string(iters_finetune));
    d.set("lr_decay_period", std::to_string(lr_decay_period));
    d.set("lr_decay_factor", fmt(lr_decay_factor));
    d.set("eval_interval", std::to_string(eval_interval));
    d.set("checkpoint_interval", std::to_string(checkpoint_interval));
    d.set("eval_batch", std::to_string(eval_batch));
    d.set("augment", to_string(augment_policy));
    d.set("crop_size", std::to_string(crop_size));
    d.set("wta_keep_value", wta_keep_value ? "true" : "false");
    d.set("raw_update", raw_update ? "true" : "false");
    d.set("finetune_last_only", finetune_last_only ? "true" : "false");
    d.set("pretrain_step", pretrain_step_scaled_by_lr ? "lr-times-rho" : "rho");
    d.set("mnist_full_train", mnist_full_train ? "true" : "false");
    d.set("baseline_budget", baseline_budget);
    d.set("mnist_hidden", to_string(mnist_hidden));
    d.set("cifar_conv1", std::to_string(cifar_conv1));
    d.set("cifar_conv2", std::to_string(cifar_conv2));
    d.set("imagenet_input", std::to_string(imagenet_input));
    d.set("inception_split", fmt(inception_split));
    return d;
}

void TrainConfig::validate() const {
    if (rho <= 0.0 || conscience_c < 0.0 || sgd_lr <= 0.0) {
        throw std::invalid_argument(
            "config: rho and sgd_lr must be positive, conscience_c non-negative");
    }
    if (batch_pretrain <= 0 || batch_finetune <= 0 || eval_batch <= 0) {
        throw std::invalid_argument("config: batch sizes must be positive");
    }
    if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0) {
        throw std::invalid_argument("config: lr_decay_factor must be in (0, 1]");
    }
    if (eval_interval == 0) {
        throw std::invalid_argument("config: eval_interval must be positive");
    }
    if (dataset != "mnist" && dataset != "cifar10" && dataset != "image-folder") {
        throw std::invalid_argument("config: unknown dataset '" + dataset +
                                    "' (valid: mnist, cifar10, image-folder)");
    }
    if (augment_policy != AugmentPolicy::None && crop_size <= 0) {
        throw std::invalid_argument("config: augmentation needs a positive crop_size");
    }
}

PresetOptions TrainConfig::preset_options() const {
    PresetOptions opt;
    opt.activation = activation;
    opt.mnist_hidden = mnist_hidden;
    opt.wta_keep_value = wta_keep_value;
    opt.cifar_conv1 = cifar_conv1;
    opt.cifar_conv2 = cifar_conv2;
    opt.imagenet_input = imagenet_input;
    opt.inception_split = inception_split;
    return opt;
}

PresetOptions TrainConfig::baseline_preset_options() const {
    PresetOptions opt = preset_options();
    opt.activation = ActivationKind::Relu;
    opt.mnist_hidden = ActivationKind::Relu;
    return opt;
}

CompetitiveHyper TrainConfig::hyper() const {
    CompetitiveHyper h;
    h.rho = rho;
    h.conscience_c = conscience_c;
    h.sgd_lr = sgd_lr;
    h.step_scaled_by_lr = pretrain_step_scaled_by_lr;
    h.raw_update = raw_update;
    return h;
}

std::uint64_t TrainConfig::baseline_iterations() const {
    return baseline_budget == "matched" ? iters_pretrain + iters_finetune : iters_finetune;
}

}  // namespace wtacnn
