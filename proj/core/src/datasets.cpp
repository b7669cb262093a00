#include "wtacnn/datasets.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "wtacnn/ppm.hpp"

namespace fs = std::filesystem;

namespace wtacnn {

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) {
        throw std::runtime_error("short read on " + path.string());
    }
    return bytes;
}

std::uint32_t be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

fs::path find_idx_file(const fs::path& dir, const std::string& hyphen_name) {
    fs::path p = dir / hyphen_name;
    if (fs::exists(p)) return p;
    // Some distributions unpack with a dot before the idx suffix.
    std::string dotted = hyphen_name;
    const auto pos = dotted.rfind("-idx");
    if (pos != std::string::npos) dotted[pos] = '.';
    p = dir / dotted;
    if (fs::exists(p)) return p;
    throw std::runtime_error("MNIST file not found: " + (dir / hyphen_name).string());
}

struct IdxImages {
    int count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 16) {
        throw std::runtime_error(path.string() + ": truncated IDX header");
    }
    const std::uint32_t magic = be32(bytes.data());
    if (magic != 0x00000803u) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08x", magic);
        throw std::runtime_error(path.string() + ": bad image magic " + buf +
                                 " (expected 0x00000803)");
    }
    IdxImages r;
    r.count = static_cast<int>(be32(bytes.data() + 4));
    r.rows = static_cast<int>(be32(bytes.data() + 8));
    r.cols = static_cast<int>(be32(bytes.data() + 12));
    const std::size_t expected =
        16 + static_cast<std::size_t>(r.count) * r.rows * r.cols;
    if (bytes.size() != expected) {
        throw std::runtime_error(path.string() + ": file size " +
                                 std::to_string(bytes.size()) + " does not match header (" +
                                 std::to_string(expected) + " expected)");
    }
    r.pixels.assign(bytes.begin() + 16, bytes.end());
    return r;
}

std::vector<std::uint8_t> read_idx_labels(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 8) {
        throw std::runtime_error(path.string() + ": truncated IDX header");
    }
    const std::uint32_t magic = be32(bytes.data());
    if (magic != 0x00000801u) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08x", magic);
        throw std::runtime_error(path.string() + ": bad label magic " + buf +
                                 " (expected 0x00000801)");
    }
    const std::uint32_t count = be32(bytes.data() + 4);
    if (bytes.size() != 8 + count) {
        throw std::runtime_error(path.string() + ": file size does not match label count");
    }
    return {bytes.begin() + 8, bytes.end()};
}

Dataset idx_to_dataset(const IdxImages& images, const std::vector<std::uint8_t>& labels,
                       int keep, const std::string& split, const std::string& where) {
    if (images.count != static_cast<int>(labels.size())) {
        throw std::runtime_error(where + ": image count " + std::to_string(images.count) +
                                 " does not match label count " +
                                 std::to_string(labels.size()));
    }
    const int n = keep > 0 ? std::min(keep, images.count) : images.count;
    Dataset ds;
    ds.split = split;
    ds.images = Tensor(n, 1, images.rows, images.cols);
    ds.labels.resize(n);
    const std::size_t plane = static_cast<std::size_t>(images.rows) * images.cols;
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* src = images.pixels.data() + static_cast<std::size_t>(i) * plane;
        double* dst = ds.images.data() + ds.images.index(i, 0, 0, 0);
        for (std::size_t p = 0; p < plane; ++p) {
            dst[p] = src[p] / 255.0;
        }
        ds.labels[i] = labels[i];
        if (ds.labels[i] >= ds.num_classes) {
            throw std::runtime_error(where + ": label " + std::to_string(ds.labels[i]) +
                                     " out of range");
        }
    }
    return ds;
}

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarFileBytes = 30730000;  // 10,000 records

void append_cifar_file(const fs::path& path, Dataset& ds, int& cursor) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() != kCifarFileBytes) {
        throw std::runtime_error(path.string() + ": file size " +
                                 std::to_string(bytes.size()) + " (expected " +
                                 std::to_string(kCifarFileBytes) + ")");
    }
    const std::size_t records = bytes.size() / kCifarRecord;
    for (std::size_t r = 0; r < records; ++r, ++cursor) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
        const int label = rec[0];
        if (label >= ds.num_classes) {
            throw std::runtime_error(path.string() + ": label byte " +
                                     std::to_string(label) + " out of range");
        }
        ds.labels[cursor] = label;
        double* dst = ds.images.data() + ds.images.index(cursor, 0, 0, 0);
        for (std::size_t p = 0; p < 3072; ++p) {
            dst[p] = rec[1 + p] / 255.0;  // R plane, G plane, B plane in order
        }
    }
}

}  // namespace

std::pair<Dataset, Dataset> load_mnist(const std::string& dir, bool full_train) {
    const fs::path root(dir);
    IdxImages train_images = read_idx_images(find_idx_file(root, "train-images-idx3-ubyte"));
    std::vector<std::uint8_t> train_labels =
        read_idx_labels(find_idx_file(root, "train-labels-idx1-ubyte"));
    IdxImages test_images = read_idx_images(find_idx_file(root, "t10k-images-idx3-ubyte"));
    std::vector<std::uint8_t> test_labels =
        read_idx_labels(find_idx_file(root, "t10k-labels-idx1-ubyte"));
    Dataset train = idx_to_dataset(train_images, train_labels, full_train ? 0 : 50000,
                                   "train", "mnist train");
    Dataset test = idx_to_dataset(test_images, test_labels, 0, "test", "mnist test");
    return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
    fs::path root(dir);
    if (!fs::exists(root / "data_batch_1.bin") &&
        fs::exists(root / "cifar-10-batches-bin" / "data_batch_1.bin")) {
        root /= "cifar-10-batches-bin";
    }
    Dataset train;
    train.split = "train";
    train.images = Tensor(50000, 3, 32, 32);
    train.labels.resize(50000);
    int cursor = 0;
    for (int i = 1; i <= 5; ++i) {
        append_cifar_file(root / ("data_batch_" + std::to_string(i) + ".bin"), train,
                          cursor);
    }
    Dataset test;
    test.split = "test";
    test.images = Tensor(10000, 3, 32, 32);
    test.labels.resize(10000);
    cursor = 0;
    append_cifar_file(root / "test_batch.bin", test, cursor);
    return {std::move(train), std::move(test)};
}

Dataset load_image_folder(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) {
        throw std::runtime_error("image folder not found: " + dir);
    }
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) {
        throw std::runtime_error("image folder has no class subdirectories: " + dir);
    }
    std::vector<std::pair<fs::path, int>> files;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<fs::path> in_class;
        for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
            if (entry.is_regular_file()) in_class.push_back(entry.path());
        }
        std::sort(in_class.begin(), in_class.end());
        for (auto& p : in_class) files.emplace_back(std::move(p), static_cast<int>(c));
    }
    if (files.empty()) {
        throw std::runtime_error("image folder has no images: " + dir);
    }
    Dataset ds;
    ds.num_classes = static_cast<int>(class_dirs.size());
    ds.split = "image-folder";
    int width = 0, height = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
        PpmImage img = read_ppm(files[i].first.string());
        if (i == 0) {
            width = img.width;
            height = img.height;
            ds.images = Tensor(static_cast<int>(files.size()), 3, height, width);
            ds.labels.resize(files.size());
        } else if (img.width != width || img.height != height) {
            throw std::runtime_error(files[i].first.string() + ": image size " +
                                     std::to_string(img.width) + "x" +
                                     std::to_string(img.height) + " differs from " +
                                     std::to_string(width) + "x" + std::to_string(height));
        }
        ds.labels[i] = files[i].second;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    ds.images.at(static_cast<int>(i), ch, y, x) =
                        img.rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch] / 255.0;
                }
            }
        }
    }
    return ds;
}

AugmentPolicy augment_policy_from_string(const std::string& s) {
    if (s == "none") return AugmentPolicy::None;
    if (s == "flip-five-crop") return AugmentPolicy::FlipFiveCrop;
    throw std::invalid_argument("unknown augmentation policy '" + s +
                                "' (valid: none, flip-five-crop)");
}

std::string to_string(AugmentPolicy p) {
    return p == AugmentPolicy::None ? "none" : "flip-five-crop";
}

Tensor augment(const Tensor& batch, AugmentPolicy policy, int crop_size, Rng& rng) {
    if (policy == AugmentPolicy::None) {
        return batch;
    }
    if (crop_size <= 0 || crop_size > batch.h() || crop_size > batch.w()) {
        throw std::invalid_argument("augment: crop size " + std::to_string(crop_size) +
                                    " does not fit image " + batch.shape_str());
    }
    const int ch = crop_size, cw = crop_size;
    const int max_y = batch.h() - ch, max_x = batch.w() - cw;
    // Anchor order: center, upper right, upper left, lower right, lower left.
    const int anchor_y[5] = {max_y / 2, 0, 0, max_y, max_y};
    const int anchor_x[5] = {max_x / 2, max_x, 0, max_x, 0};
    Tensor out(batch.n(), batch.c(), ch, cw);
    for (int n = 0; n < batch.n(); ++n) {
        const bool flip = rng.uniform() < 0.5;
        const int a = static_cast<int>(rng.uniform_index(5));
        for (int c = 0; c < batch.c(); ++c) {
            for (int y = 0; y < ch; ++y) {
                for (int x = 0; x < cw; ++x) {
                    const int sy = anchor_y[a] + y;
                    const int sx = anchor_x[a] + (flip ? (cw - 1 - x) : x);
                    out.at(n, c, y, x) = batch.at(n, c, sy, sx);
                }
            }
        }
    }
    return out;
}

BatchIterator::BatchIterator(const Dataset& data, int batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
    if (batch_size <= 0) {
        throw std::invalid_argument("BatchIterator: batch size must be positive");
    }
    if (data.size() == 0) {
        throw std::invalid_argument("BatchIterator: empty dataset");
    }
    reshuffle();
}

void BatchIterator::reshuffle() {
    order_.resize(static_cast<std::size_t>(data_->size()));
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(seed_, epoch_));
    rng.shuffle(order_);
}

void BatchIterator::restore(std::uint64_t epoch, std::uint64_t cursor) {
    epoch_ = epoch;
    cursor_ = cursor;
    reshuffle();
}

BatchView BatchIterator::next() {
    const std::size_t remaining = order_.size() - cursor_;
    const std::size_t take = std::min<std::size_t>(remaining, batch_size_);
    BatchView view;
    view.images = Tensor(static_cast<int>(take), data_->images.c(), data_->images.h(),
                         data_->images.w());
    view.labels.resize(take);
    const std::size_t sample_size = static_cast<std::size_t>(data_->images.c()) *
                                    data_->images.h() * data_->images.w();
    for (std::size_t i = 0; i < take; ++i) {
        const std::uint32_t src = order_[cursor_ + i];
        std::copy(data_->images.data() + src * sample_size,
                  data_->images.data() + (src + 1) * sample_size,
                  view.images.data() + i * sample_size);
        view.labels[i] = data_->labels[src];
    }
    cursor_ += take;
    if (cursor_ >= order_.size()) {
        cursor_ = 0;
        ++epoch_;
        reshuffle();
    }
    return view;
}

}  // namespace wtacnn
