#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wtacnn/rng.hpp"
#include "wtacnn/tensor.hpp"

namespace wtacnn {

struct Dataset {
    Tensor images;  // N x C x H x W, pixel values in [0, 1]
    std::vector<int> labels;
    int num_classes = 10;
    std::string split;

    int size() const { return images.n(); }
};

/// IDX-format MNIST from `dir` (train-images-idx3-ubyte etc., dotted spelling
/// also accepted). Pixels scaled by 1/255; the training set is truncated to
/// its first 50,000 samples unless full_train is set.
std::pair<Dataset, Dataset> load_mnist(const std::string& dir, bool full_train = false);

/// CIFAR-10 binary batches from `dir` (or dir/cifar-10-batches-bin). Each of
/// the six files must be exactly 30,730,000 bytes: 10,000 records of one label
/// byte plus 3072 pixel bytes (red plane, green plane, blue plane, row-major).
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

/// Surrogate corpus loader: one subdirectory per class (lexicographic order
/// gives the label index), PPM images inside. All images must share one size.
Dataset load_image_folder(const std::string& dir);

enum class AugmentPolicy { None, FlipFiveCrop };

AugmentPolicy augment_policy_from_string(const std::string& s);
std::string to_string(AugmentPolicy p);

/// Per sample: horizontal flip with probability 1/2, then a crop chosen
/// uniformly from five anchors (center, upper right, upper left, lower right,
/// lower left). Policy None is the identity. Consumes exactly two rng draws
/// per sample under FlipFiveCrop.
Tensor augment(const Tensor& batch, AugmentPolicy policy, int crop_size, Rng& rng);

struct BatchView {
    Tensor images;
    std::vector<int> labels;
};

/// Deterministic shuffled epochs: the permutation is a pure function of
/// (seed, epoch), every epoch visits each sample exactly once, and the final
/// short batch of an epoch is emitted as-is.
class BatchIterator {
public:
    BatchIterator(const Dataset& data, int batch_size, std::uint64_t seed);

    BatchView next();

    std::uint64_t epoch() const { return epoch_; }
    std::uint64_t cursor() const { return cursor_; }
    std::uint64_t seed() const { return seed_; }

    /// Rebuilds the iterator position (used by checkpoint resume).
    void restore(std::uint64_t epoch, std::uint64_t cursor);

private:
    void reshuffle();

    const Dataset* data_;
    int batch_size_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::uint64_t cursor_ = 0;
    std::vector<std::uint32_t> order_;
};

}  // namespace wtacnn
