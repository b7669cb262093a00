#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "support/synthetic.hpp"
#include "wtacnn/datasets.hpp"
#include "wtacnn/ppm.hpp"
#include "wtacnn/rng.hpp"

using namespace wtacnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("wtacnn-test-" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("mnist loader scales bytes to [0,1] and keeps shapes") {
    TempDir tmp("mnist-basic");
    std::vector<std::uint8_t> train_pixels(3 * 28 * 28, 0);
    train_pixels[0] = 255;
    train_pixels[28 * 28 + 5] = 128;
    synthetic::write_idx_images((tmp.path / "train-images-idx3-ubyte").string(), 3, 28, 28,
                                train_pixels);
    synthetic::write_idx_labels((tmp.path / "train-labels-idx1-ubyte").string(), {7, 1, 9});
    std::vector<std::uint8_t> test_pixels(2 * 28 * 28, 10);
    synthetic::write_idx_images((tmp.path / "t10k-images-idx3-ubyte").string(), 2, 28, 28,
                                test_pixels);
    synthetic::write_idx_labels((tmp.path / "t10k-labels-idx1-ubyte").string(), {0, 3});

    auto [train, test] = load_mnist(tmp.path.string());
    CHECK(train.size() == 3);
    CHECK(test.size() == 2);
    CHECK(train.images.c() == 1);
    CHECK(train.images.h() == 28);
    CHECK(train.images.at(0, 0, 0, 0) == 1.0);  // byte 255 -> 1.0
    CHECK(train.images.at(1, 0, 0, 5) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
    CHECK(train.labels == std::vector<int>{7, 1, 9});
    for (std::size_t i = 0; i < test.images.size(); ++i) {
        CHECK(test.images.data()[i] >= 0.0);
        CHECK(test.images.data()[i] <= 1.0);
    }
}

TEST_CASE("mnist training set truncates to 50,000 unless full_train") {
    TempDir tmp("mnist-trunc");
    const int count = 50010;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(count) * 28 * 28, 0);
    std::vector<std::uint8_t> labels(count, 2);
    synthetic::write_idx_images((tmp.path / "train-images-idx3-ubyte").string(), count, 28,
                                28, pixels);
    synthetic::write_idx_labels((tmp.path / "train-labels-idx1-ubyte").string(), labels);
    synthetic::write_idx_images((tmp.path / "t10k-images-idx3-ubyte").string(), 1, 28, 28,
                                std::vector<std::uint8_t>(28 * 28, 0));
    synthetic::write_idx_labels((tmp.path / "t10k-labels-idx1-ubyte").string(), {0});

    auto [train, test] = load_mnist(tmp.path.string());
    CHECK(train.size() == 50000);
    auto [full, test2] = load_mnist(tmp.path.string(), true);
    CHECK(full.size() == count);
    (void)test;
    (void)test2;
}

TEST_CASE("mnist loader rejects malformed files with descriptive errors") {
    TempDir tmp("mnist-bad");
    // Wrong magic: write a labels file (magic 0x801) where images belong,
    // padded past the image header size so the magic check is what fires.
    synthetic::write_idx_labels((tmp.path / "train-images-idx3-ubyte").string(),
                                std::vector<std::uint8_t>(16, 1));
    synthetic::write_idx_labels((tmp.path / "train-labels-idx1-ubyte").string(), {1, 2});
    CHECK_THROWS_WITH_AS(load_mnist(tmp.path.string()), doctest::Contains("magic"),
                         std::runtime_error);

    TempDir tmp2("mnist-mismatch");
    synthetic::write_idx_images((tmp2.path / "train-images-idx3-ubyte").string(), 2, 28, 28,
                                std::vector<std::uint8_t>(2 * 28 * 28, 0));
    synthetic::write_idx_labels((tmp2.path / "train-labels-idx1-ubyte").string(), {1, 2, 3});
    synthetic::write_idx_images((tmp2.path / "t10k-images-idx3-ubyte").string(), 1, 28, 28,
                                std::vector<std::uint8_t>(28 * 28, 0));
    synthetic::write_idx_labels((tmp2.path / "t10k-labels-idx1-ubyte").string(), {0});
    CHECK_THROWS_WITH_AS(load_mnist(tmp2.path.string()),
                         doctest::Contains("does not match label count"),
                         std::runtime_error);

    TempDir tmp3("mnist-missing");
    CHECK_THROWS_WITH_AS(load_mnist(tmp3.path.string()), doctest::Contains("not found"),
                         std::runtime_error);
}

TEST_CASE("cifar loader: record layout, channel order, size checks") {
    TempDir tmp("cifar");
    // Batch 1 carries a known record at index 3: label 7, red plane ramp.
    synthetic::CifarRecord rec;
    rec.index = 3;
    rec.label = 7;
    rec.pixels.assign(3072, 0);
    for (int i = 0; i < 1024; ++i) rec.pixels[i] = static_cast<std::uint8_t>(i % 256);
    rec.pixels[1024] = 200;  // first green byte
    rec.pixels[2048] = 100;  // first blue byte
    synthetic::write_cifar_batch((tmp.path / "data_batch_1.bin").string(), {rec});
    for (int i = 2; i <= 5; ++i) {
        synthetic::write_cifar_batch(
            (tmp.path / ("data_batch_" + std::to_string(i) + ".bin")).string(), {});
    }
    synthetic::write_cifar_batch((tmp.path / "test_batch.bin").string(), {});

    auto [train, test] = load_cifar10(tmp.path.string());
    CHECK(train.size() == 50000);
    CHECK(test.size() == 10000);
    CHECK(train.images.c() == 3);
    CHECK(train.images.h() == 32);
    CHECK(train.labels[3] == 7);
    // First 1024 payload bytes land in channel 0 (red), row-major.
    CHECK(train.images.at(3, 0, 0, 0) == 0.0);
    CHECK(train.images.at(3, 0, 0, 1) == doctest::Approx(1.0 / 255.0).epsilon(1e-12));
    CHECK(train.images.at(3, 0, 1, 0) == doctest::Approx(32.0 / 255.0).epsilon(1e-12));
    CHECK(train.images.at(3, 1, 0, 0) == doctest::Approx(200.0 / 255.0).epsilon(1e-12));
    CHECK(train.images.at(3, 2, 0, 0) == doctest::Approx(100.0 / 255.0).epsilon(1e-12));

    // Wrong file size is refused.
    fs::resize_file(tmp.path / "data_batch_2.bin", 30730000 - 1);
    CHECK_THROWS_WITH_AS(load_cifar10(tmp.path.string()), doctest::Contains("file size"),
                         std::runtime_error);
}

TEST_CASE("augment none is the bitwise identity") {
    Dataset ds = synthetic::make_stroke_dataset(4, 3, 12, 12, 1, 2, 3);
    Rng rng(9);
    Tensor out = augment(ds.images, AugmentPolicy::None, 0, rng);
    REQUIRE(out.size() == ds.images.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out.data()[i] == ds.images.data()[i]);
    }
}

TEST_CASE("augment five-crop geometry: center crop picks the middle rows") {
    // 4x4 ramp image; center crop to 2x2 must be rows/cols 1..2 when the
    // sample is not flipped. Scan seeds until both flip outcomes appear.
    Tensor img(1, 1, 4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) img.at(0, 0, y, x) = y * 4 + x;
    }
    bool saw_center_unflipped = false;
    for (std::uint64_t seed = 0; seed < 64 && !saw_center_unflipped; ++seed) {
        Rng rng(seed);
        Tensor out = augment(img, AugmentPolicy::FlipFiveCrop, 2, rng);
        if (out.at(0, 0, 0, 0) == 5.0 && out.at(0, 0, 0, 1) == 6.0) {
            CHECK(out.at(0, 0, 1, 0) == 9.0);
            CHECK(out.at(0, 0, 1, 1) == 10.0);
            saw_center_unflipped = true;
        }
    }
    CHECK(saw_center_unflipped);
}

TEST_CASE("augment flips are exact mirrors and all five anchors occur") {
    // Full-size crop isolates the flip; a distinct value per column makes the
    // mirror check exact.
    Tensor img(1, 1, 2, 6);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 6; ++x) img.at(0, 0, y, x) = 10.0 * y + x;
    }
    int flips = 0, keeps = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        Tensor out = augment(img, AugmentPolicy::FlipFiveCrop, 2, rng);
        (void)out;
    }
    // crop_size equal to height; width crop anchors vary. Use crop = 2 on the
    // 2x6 image: anchor x in {0, 2, 4}; anchor y always 0.
    std::map<double, int> first_pixels;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Rng rng(seed);
        Tensor out = augment(img, AugmentPolicy::FlipFiveCrop, 2, rng);
        first_pixels[out.at(0, 0, 0, 0)]++;
        // Every output must be a contiguous crop of the original or its mirror.
        const double a = out.at(0, 0, 0, 0), b = out.at(0, 0, 0, 1);
        const bool forward = (b == a + 1.0);
        const bool mirrored = (b == a - 1.0);
        CHECK((forward || mirrored));
        if (mirrored) ++flips;
        if (forward) ++keeps;
    }
    CHECK(flips > 100);  // flip probability 1/2
    CHECK(keeps > 100);
    // Anchors x in {0, 2, 4} appear unflipped (first pixel 0, 2, 4) and
    // flipped (first pixel 1, 3, 5).
    for (double v : {0.0, 2.0, 4.0, 1.0, 3.0, 5.0}) {
        CHECK(first_pixels.count(v) == 1);
    }
}

TEST_CASE("augment rejects crops larger than the image") {
    Tensor img(1, 1, 4, 4);
    Rng rng(1);
    CHECK_THROWS_AS(augment(img, AugmentPolicy::FlipFiveCrop, 5, rng),
                    std::invalid_argument);
}

TEST_CASE("batch iterator partitions an epoch as 3,3,3,1") {
    Dataset ds = synthetic::make_stroke_dataset(5, 2, 6, 6, 1, 4, 5);
    REQUIRE(ds.size() == 10);
    BatchIterator it(ds, 3, 11);
    std::vector<int> sizes;
    for (int b = 0; b < 4; ++b) sizes.push_back(it.next().images.n());
    CHECK(sizes == std::vector<int>{3, 3, 3, 1});
    CHECK(it.epoch() == 1);
}

TEST_CASE("batch iterator is deterministic and visits each sample once per epoch") {
    Dataset ds = synthetic::make_stroke_dataset(6, 2, 6, 6, 1, 6, 7);
    // Tag samples by a unique corner value so batches reveal identity.
    for (int i = 0; i < ds.size(); ++i) ds.images.at(i, 0, 0, 0) = i;

    BatchIterator a(ds, 5, 42), b(ds, 5, 42);
    std::map<int, int> seen;
    for (int step = 0; step < 6; ++step) {  // 12 samples, batch 5 -> 3 per epoch
        BatchView va = a.next(), vb = b.next();
        REQUIRE(va.images.n() == vb.images.n());
        for (int i = 0; i < va.images.n(); ++i) {
            CHECK(va.images.at(i, 0, 0, 0) == vb.images.at(i, 0, 0, 0));
            CHECK(va.labels[i] == vb.labels[i]);
            seen[static_cast<int>(va.images.at(i, 0, 0, 0))]++;
        }
    }
    // Two epochs: each of the 12 samples appears exactly twice.
    CHECK(seen.size() == 12);
    for (const auto& [id, count] : seen) {
        CHECK(count == 2);
        (void)id;
    }

    // Different epochs use different permutations (with overwhelming odds).
    BatchIterator c(ds, 12, 42);
    BatchView e0 = c.next();
    BatchView e1 = c.next();
    bool any_diff = false;
    for (int i = 0; i < 12; ++i) {
        if (e0.images.at(i, 0, 0, 0) != e1.images.at(i, 0, 0, 0)) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("batch iterator restore reproduces the stream") {
    Dataset ds = synthetic::make_stroke_dataset(8, 2, 6, 6, 1, 8, 9);
    for (int i = 0; i < ds.size(); ++i) ds.images.at(i, 0, 0, 0) = i;
    BatchIterator a(ds, 5, 17);
    for (int step = 0; step < 4; ++step) a.next();
    const std::uint64_t epoch = a.epoch(), cursor = a.cursor();

    BatchIterator b(ds, 5, 17);
    b.restore(epoch, cursor);
    for (int step = 0; step < 5; ++step) {
        BatchView va = a.next(), vb = b.next();
        REQUIRE(va.images.n() == vb.images.n());
        for (int i = 0; i < va.images.n(); ++i) {
            CHECK(va.images.at(i, 0, 0, 0) == vb.images.at(i, 0, 0, 0));
        }
    }
}

TEST_CASE("ppm roundtrip and image-folder loading") {
    TempDir tmp("imgfolder");
    fs::create_directories(tmp.path / "class_a");
    fs::create_directories(tmp.path / "class_b");

    PpmImage img;
    img.width = 4;
    img.height = 3;
    img.rgb.assign(4 * 3 * 3, 0);
    img.rgb[0] = 255;       // (0,0) red
    img.rgb[3 * 1 + 1] = 128;  // (0,1) green
    write_ppm((tmp.path / "class_a" / "one.ppm").string(), img);
    write_ppm((tmp.path / "class_b" / "two.ppm").string(), img);

    PpmImage back = read_ppm((tmp.path / "class_a" / "one.ppm").string());
    CHECK(back.width == 4);
    CHECK(back.height == 3);
    CHECK(back.rgb == img.rgb);

    Dataset ds = load_image_folder(tmp.path.string());
    CHECK(ds.size() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.images.at(0, 0, 0, 0) == 1.0);
    CHECK(ds.images.at(0, 1, 0, 1) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
    CHECK(ds.images.at(0, 2, 0, 0) == 0.0);
}

TEST_CASE("synthetic stroke corpus is non-degenerate and within range") {
    Dataset ds = synthetic::make_stroke_dataset(10, 4, 14, 14, 1, 10, 11);
    double max_v = 0.0;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        CHECK(ds.images.data()[i] >= 0.0);
        CHECK(ds.images.data()[i] <= 1.0);
        max_v = std::max(max_v, ds.images.data()[i]);
    }
    CHECK(max_v > 0.5);
}
