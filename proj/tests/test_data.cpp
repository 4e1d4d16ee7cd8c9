#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "iseat/data.hpp"
#include "iseat/model.hpp"
#include "iseat/trainer.hpp"

using namespace iseat;

namespace {

namespace fs = std::filesystem;

fs::path tmp_file(const std::string& name) {
    return fs::temp_directory_path() / ("iseat_data_" + name);
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void be32(std::vector<unsigned char>& v, std::uint32_t x) {
    v.push_back(static_cast<unsigned char>(x >> 24));
    v.push_back(static_cast<unsigned char>(x >> 16));
    v.push_back(static_cast<unsigned char>(x >> 8));
    v.push_back(static_cast<unsigned char>(x));
}

}  // namespace

TEST_CASE("noiseless blobs collapse onto two fixed centers") {
    const auto ds = gen_synthetic(SyntheticKind::blobs, 6, 0.0, 123);
    CHECK(ds.size() == 6);
    std::set<std::pair<double, double>> points;
    for (std::size_t i = 0; i < 6; ++i)
        points.insert({ds.inputs.at(i, 0), ds.inputs.at(i, 1)});
    CHECK(points.size() == 2);  // exactly the two centers
    const auto again = gen_synthetic(SyntheticKind::blobs, 6, 0.0, 456);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(again.inputs.at(i, 0) == ds.inputs.at(i, 0));
        CHECK(again.inputs.at(i, 1) == ds.inputs.at(i, 1));
    }
}

TEST_CASE("same seed reproduces the dataset byte for byte") {
    for (const auto kind :
         {SyntheticKind::blobs, SyntheticKind::moons, SyntheticKind::circles}) {
        const auto a = gen_synthetic(kind, 101, 0.15, 7);
        const auto b = gen_synthetic(kind, 101, 0.15, 7);
        CHECK(a.inputs.values() == b.inputs.values());
        CHECK(a.labels == b.labels);
        const auto c = gen_synthetic(kind, 101, 0.15, 8);
        CHECK(a.inputs.values() != c.inputs.values());
    }
}

TEST_CASE("synthetic data stays in the unit box with balanced classes") {
    for (const auto kind :
         {SyntheticKind::blobs, SyntheticKind::moons, SyntheticKind::circles}) {
        const auto ds = gen_synthetic(kind, 201, 0.4, 3);
        ds.validate();
        int c0 = 0, c1 = 0;
        for (const int y : ds.labels) (y == 0 ? c0 : c1)++;
        CHECK(std::abs(c0 - c1) <= 1);
        for (const double v : ds.inputs.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS_AS(gen_synthetic(SyntheticKind::blobs, 1, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(gen_synthetic(SyntheticKind::blobs, 10, -0.1, 0), ConfigError);
}

TEST_CASE("moons defeat a linear model but not a deeper one") {
    const auto ds = gen_synthetic(SyntheticKind::moons, 200, 0.1, 11);
    const auto parts = split(ds, 0.3, 5);

    RunConfig rc;
    rc.method = Method::at;
    rc.attack.epsilon = 0.0;  // plain clean training
    rc.attack.steps = 1;
    rc.attack.step_size = 0.01;
    rc.eval_attack = rc.attack;
    rc.epochs = 150;
    rc.batch_size = 32;
    rc.lr.initial = 0.2;
    rc.lr.decay_fractions = {0.5, 0.75};
    rc.weight_decay = 0.0;
    rc.seed = 1;

    ModelSpec linear{{2, 2}, nd::Activation::relu, 2};
    const auto rl = run_training(init_params<double>(linear), parts.train, parts.test, rc);

    ModelSpec deep{{2, 16, 16, 2}, nd::Activation::relu, 2};
    const auto rd = run_training(init_params<double>(deep), parts.train, parts.test, rc);

    CHECK(rd.metrics.back().eval_clean_acc > rl.metrics.back().eval_clean_acc);
    CHECK(rd.metrics.back().eval_clean_acc >= 0.9);
}

TEST_CASE("idx fixture parses into the expected matrix") {
    // two 2x2 images with hand-written bytes
    std::vector<unsigned char> img;
    be32(img, 0x00000803);
    be32(img, 2);
    be32(img, 2);
    be32(img, 2);
    for (const unsigned char b : {0, 51, 102, 153, 204, 255, 255, 0}) img.push_back(b);
    std::vector<unsigned char> lab;
    be32(lab, 0x00000801);
    be32(lab, 2);
    lab.push_back(1);
    lab.push_back(0);

    const auto ip = tmp_file("fix_images.idx");
    const auto lp = tmp_file("fix_labels.idx");
    write_bytes(ip, img);
    write_bytes(lp, lab);

    const auto ds = load_idx(ip.string(), lp.string());
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 4);
    CHECK(ds.labels == std::vector<int>{1, 0});
    const std::vector<double> expected{0.0,         51.0 / 255,  102.0 / 255, 153.0 / 255,
                                       204.0 / 255, 1.0,         1.0,         0.0};
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(ds.inputs[i] == doctest::Approx(expected[i]).epsilon(1e-15));
    CHECK(ds.provenance.rfind("digest:", 0) == 0);

    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("single max pixel normalizes to exactly one") {
    std::vector<unsigned char> img;
    be32(img, 0x00000803);
    be32(img, 1);
    be32(img, 1);
    be32(img, 1);
    img.push_back(255);
    std::vector<unsigned char> lab;
    be32(lab, 0x00000801);
    be32(lab, 1);
    lab.push_back(0);
    const auto ip = tmp_file("one_images.idx");
    const auto lp = tmp_file("one_labels.idx");
    write_bytes(ip, img);
    write_bytes(lp, lab);
    const auto ds = load_idx(ip.string(), lp.string());
    CHECK(ds.inputs[0] == 1.0);
    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("idx rejections are classified with byte offsets") {
    const auto ip = tmp_file("bad_images.idx");
    const auto lp = tmp_file("bad_labels.idx");

    std::vector<unsigned char> lab_ok;
    be32(lab_ok, 0x00000801);
    be32(lab_ok, 1);
    lab_ok.push_back(0);
    write_bytes(lp, lab_ok);

    SUBCASE("bad magic") {
        std::vector<unsigned char> img;
        be32(img, 0xdeadbeef);
        be32(img, 1);
        be32(img, 1);
        be32(img, 1);
        img.push_back(9);
        write_bytes(ip, img);
        try {
            load_idx(ip.string(), lp.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(e.kind == DataError::Kind::bad_magic);
            CHECK(e.offset == 0);
        }
    }

    SUBCASE("truncated pixel data") {
        std::vector<unsigned char> img;
        be32(img, 0x00000803);
        be32(img, 2);
        be32(img, 2);
        be32(img, 2);
        img.push_back(1);  // 1 of 8 pixel bytes
        write_bytes(ip, img);
        try {
            load_idx(ip.string(), lp.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(e.kind == DataError::Kind::truncated);
        }
    }

    SUBCASE("count mismatch names both values") {
        std::vector<unsigned char> img;
        be32(img, 0x00000803);
        be32(img, 3);
        be32(img, 1);
        be32(img, 1);
        img.push_back(1);
        img.push_back(2);
        img.push_back(3);
        write_bytes(ip, img);
        try {
            load_idx(ip.string(), lp.string());
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(e.kind == DataError::Kind::count_mismatch);
            const std::string msg = e.what();
            CHECK(msg.find("1") != std::string::npos);
            CHECK(msg.find("3") != std::string::npos);
        }
    }

    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("save_idx round-trips through load_idx") {
    auto ds = gen_synthetic(SyntheticKind::blobs, 12, 0.3, 21);
    // widen to a 1x2 'image' layout
    const auto ip = tmp_file("rt_images.idx");
    const auto lp = tmp_file("rt_labels.idx");
    save_idx(ds, 1, 2, ip.string(), lp.string());
    const auto back = load_idx(ip.string(), lp.string());
    CHECK(back.size() == ds.size());
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.inputs.size(); ++i)
        CHECK(std::abs(back.inputs[i] - ds.inputs[i]) <= 0.5 / 255.0 + 1e-12);
    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("split is disjoint, exhaustive, and seeded") {
    const auto ds = gen_synthetic(SyntheticKind::circles, 10, 0.05, 9);
    const auto parts = split(ds, 0.5, 77);
    CHECK(parts.train.size() == 5);
    CHECK(parts.test.size() == 5);

    // disjoint + exhaustive: every original row appears exactly once
    std::multiset<std::pair<double, double>> all;
    for (std::size_t i = 0; i < 10; ++i)
        all.insert({ds.inputs.at(i, 0), ds.inputs.at(i, 1)});
    std::multiset<std::pair<double, double>> seen;
    for (const auto* part : {&parts.train, &parts.test})
        for (std::size_t i = 0; i < part->size(); ++i)
            seen.insert({part->inputs.at(i, 0), part->inputs.at(i, 1)});
    CHECK(all == seen);

    const auto parts2 = split(ds, 0.5, 77);
    CHECK(parts2.train.inputs.values() == parts.train.inputs.values());

    CHECK_THROWS_AS(split(ds, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(ds, 1.0, 1), ConfigError);
}

TEST_CASE("epoch batches partition the index set and depend only on (seed, epoch)") {
    const auto batches = batch_indices(23, 5, 3, 4);
    CHECK(batches.size() == 5);
    CHECK(batches.back().size() == 3);  // last partial batch kept
    std::set<std::size_t> seen;
    for (const auto& b : batches)
        for (const std::size_t i : b) CHECK(seen.insert(i).second);
    CHECK(seen.size() == 23);

    CHECK(batch_indices(23, 5, 3, 4) == batches);
    CHECK(batch_indices(23, 5, 3, 5) != batches);
    CHECK(batch_indices(23, 5, 4, 4) != batches);
}
