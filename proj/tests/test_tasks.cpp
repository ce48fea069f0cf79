#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "metasharp/idx_io.hpp"
#include "metasharp/tasks.hpp"

using namespace metasharp;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/metasharp_tasks_") + name;
}

} // namespace

TEST_CASE("sinusoid tasks are deterministic and respect the documented ranges") {
    TaskBatch a = sinusoid_task(10, 15, 123);
    TaskBatch b = sinusoid_task(10, 15, 123);
    TaskBatch c = sinusoid_task(10, 15, 124);
    CHECK(a.support.x.data == b.support.x.data);
    CHECK(a.query.y.data == b.query.y.data);
    CHECK(a.support.x.data != c.support.x.data);

    CHECK(a.support.size() == 10);
    CHECK(a.query.size() == 15);
    CHECK(a.desc.family == "sinusoid");
    CHECK(a.desc.amplitude >= 0.1);
    CHECK(a.desc.amplitude <= 5.0);
    CHECK(a.desc.phase >= 0.0);
    CHECK(a.desc.phase <= 3.15);

    // Every target is amplitude * sin(x + phase) for the drawn parameters.
    for (std::size_t i = 0; i < a.support.size(); ++i) {
        const double x = a.support.x.data[i];
        CHECK(x >= -5.0);
        CHECK(x <= 5.0);
        const double want = a.desc.amplitude * std::sin(x + a.desc.phase);
        CHECK(a.support.y.data[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("distinct sinusoid seeds draw distinct tasks") {
    std::set<double> amplitudes;
    for (std::uint64_t s = 0; s < 50; ++s) amplitudes.insert(sinusoid_task(1, 1, s).desc.amplitude);
    CHECK(amplitudes.size() == 50);
}

TEST_CASE("blob episodes separate their centers and label both splits") {
    EpisodeSpec spec;
    spec.n_way = 4;
    spec.k_shot = 6;
    spec.q_query = 3;
    spec.seed = 9;
    TaskBatch tb = blob_classification_task(spec, 2, 3.0);
    CHECK(tb.support.size() == 4 * 6);
    CHECK(tb.query.size() == 4 * 3);
    CHECK(tb.desc.family == "blobs");
    REQUIRE(tb.desc.centers.size() == 4 * 2);

    // Pairwise center distance >= separation.
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            const double dx = tb.desc.centers[2 * i] - tb.desc.centers[2 * j];
            const double dy = tb.desc.centers[2 * i + 1] - tb.desc.centers[2 * j + 1];
            CHECK(std::sqrt(dx * dx + dy * dy) >= 3.0);
        }
    }

    // Every class appears exactly k_shot times in the support set.
    std::vector<int> counts(4, 0);
    for (int l : tb.support.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < 4);
        counts[static_cast<std::size_t>(l)]++;
    }
    for (int c : counts) CHECK(c == 6);

    // Points cluster around their own center: with separation 3 and unit
    // variance, the vast majority of examples sit closest to their label's
    // center.
    std::size_t correct = 0;
    for (std::size_t n = 0; n < tb.support.size(); ++n) {
        double best = 1e300;
        int best_c = -1;
        for (std::size_t c = 0; c < 4; ++c) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < 2; ++k) {
                const double diff = tb.support.x.data[n * 2 + k] - tb.desc.centers[c * 2 + k];
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_c = static_cast<int>(c);
            }
        }
        if (best_c == tb.support.labels[n]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(tb.support.size()) > 0.8);
}

TEST_CASE("infeasible blob packings fail with a bounded-retry error") {
    EpisodeSpec spec;
    spec.n_way = 64;
    spec.k_shot = 1;
    spec.q_query = 1;
    spec.seed = 1;
    // The 1-D sampling interval holds roughly a dozen unit-separated points,
    // far fewer than 64, so placement must exhaust its retry budget.
    CHECK_THROWS_AS(blob_classification_task(spec, 1, 1.0), std::runtime_error);
}

TEST_CASE("episode spec validation") {
    EpisodeSpec spec;
    spec.n_way = 1;
    CHECK_THROWS_AS(spec.validate(true), std::invalid_argument);
    CHECK_NOTHROW(spec.validate(false)); // regression families ignore n_way
    spec.n_way = 2;
    spec.k_shot = 0;
    CHECK_THROWS_AS(spec.validate(true), std::invalid_argument);
}

TEST_CASE("idx round-trips unsigned bytes with the documented scaling") {
    const std::string path = temp_path("u8.idx");
    // Single 1x1 image with pixel 255 must load as exactly 1.0.
    write_idx_u8(path, {1, 1, 1}, {255});
    IdxData d = load_idx(path);
    CHECK(d.type_code == 0x08);
    REQUIRE(d.dims == std::vector<std::size_t>{1, 1, 1});
    REQUIRE(d.values.size() == 1);
    CHECK(d.values[0] == 1.0);

    write_idx_u8(path, {4}, {0, 51, 102, 255});
    d = load_idx(path);
    CHECK(d.values[0] == 0.0);
    CHECK(d.values[1] == doctest::Approx(51.0 / 255.0).epsilon(1e-15));
    CHECK(d.values[3] == 1.0);
    std::remove(path.c_str());
}

TEST_CASE("idx round-trips float64 payloads exactly") {
    const std::string path = temp_path("f64.idx");
    std::vector<double> vals = {1.5, -2.25, 3.14159265358979, 0.0};
    write_idx_f64(path, {2, 2}, vals);
    IdxData d = load_idx(path);
    CHECK(d.type_code == 0x0E);
    CHECK(d.dims == std::vector<std::size_t>{2, 2});
    CHECK(d.values == vals);
    std::remove(path.c_str());
}

TEST_CASE("idx accepts all four documented type codes and rejects others") {
    const std::string path = temp_path("codes.idx");
    auto write_raw = [&](std::uint8_t code, const std::vector<std::uint8_t>& payload) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const std::uint8_t header[4] = {0, 0, code, 1};
        out.write(reinterpret_cast<const char*>(header), 4);
        const std::uint8_t dim[4] = {0, 0, 0, static_cast<std::uint8_t>(payload.size() /
                                                                        ((code == 0x0D) ? 4
                                                                         : (code == 0x0E) ? 8
                                                                                          : 1))};
        out.write(reinterpret_cast<const char*>(dim), 4);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
    };

    // signed byte: -128 maps to 0.0, 127 maps to 255/255 = 1.0.
    write_raw(0x09, {0x80, 0x7F});
    IdxData d = load_idx(path);
    CHECK(d.type_code == 0x09);
    CHECK(d.values[0] == 0.0);
    CHECK(d.values[1] == 1.0);

    // float32 big-endian 1.0 = 3F 80 00 00.
    write_raw(0x0D, {0x3F, 0x80, 0x00, 0x00});
    d = load_idx(path);
    CHECK(d.type_code == 0x0D);
    CHECK(d.values[0] == 1.0);

    // float64 big-endian 1.0 = 3F F0 00 ...
    write_raw(0x0E, {0x3F, 0xF0, 0, 0, 0, 0, 0, 0});
    d = load_idx(path);
    CHECK(d.values[0] == 1.0);

    // 0x0B (short) is not in the accepted set.
    write_raw(0x0B, {0x00});
    CHECK_THROWS_AS(load_idx(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("idx errors name the byte offset") {
    const std::string path = temp_path("bad.idx");
    {
        std::ofstream out(path, std::ios::binary);
        const std::uint8_t header[4] = {1, 0, 0x08, 1}; // nonzero lead byte
        out.write(reinterpret_cast<const char*>(header), 4);
    }
    try {
        (void)load_idx(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }

    // Truncated payload: header promises 4 values, provides 2.
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const std::uint8_t header[4] = {0, 0, 0x08, 1};
        const std::uint8_t dim[4] = {0, 0, 0, 4};
        const std::uint8_t payload[2] = {1, 2};
        out.write(reinterpret_cast<const char*>(header), 4);
        out.write(reinterpret_cast<const char*>(dim), 4);
        out.write(reinterpret_cast<const char*>(payload), 2);
    }
    CHECK_THROWS_AS(load_idx(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("mean_pool_images halves square images until they fit") {
    // 1 image, 4x4, constant blocks so pooling is exact.
    Tensor img;
    img.shape = {1, 4, 4};
    img.data = {
        1, 1, 2, 2, //
        1, 1, 2, 2, //
        3, 3, 4, 4, //
        3, 3, 4, 4, //
    };
    Tensor pooled = mean_pool_images(img, 4);
    REQUIRE(pooled.shape == std::vector<std::size_t>{1, 4});
    CHECK(pooled.data == std::vector<double>{1, 2, 3, 4});

    // Already small enough: flattens without pooling.
    Tensor same = mean_pool_images(img, 16);
    REQUIRE(same.shape == std::vector<std::size_t>{1, 16});
    CHECK(same.data == img.data);
}

TEST_CASE("dataset_from_idx builds a labeled dataset") {
    const std::string imgs = temp_path("imgs.idx");
    const std::string labs = temp_path("labs.idx");
    // 6 images 2x2, labels 0,1,2,0,1,2.
    std::vector<std::uint8_t> pix;
    for (std::uint8_t n = 0; n < 6; ++n)
        for (int k = 0; k < 4; ++k) pix.push_back(static_cast<std::uint8_t>(n * 10 + k));
    write_idx_u8(imgs, {6, 2, 2}, pix);
    write_idx_u8(labs, {6}, {0, 1, 2, 0, 1, 2});
    Dataset d = dataset_from_idx(imgs, labs, 64);
    CHECK(d.features.rows() == 6);
    CHECK(d.features.cols() == 4);
    CHECK(d.n_classes == 3);
    CHECK(d.labels == std::vector<int>{0, 1, 2, 0, 1, 2});
    CHECK(d.features.data[0] == 0.0);
    CHECK(d.features.data[1] == doctest::Approx(1.0 / 255.0));
    std::remove(imgs.c_str());
    std::remove(labs.c_str());
}

TEST_CASE("dataset episodes are disjoint, remapped, and deterministic") {
    // 3 classes with 8 examples each; feature value encodes the source row.
    Dataset d;
    d.features.shape = {24, 1};
    d.features.data.resize(24);
    d.labels.resize(24);
    d.n_classes = 3;
    for (std::size_t i = 0; i < 24; ++i) {
        d.features.data[i] = static_cast<double>(i);
        d.labels[i] = static_cast<int>(i % 3);
    }
    d.validate();

    EpisodeSpec spec;
    spec.n_way = 2;
    spec.k_shot = 3;
    spec.q_query = 2;
    spec.seed = 77;
    TaskBatch a = episode_from_dataset(d, spec);
    TaskBatch b = episode_from_dataset(d, spec);
    CHECK(a.support.x.data == b.support.x.data);
    CHECK(a.query.x.data == b.query.x.data);

    CHECK(a.support.size() == 6);
    CHECK(a.query.size() == 4);

    // Labels are remapped into [0, n_way).
    for (int l : a.support.labels) {
        CHECK(l >= 0);
        CHECK(l < 2);
    }

    // Support and query rows are disjoint draws from the source.
    std::set<double> sup(a.support.x.data.begin(), a.support.x.data.end());
    for (double v : a.query.x.data) CHECK(sup.count(v) == 0);

    // Remapped labels agree with the original class of each source row.
    // Episode class c must collect rows whose source labels are all equal.
    for (int episode_class = 0; episode_class < 2; ++episode_class) {
        std::set<int> sources;
        for (std::size_t i = 0; i < a.support.size(); ++i) {
            if (a.support.labels[i] == episode_class) {
                const int row = static_cast<int>(a.support.x.data[i]);
                sources.insert(row % 3);
            }
        }
        CHECK(sources.size() == 1);
    }
}

TEST_CASE("dataset episodes fail loudly when a class is underpopulated") {
    Dataset d;
    d.features.shape = {4, 1};
    d.features.data = {0, 1, 2, 3};
    d.labels = {0, 0, 0, 1}; // class 1 has a single example
    d.n_classes = 2;

    EpisodeSpec spec;
    spec.n_way = 2;
    spec.k_shot = 2;
    spec.q_query = 1;
    spec.seed = 0;
    try {
        (void)episode_from_dataset(d, spec);
        FAIL("expected an underpopulated-class error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("class") != std::string::npos);
    }
}

TEST_CASE("dataset validation rejects inconsistent label data") {
    Dataset d;
    d.features.shape = {2, 1};
    d.features.data = {0, 1};
    d.labels = {0};
    d.n_classes = 1;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    d.labels = {0, 5};
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
}
