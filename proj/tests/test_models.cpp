#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "metasharp/mlp.hpp"
#include "metasharp/param_io.hpp"

using namespace metasharp;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/metasharp_models_") + name;
}

MlpSpec small_spec() {
    MlpSpec spec;
    spec.layer_sizes = {2, 4, 3};
    spec.activation = Activation::tanh_act;
    spec.head = Head::classification;
    return spec;
}

} // namespace

TEST_CASE("param_count follows the layer sizes") {
    MlpSpec spec;
    spec.layer_sizes = {3, 8, 5, 2};
    // 3*8+8 + 8*5+5 + 5*2+2 = 32 + 45 + 12 = 89
    CHECK(spec.param_count() == 89);
    CHECK(spec.input_dim() == 3);
    CHECK(spec.output_dim() == 2);
}

TEST_CASE("spec validation rejects degenerate shapes") {
    MlpSpec spec;
    spec.layer_sizes = {3};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.layer_sizes = {3, 0, 2};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.layer_sizes = {3, 4, 2};
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("init_params is deterministic in the seed with zero biases") {
    MlpSpec spec = small_spec();
    ParamVector a = init_params(spec, 42);
    ParamVector b = init_params(spec, 42);
    ParamVector c = init_params(spec, 43);
    CHECK(a.v == b.v);
    CHECK(a.v != c.v);
    CHECK(a.size() == spec.param_count());

    // Biases live after each weight block and start at zero; the first bias
    // block for layer 2->4 sits at offset 8.
    for (std::size_t i = 8; i < 12; ++i) CHECK(a[i] == 0.0);
    // Weights are bounded by 1/sqrt(fan_in).
    const double bound = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(std::abs(a[i]) <= bound);
        CHECK(a[i] != 0.0);
    }
}

TEST_CASE("canonical strings and hashes separate distinct specs") {
    MlpSpec a = small_spec();
    MlpSpec b = small_spec();
    CHECK(a.canonical_string() == b.canonical_string());
    CHECK(a.spec_hash() == b.spec_hash());
    b.activation = Activation::relu;
    CHECK(a.canonical_string() != b.canonical_string());
    CHECK(a.spec_hash() != b.spec_hash());
    MlpSpec c = small_spec();
    c.layer_sizes = {2, 4, 4};
    CHECK(a.spec_hash() != c.spec_hash());
}

TEST_CASE("mlp_forward produces the right shape and matches a hand network") {
    // Identity-free check on a 1-1 linear net: w = 2, b = 3, f(x) = 2x + 3.
    MlpSpec spec;
    spec.layer_sizes = {1, 1};
    spec.head = Head::regression;
    ParamVector theta(std::vector<double>{2.0, 3.0});
    Tensor x;
    x.shape = {3, 1};
    x.data = {0.0, 1.0, -2.0};
    Tensor out = mlp_forward(spec, theta, x);
    REQUIRE(out.shape == std::vector<std::size_t>{3, 1});
    CHECK(out.data[0] == doctest::Approx(3.0));
    CHECK(out.data[1] == doctest::Approx(5.0));
    CHECK(out.data[2] == doctest::Approx(-1.0));
}

TEST_CASE("task_loss on the linear net matches the closed form") {
    // Squared error of 2x+3 against targets, averaged over all entries.
    MlpSpec spec;
    spec.layer_sizes = {1, 1};
    spec.head = Head::regression;
    ParamVector theta(std::vector<double>{2.0, 3.0});
    LabeledBatch batch;
    batch.x.shape = {2, 1};
    batch.x.data = {1.0, 2.0};
    batch.y.shape = {2, 1};
    batch.y.data = {5.0, 6.0};
    // Predictions 5 and 7; errors 0 and 1 -> mse 0.5.
    LossGrad lg = task_loss(spec, theta, batch);
    CHECK(lg.loss == doctest::Approx(0.5));
    // d/dw = mean over rows of 2*(pred-y)*x = (0 + 2*1*2)/2 = 2
    CHECK(lg.grad[0] == doctest::Approx(2.0));
    // d/db = mean of 2*(pred-y) = (0 + 2)/2 = 1
    CHECK(lg.grad[1] == doctest::Approx(1.0));
}

TEST_CASE("task_loss rejects empty and mismatched batches") {
    MlpSpec spec = small_spec();
    ParamVector theta = init_params(spec, 0);
    LabeledBatch empty;
    empty.x.shape = {0, 2};
    CHECK_THROWS_AS(task_loss(spec, theta, empty), std::invalid_argument);

    LabeledBatch wrong;
    wrong.x.shape = {1, 5};
    wrong.x.data = {1, 2, 3, 4, 5};
    wrong.labels = {0};
    CHECK_THROWS_AS(task_loss(spec, theta, wrong), std::invalid_argument);
}

TEST_CASE("parameter files round-trip bitwise") {
    const std::string path = temp_path("params.bin");
    ParamVector theta(std::vector<double>{1.5, -2.25, 0.0, 1e-300, 3.14159});
    save_params(path, theta, 0xdeadbeefcafef00dull);
    LoadedParams back = load_params(path);
    CHECK(back.theta.v == theta.v);
    CHECK(back.spec_hash == 0xdeadbeefcafef00dull);
    std::remove(path.c_str());
}

TEST_CASE("parameter loader names the byte offset of a bad magic") {
    const std::string path = temp_path("badmagic.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out.write("XXXXXXXX", 8);
        std::uint64_t zero = 0;
        out.write(reinterpret_cast<const char*>(&zero), 8);
        out.write(reinterpret_cast<const char*>(&zero), 8);
    }
    try {
        (void)load_params(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("byte 0") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("parameter loader rejects truncated payloads with an offset") {
    const std::string path = temp_path("trunc.bin");
    ParamVector theta(std::vector<double>{1.0, 2.0, 3.0});
    save_params(path, theta, 7);
    // Drop the last 4 bytes of the payload.
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4));
    }
    CHECK_THROWS_AS((void)load_params(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint series round-trip, including an empty series") {
    const std::string path = temp_path("ckpt.bin");
    std::vector<ParamVector> thetas;
    thetas.emplace_back(std::vector<double>{1.0, 2.0});
    thetas.emplace_back(std::vector<double>{-3.5, 4.25});
    thetas.emplace_back(std::vector<double>{0.0, 1e-12});
    save_checkpoints(path, thetas, 99);
    LoadedCheckpoints back = load_checkpoints(path);
    REQUIRE(back.thetas.size() == 3);
    CHECK(back.spec_hash == 99);
    for (std::size_t i = 0; i < 3; ++i) CHECK(back.thetas[i].v == thetas[i].v);

    save_checkpoints(path, {}, 99);
    LoadedCheckpoints empty = load_checkpoints(path);
    CHECK(empty.thetas.empty());
    std::remove(path.c_str());
}

TEST_CASE("checkpoint writer rejects mixed dimensions") {
    std::vector<ParamVector> thetas;
    thetas.emplace_back(std::vector<double>{1.0, 2.0});
    thetas.emplace_back(std::vector<double>{1.0});
    CHECK_THROWS_AS(save_checkpoints(temp_path("mixed.bin"), thetas, 0), std::invalid_argument);
}
