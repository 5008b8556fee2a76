#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "golden.hpp"
#include "homedqn/nn.hpp"
#include "test_support.hpp"

using namespace homedqn;

namespace {

Layer<double> conv_layer(int filters, int in_ch, int field, int pad, int stride, int in_side) {
  Layer<double> l;
  l.kind = LayerKind::conv;
  l.out_ch = filters;
  l.in_ch = in_ch;
  l.field = field;
  l.pad = pad;
  l.stride = stride;
  l.in_side = in_side;
  l.out_side = (in_side + 2 * pad - field) / stride + 1;
  l.weights.assign(static_cast<std::size_t>(filters * in_ch * field * field), 0.0);
  l.biases.assign(static_cast<std::size_t>(filters), 0.0);
  return l;
}

Layer<double> fc_layer(int out, int in) {
  Layer<double> l;
  l.kind = LayerKind::fc;
  l.out_ch = out;
  l.in_ch = in;
  l.weights.assign(static_cast<std::size_t>(out * in), 0.0);
  l.biases.assign(static_cast<std::size_t>(out), 0.0);
  return l;
}

std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

NetworkSpec small_spec() {
  NetworkSpec s;
  s.name = "small";
  s.input_side = 8;
  s.convs = {{2, 3, 1, 2}, {3, 2, 0, 1}};
  s.fc = {6, 5};
  return s;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("desk shape chain") {
    const auto shapes = NetworkSpec::desk().shapes();
    const std::vector<FeatureShape> expected{{8, 16}, {16, 7}, {32, 5}, {128, 1}, {33, 1}};
    CHECK(shapes == expected);
    CHECK(shapes[2].size() == 800);
  }

  TEST_CASE("full shape chain") {
    const auto shapes = NetworkSpec::full().shapes();
    const std::vector<FeatureShape> expected{{16, 64}, {32, 21}, {64, 10}, {64, 8}, {512, 1}, {33, 1}};
    CHECK(shapes == expected);
    CHECK(shapes[3].size() == 4096);
  }

  TEST_CASE("invalid chains are rejected") {
    auto s = NetworkSpec::desk();
    s.convs.push_back({8, 9, 0, 1});
    CHECK_THROWS_AS(s.shapes(), Error);
    CHECK_THROWS_AS(Network<float>{s}, Error);
    NetworkSpec empty;
    empty.input_side = 4;
    CHECK_THROWS_AS(empty.shapes(), Error);
    CHECK_THROWS_AS(NetworkSpec::by_name("tiny"), Error);
    std::vector<Layer<double>> mismatched{fc_layer(3, 4), fc_layer(2, 5)};
    CHECK_THROWS_AS(Network<double>{mismatched}, Error);
  }

  TEST_CASE("convolution output side") {
    CHECK(conv_layer(1, 1, 4, 0, 3, 64).out_side == 21);
    NetworkSpec s;
    s.input_side = 64;
    s.convs = {{1, 4, 0, 3}};
    CHECK(s.shapes().front() == FeatureShape{1, 21});
  }

  TEST_CASE("identity convolution returns its input") {
    auto l = conv_layer(1, 1, 1, 0, 1, 5);
    l.weights = {1.0};
    Network<double> net({l});
    Rng rng(1);
    const auto x = random_vector(25, rng, 0, 1);
    const auto y = net.forward(x, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
  }

  TEST_CASE("rectifier forward and backward") {
    auto l = fc_layer(3, 3);
    l.weights = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    Network<double> net({l, fc_layer(1, 3)});
    net.forward(std::vector<double>{-1, 0, 2}, 1);
    const auto a = net.activation(0);
    CHECK(a[0] == 0);
    CHECK(a[1] == 0);
    CHECK(a[2] == 2);
    net.layers()[1].weights = {5, 5, 5};
    net.forward(std::vector<double>{-1, 0, 2}, 1);
    auto g = net.make_gradients();
    net.backward(std::vector<double>{1}, g);
    CHECK(g.weights[0][0] == 0);
    CHECK(g.biases[0][0] == 0);
    CHECK(g.biases[0][2] == 5);
  }

  TEST_CASE("identity fully connected layer returns its input") {
    auto l = fc_layer(4, 4);
    for (int i = 0; i < 4; ++i) l.weights[static_cast<std::size_t>(i * 4 + i)] = 1;
    Network<double> net({l});
    const std::vector<double> x{0.5, -2, 3, 0};
    const auto y = net.forward(x, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }

  TEST_CASE("zero parameters give zero outputs") {
    Network<float> net(NetworkSpec::desk());
    std::vector<float> x(net.input_size(), 0.7f);
    const auto y = net.forward(x, 1);
    REQUIRE(y.size() == 33);
    for (float v : y) CHECK(v == 0.0f);
  }

  TEST_CASE("input size mismatch is rejected") {
    Network<float> net(NetworkSpec::desk());
    std::vector<float> x(10);
    CHECK_THROWS_AS(net.forward(x, 1), Error);
    auto g = net.make_gradients();
    CHECK_THROWS_AS(net.backward(std::vector<float>(33), g), Error);
  }

  TEST_CASE("non-finite activations abort") {
    Network<float> net(NetworkSpec::desk());
    net.layers()[0].biases[0] = std::numeric_limits<float>::infinity();
    std::vector<float> x(net.input_size(), 0.5f);
    CHECK_THROWS_AS(net.forward(x, 1), Error);
  }

  TEST_CASE("one-hot output gradient reaches only that bias") {
    Network<double> net(small_spec());
    net.init_glorot(3);
    Rng rng(4);
    const auto x = random_vector(net.input_size(), rng, 0, 1);
    net.forward(x, 1);
    std::vector<double> d(net.output_size(), 0.0);
    d[2] = 0.75;
    auto g = net.make_gradients();
    net.backward(d, g);
    const auto& last = g.biases.back();
    for (std::size_t a = 0; a < last.size(); ++a) CHECK(last[a] == (a == 2 ? 0.75 : 0.0));
  }

  TEST_CASE("zero output gradient gives zero parameter gradients") {
    Network<double> net(small_spec());
    net.init_glorot(5);
    Rng rng(6);
    net.forward(random_vector(net.input_size() * 2, rng, 0, 1), 2);
    auto g = net.make_gradients();
    net.backward(std::vector<double>(net.output_size() * 2, 0.0), g);
    for (const auto& t : g.weights) {
      for (double v : t) CHECK(v == 0);
    }
    for (const auto& t : g.biases) {
      for (double v : t) CHECK(v == 0);
    }
  }

  TEST_CASE("batched forward equals per-item forward") {
    Network<double> net(small_spec());
    net.init_glorot(7);
    Rng rng(8);
    const auto x = random_vector(net.input_size() * 3, rng, 0, 1);
    const auto out = net.forward(x, 3);
    const std::vector<double> all(out.begin(), out.end());
    for (int b = 0; b < 3; ++b) {
      const std::vector<double> one(x.begin() + static_cast<std::ptrdiff_t>(b * net.input_size()),
                                    x.begin() + static_cast<std::ptrdiff_t>((b + 1) * net.input_size()));
      const auto y = net.forward(one, 1);
      for (std::size_t a = 0; a < y.size(); ++a) {
        CHECK(y[a] == doctest::Approx(all[static_cast<std::size_t>(b) * y.size() + a]));
      }
    }
  }

  TEST_CASE("convolution and fully connected layers are linear in the input") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      auto conv = conv_layer(3, 2, 3, 1, 2, 7);
      for (auto& w : conv.weights) w = rng.uniform(-1, 1);
      auto fc = fc_layer(4, 6);
      for (auto& w : fc.weights) w = rng.uniform(-1, 1);
      for (auto* l : {&conv, &fc}) {
        Network<double> net({*l});
        const auto a = random_vector(net.input_size(), rng);
        const auto b = random_vector(net.input_size(), rng);
        std::vector<double> sum(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
        // A single layer is followed by no rectifier, so it is exactly affine.
        const auto fa = net.forward(a, 1);
        const std::vector<double> ya(fa.begin(), fa.end());
        const auto fb = net.forward(b, 1);
        const std::vector<double> yb(fb.begin(), fb.end());
        const auto ys = net.forward(sum, 1);
        for (std::size_t i = 0; i < ys.size(); ++i) CHECK(ys[i] == doctest::Approx(ya[i] + yb[i]));
      }
    }
  }

  TEST_CASE("rectifier is idempotent") {
    auto l = fc_layer(5, 5);
    for (int i = 0; i < 5; ++i) l.weights[static_cast<std::size_t>(i * 5 + i)] = 1;
    Network<double> net({l, fc_layer(1, 5)});
    Rng rng(10);
    net.forward(random_vector(5, rng), 1);
    const std::vector<double> once(net.activation(0).begin(), net.activation(0).end());
    net.forward(once, 1);
    const auto twice = net.activation(0);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == once[i]);
  }

  TEST_CASE("convolution weight gradient matches finite differences") {
    auto l = conv_layer(1, 1, 3, 0, 1, 6);
    Rng rng(11);
    for (auto& w : l.weights) w = rng.uniform(-1, 1);
    l.biases[0] = 0.2;
    Network<double> net({l});
    const auto x = random_vector(36, rng);
    const auto coeff = random_vector(16, rng);
    auto loss = [&] {
      const auto y = net.forward(x, 1);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += coeff[i] * y[i];
      return s;
    };
    loss();
    auto g = net.make_gradients();
    net.backward(coeff, g);
    double worst = 0;
    for (std::size_t i = 0; i < 9; ++i) {
      auto& w = net.layers()[0].weights[i];
      const double saved = w;
      w = saved + 1e-3;
      const double up = loss();
      w = saved - 1e-3;
      const double down = loss();
      w = saved;
      const double numeric = (up - down) / 2e-3;
      worst = std::max(worst, std::abs(numeric - g.weights[0][i]) / std::max(std::abs(numeric), 1e-7));
    }
    CHECK(worst < 1e-3);
  }

  TEST_CASE("finite difference check") {
    FiniteDiffOptions opt;
    opt.per_tensor = 0;
    const auto small = finite_diff_check(small_spec(), opt);
    CHECK(small.passed);
    CHECK(small.layers.size() == 4);
    for (const auto& l : small.layers) CHECK(l.checked > 0);

    FiniteDiffOptions desk;
    desk.seed = 1;
    const auto r = finite_diff_check(NetworkSpec::desk(), desk);
    CHECK(r.passed);
    for (const auto& l : r.layers) CHECK(l.max_rel_error < 1e-3);

    for (std::size_t layer = 0; layer < 4; ++layer) {
      auto bad = opt;
      bad.mutate_layer = layer;
      CHECK_FALSE(finite_diff_check(small_spec(), bad).passed);
    }

    auto zero = opt;
    zero.zero_input = true;
    zero.zero_weights = true;
    const auto z = finite_diff_check(small_spec(), zero);
    CHECK(z.passed);
    CHECK(z.max_rel_error < 1e-12);
  }

  TEST_CASE("rmsprop") {
    auto l = fc_layer(1, 1);
    l.weights = {2.0};
    Network<double> net({l});
    auto g = net.make_gradients();

    RmsProp<double> still(net, {0.1, 0.0, 0.0});
    still.step(net, g);
    CHECK(net.layers()[0].weights[0] == 2.0);
    CHECK(net.layers()[0].biases[0] == 0.0);

    RmsProp<double> scalar(net, {0.1, 0.0, 0.0});
    g.weights[0][0] = 3;
    scalar.step(net, g);
    CHECK(scalar.accumulators().weights[0][0] == 9);
    CHECK(net.layers()[0].weights[0] == doctest::Approx(2.1));

    RmsProp<double> steady(net, {0.01, 0.95, 1e-6});
    double before = net.layers()[0].weights[0];
    double delta = 0;
    for (int i = 0; i < 500; ++i) {
      steady.step(net, g);
      delta = net.layers()[0].weights[0] - before;
      before = net.layers()[0].weights[0];
    }
    CHECK(delta == doctest::Approx(0.01).epsilon(1e-3));
    for (double a : steady.accumulators().weights[0]) CHECK(a >= 0);

    CHECK_THROWS_AS(RmsProp<double>(net, {0.0, 0.5, 0.0}), Error);
    CHECK_THROWS_AS(RmsProp<double>(net, {0.1, 1.0, 0.0}), Error);
    RmsProp<double> blowup(net, {1e308, 0.0, 0.0});
    g.weights[0][0] = 1e-300;
    CHECK_THROWS_AS(blowup.step(net, g), Error);
  }

  TEST_CASE("weights round trip") {
    Network<float> net(NetworkSpec::desk());
    net.init_glorot(12);
    net.layers()[1].biases[3] = 0.25f;
    const auto bytes = serialize_weights(net);
    CHECK(bytes.substr(0, 4) == "AQNW");
    CHECK(deserialize_weights(bytes).same_parameters(net));
    const auto path = test::scratch_dir("weights") / "w.aqnw";
    save_weights(net, path);
    CHECK(load_weights(path).same_parameters(net));
    CHECK(serialize_weights(load_weights(path)) == bytes);
  }

  TEST_CASE("corrupt weights are rejected") {
    Network<float> net(NetworkSpec::desk());
    net.init_glorot(13);
    const auto bytes = serialize_weights(net);
    CHECK_THROWS_AS(deserialize_weights(bytes.substr(0, bytes.size() - 1)), Error);
    CHECK_THROWS_AS(deserialize_weights(bytes.substr(0, 10)), Error);
    CHECK_THROWS_AS(deserialize_weights(bytes + "x"), Error);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_weights(magic), Error);
    auto version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(deserialize_weights(version), Error);
    auto nan = bytes;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + nan.size() - 4, &q, 4);
    CHECK_THROWS_AS(deserialize_weights(nan), Error);
    CHECK_THROWS_AS(load_weights(test::scratch_dir("weights_missing") / "none.aqnw"), Error);
  }

  TEST_CASE("glorot initialization is bounded and seeded") {
    Network<float> a(NetworkSpec::desk());
    Network<float> b(NetworkSpec::desk());
    a.init_glorot(14);
    b.init_glorot(14);
    CHECK(a.same_parameters(b));
    b.init_glorot(15);
    CHECK_FALSE(a.same_parameters(b));
    for (const auto& l : a.layers()) {
      const double bound = std::sqrt(6.0 / (l.fan_in() + l.fan_out()));
      for (float w : l.weights) CHECK(std::abs(w) <= bound);
      for (float v : l.biases) CHECK(v == 0);
    }
  }

  TEST_CASE("seed-0 desk output matches the stored fixture") {
    const auto desk = World::load("desk", test::data_dir());
    CHECK(golden::q_text(desk) == read_file(test::fixture_dir() / golden::kQFile));
  }
}
