#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "futurefeat/autodiff.hpp"

using namespace futurefeat::ad;
using P = Parameter<double>;

namespace {

P random_param(std::string name, std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  P p{std::move(name), Tensor<double>(std::move(shape))};
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& x : p.value.data) x = nd(rng);
  return p;
}

using Graph = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Loss = Σ wᵢ·outᵢ with fixed random weights, so every output entry matters.
double evaluate(const Graph& g, std::vector<P>& params, const std::vector<double>& weights, Gradients<double>* grads) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(tape.param(p));
  Var out = g(tape, vars);
  const auto& v = tape.value(out);
  Tensor<double> w({1, v.size()});
  std::copy_n(weights.begin(), v.size(), w.data.begin());
  Var flat = reshape(tape, out, {1, v.size()});
  Var loss = linear(tape, flat, tape.constant(std::move(w)));
  Var scalar = reshape(tape, loss, {1});
  if (grads) *grads = tape.backward(scalar);
  return tape.value(scalar)[0];
}

void check_gradients(const Graph& g, std::vector<P> params, double tol = 1e-6) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::vector<double> weights(4096);
  for (auto& w : weights) w = nd(rng);
  Gradients<double> grads;
  evaluate(g, params, weights, &grads);
  for (auto& p : params) {
    const auto* gp = grads.find(p);
    ASSERT_NE(gp, nullptr) << p.name;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i], h = 1e-5;
      p.value[i] = orig + h;
      const double up = evaluate(g, params, weights, nullptr);
      p.value[i] = orig - h;
      const double down = evaluate(g, params, weights, nullptr);
      p.value[i] = orig;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR((*gp)[i], numeric, tol * std::max(1.0, std::abs(numeric))) << p.name << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(Tape, ConstantsHaveNoGradient) {
  Tape<double> tape;
  Var c = tape.constant(Tensor<double>({1}, 3.0));
  EXPECT_FALSE(tape.requires_grad(c));
  EXPECT_EQ(tape.backward(scale(tape, c, 2.0)).size(), 0u);
}

TEST(Tape, BackwardNeedsScalar) {
  std::mt19937_64 rng(1);
  P p = random_param("p", {2, 2}, rng);
  Tape<double> tape;
  EXPECT_THROW(tape.backward(tape.param(p)), futurefeat::ValidationError);
}

TEST(Tape, FrozenParametersGetNoGradient) {
  std::mt19937_64 rng(2);
  P a = random_param("a", {1, 3}, rng), b = random_param("b", {1, 3}, rng);
  Tape<double> tape;
  const P* frozen[] = {&b};
  tape.freeze(frozen);
  auto grads = tape.backward(mse(tape, tape.param(a), tape.param(b)));
  EXPECT_NE(grads.find(a), nullptr);
  EXPECT_EQ(grads.find(b), nullptr);
}

TEST(Tape, InferenceTapeRecordsNoGradients) {
  std::mt19937_64 rng(3);
  P a = random_param("a", {1, 3}, rng);
  Tape<double> tape(false);
  Var v = tape.param(a);
  EXPECT_FALSE(tape.requires_grad(v));
  EXPECT_EQ(tape.backward(mse_to(tape, v, 0.0)).size(), 0u);
}

TEST(Tape, ReusedParameterAccumulates) {
  P a{"a", Tensor<double>({1}, 2.0)};
  Tape<double> tape;
  // d/da (a + a)² at a = 2 → 2·(2a)·2 = 16
  Var x = add(tape, tape.param(a), tape.param(a));
  auto grads = tape.backward(mse_to(tape, x, 0.0));
  EXPECT_DOUBLE_EQ((*grads.find(a))[0], 16.0);
}

TEST(Ops, ForwardValues) {
  Tape<double> tape;
  Tensor<double> x({1, 2, 3});
  for (std::size_t i = 0; i < 6; ++i) x[i] = double(i) - 2.5;
  Var v = tape.constant(x);
  const auto& r = tape.value(relu(tape, v));
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[5], 2.5);
  const auto& rev = tape.value(reverse_length(tape, v));
  EXPECT_EQ(rev.at3(0, 0, 0), x.at3(0, 0, 2));
  EXPECT_EQ(rev.at3(0, 1, 2), x.at3(0, 1, 0));
  const auto& m = tape.value(mean_length(tape, v));
  EXPECT_DOUBLE_EQ(m[0], -1.5);
  EXPECT_DOUBLE_EQ(m[1], 1.5);
  const auto& sl = tape.value(slice_length(tape, v, 1, 2));
  EXPECT_EQ(sl.shape, (std::vector<std::size_t>{1, 2, 2}));
  EXPECT_EQ(sl.at3(0, 1, 0), x.at3(0, 1, 1));
  const auto& sm = tape.value(softmax_channels(tape, v));
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(sm.at3(0, 0, l) + sm.at3(0, 1, l), 1.0, 1e-12);
}

TEST(Ops, ConvMatchesDirectLoop) {
  std::mt19937_64 rng(4);
  P x = random_param("x", {2, 3, 9}, rng), w = random_param("w", {4, 3, 3}, rng), b = random_param("b", {4}, rng);
  const ConvOptions opt{2, 2, 1, 2};
  Tape<double> tape;
  Var bv = tape.param(b);
  const auto& y = tape.value(conv1d(tape, tape.param(x), tape.param(w), &bv, opt));
  const std::size_t Lo = conv_output_length(9, 3, opt);
  ASSERT_EQ(y.shape, (std::vector<std::size_t>{2, 4, Lo}));
  for (std::size_t bb = 0; bb < 2; ++bb)
    for (std::size_t co = 0; co < 4; ++co)
      for (std::size_t o = 0; o < Lo; ++o) {
        double acc = b.value[co];
        for (std::size_t ci = 0; ci < 3; ++ci)
          for (std::size_t kk = 0; kk < 3; ++kk) {
            const long pos = long(o * 2 + kk * 2) - 2;
            if (pos >= 0 && pos < 9) acc += w.value.at3(co, ci, kk) * x.value.at3(bb, ci, std::size_t(pos));
          }
        EXPECT_NEAR(y.at3(bb, co, o), acc, 1e-12);
      }
}

TEST(Ops, SamePaddingLength) {
  for (std::size_t len : {1, 2, 5, 8, 16, 21})
    for (std::size_t stride : {1, 2})
      EXPECT_EQ(conv_output_length(len, 4, same_padding(len, 4, stride)), (len + stride - 1) / stride);
}

TEST(Gradcheck, Elementwise) {
  std::mt19937_64 rng(5);
  check_gradients([](auto& t, const auto& v) { return sum(t, v[0], v[1], 0.7, -1.3); },
                  {random_param("a", {2, 3}, rng), random_param("b", {2, 3}, rng)});
  check_gradients([](auto& t, const auto& v) { return relu(t, v[0]); }, {random_param("a", {3, 4}, rng)});
  check_gradients([](auto& t, const auto& v) { return leaky_relu(t, v[0], 0.2); }, {random_param("a", {3, 4}, rng)});
  check_gradients([](auto& t, const auto& v) { return scale(t, v[0], 3.0); }, {random_param("a", {5}, rng)});
}

TEST(Gradcheck, ShapeOps) {
  std::mt19937_64 rng(6);
  const P a = random_param("a", {2, 3, 4}, rng), b = random_param("b", {1, 3, 4}, rng);
  check_gradients([](auto& t, const auto& v) { return concat_batch(t, std::vector<Var>{v[0], v[1], v[0]}); }, {a, b});
  check_gradients([](auto& t, const auto& v) { return slice_batch(t, v[0], 1, 1); }, {a});
  check_gradients([](auto& t, const auto& v) { return slice_length(t, v[0], 1, 2); }, {a});
  check_gradients([](auto& t, const auto& v) { return concat_length(t, std::vector<Var>{v[0], reverse_length(t, v[0])}); }, {a});
  check_gradients([](auto& t, const auto& v) { return mean_length(t, v[0]); }, {b});
  check_gradients([](auto& t, const auto& v) { return reshape(t, v[0], {6, 4}); }, {a});
}

TEST(Gradcheck, Losses) {
  std::mt19937_64 rng(7);
  check_gradients([](auto& t, const auto& v) { return mse(t, v[0], v[1]); },
                  {random_param("a", {2, 5}, rng), random_param("b", {2, 5}, rng)});
  check_gradients([](auto& t, const auto& v) { return mse_to(t, v[0], 1.0); }, {random_param("a", {3, 1}, rng)});
  static const std::vector<int> labels{0, 2, 1, 1, 0, 2};
  check_gradients([](auto& t, const auto& v) { return cross_entropy(t, v[0], std::span<const int>(labels)); },
                  {random_param("logits", {2, 3, 3}, rng)});
  check_gradients([](auto& t, const auto& v) { return softmax_channels(t, v[0]); }, {random_param("a", {2, 4, 3}, rng)});
}

TEST(Gradcheck, Dense) {
  std::mt19937_64 rng(8);
  check_gradients(
      [](auto& t, const auto& v) {
        Var b = v[2];
        return linear(t, v[0], v[1], &b);
      },
      {random_param("x", {3, 4}, rng), random_param("w", {2, 4}, rng), random_param("b", {2}, rng)});
  RowMat<double> M(3, 4);
  M.setRandom();
  check_gradients([M](auto& t, const auto& v) { return apply_fixed(t, v[0], M); }, {random_param("x", {2, 4}, rng)});
}

TEST(Gradcheck, Convolutions) {
  std::mt19937_64 rng(9);
  for (ConvOptions opt : {ConvOptions{1, 1, 1, 1}, ConvOptions{2, 1, 2, 1}, ConvOptions{1, 2, 2, 2}}) {
    check_gradients(
        [opt](auto& t, const auto& v) {
          Var b = v[2];
          return conv1d(t, v[0], v[1], &b, opt);
        },
        {random_param("x", {2, 3, 7}, rng), random_param("w", {2, 3, 3}, rng), random_param("b", {2}, rng)});
  }
  check_gradients([](auto& t, const auto& v) { return conv_transpose1d(t, v[0], v[1], nullptr, 2, 1, 1); },
                  {random_param("x", {2, 3, 4}, rng), random_param("w", {3, 2, 3}, rng)});
}

TEST(Gradcheck, InstanceNorm) {
  std::mt19937_64 rng(10);
  check_gradients([](auto& t, const auto& v) { return instance_norm(t, v[0], v[1], v[2]); },
                  {random_param("x", {2, 3, 6}, rng), random_param("g", {3}, rng), random_param("b", {3}, rng)}, 1e-5);
}

TEST(InstanceNormTest, NormalisesEachChannel) {
  std::mt19937_64 rng(11);
  P x = random_param("x", {2, 3, 50}, rng, 4.0);
  P g{"g", Tensor<double>({3}, 1.0)}, b{"b", Tensor<double>({3}, 0.0)};
  Tape<double> tape;
  const auto& y = tape.value(instance_norm(tape, tape.param(x), tape.param(g), tape.param(b)));
  for (std::size_t bb = 0; bb < 2; ++bb)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, s = 0;
      for (std::size_t l = 0; l < 50; ++l) m += y.at3(bb, c, l);
      m /= 50;
      for (std::size_t l = 0; l < 50; ++l) s += (y.at3(bb, c, l) - m) * (y.at3(bb, c, l) - m);
      EXPECT_NEAR(m, 0.0, 1e-10);
      EXPECT_NEAR(s / 50, 1.0, 1e-4);
    }
}
