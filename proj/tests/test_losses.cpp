#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mdfr/losses.hpp"
#include "test_helpers.hpp"

using namespace mdfr;
using namespace mdfr::testing;
using nn::Variable;

namespace {

nn::VarPtr leaf(const nn::Tensor& t) { return Variable::leaf(t); }

nn::Tensor embedding(std::initializer_list<double> vals) {
  nn::Tensor t(1, static_cast<int>(vals.size()), 1, 1);
  std::copy(vals.begin(), vals.end(), t.data());
  return t;
}

} // namespace

TEST_CASE("identity loss: exact zero, antipodal four, cosine identity") {
  auto x = embedding({0.5, -0.25, 1.0, 2.0});
  CHECK(losses::loss_id_value(x, x) == 0.0);

  // y is a negative power-of-two multiple of x, so normalisation gives the
  // exact antipode.
  auto y = embedding({-1.0, 0.5, -2.0, -4.0});
  CHECK(losses::loss_id_value(x, y) == doctest::Approx(4.0).epsilon(1e-12));

  RandomStream rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor(1, 16, 1, 1, rng);
    auto b = random_tensor(1, 16, 1, 1, rng);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < 16; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    const double cos_ab = dot / (std::sqrt(na) * std::sqrt(nb));
    CHECK(losses::loss_id_value(a, b) ==
          doctest::Approx(2.0 - 2.0 * cos_ab).epsilon(1e-12));
  }
}

TEST_CASE("identity loss is invariant to positive rescaling and rejects zero norm") {
  auto x = embedding({0.4, -0.8, 0.2, 0.9});
  auto y = embedding({1.0, 0.3, -0.5, 0.1});
  const double base = losses::loss_id_value(x, y);
  nn::Tensor x_scaled = x;
  for (std::size_t i = 0; i < x_scaled.numel(); ++i) x_scaled[i] *= 37.5;
  CHECK(losses::loss_id_value(x_scaled, y) == doctest::Approx(base).epsilon(1e-12));

  nn::Tensor zero(1, 4, 1, 1);
  CHECK_THROWS_AS(losses::loss_id_value(zero, y), DegenerateInputError);
}

TEST_CASE("pixel loss: zero case, mean convention, loop oracle, symmetry, scale law") {
  RandomStream rng(31);
  auto a = random_tensor(1, 3, 8, 8, rng);
  CHECK(losses::loss_pixel_value(a, a) == 0.0);

  // Single differing entry out of four, mean convention.
  nn::Tensor p(1, 1, 2, 2), q(1, 1, 2, 2);
  q[0] = 1.0;
  CHECK(losses::loss_pixel_value(p, q) == doctest::Approx(0.25).epsilon(1e-15));

  auto b = random_tensor(1, 3, 8, 8, rng);
  double expected = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    expected += d * d;
  }
  expected /= static_cast<double>(a.numel());
  CHECK(losses::loss_pixel_value(a, b) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(losses::loss_pixel_value(a, b) == losses::loss_pixel_value(b, a));

  nn::Tensor zero(1, 3, 8, 8);
  nn::Tensor a2 = a;
  for (std::size_t i = 0; i < a2.numel(); ++i) a2[i] *= 2.0;
  CHECK(losses::loss_pixel_value(a2, zero) == 4.0 * losses::loss_pixel_value(a, zero));

  nn::Tensor wrong(1, 3, 8, 9);
  CHECK_THROWS_AS(losses::loss_pixel_value(a, wrong), ShapeError);
}

TEST_CASE("restoration objective is the exact weighted sum") {
  RandomStream rng(32);
  losses::LossWeights w;
  w.lambda1 = 3.5;
  auto img_a = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto img_b = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto emb_a = leaf(random_tensor(1, 8, 1, 1, rng));
  auto emb_b = leaf(random_tensor(1, 8, 1, 1, rng));

  auto total = losses::loss_frn(img_a, img_b, emb_a, emb_b, w);
  const double expected = losses::loss_pixel(img_a, img_b)->value.item() +
                          3.5 * losses::loss_id(emb_a, emb_b)->value.item();
  CHECK(total->value.item() == doctest::Approx(expected).epsilon(1e-12));

  // Both terms zero.
  auto same_total = losses::loss_frn(img_a, img_a, emb_a, emb_a, w);
  CHECK(same_total->value.item() == 0.0);

  // With lambda1 = 0 it reduces to the pixel loss.
  losses::LossWeights w0;
  w0.lambda1 = 0.0;
  auto reduced = losses::loss_frn(img_a, img_b, emb_a, emb_b, w0);
  CHECK(reduced->value.item() ==
        doctest::Approx(losses::loss_pixel(img_a, img_b)->value.item()).epsilon(1e-15));
}

TEST_CASE("adversarial objective: analytic half point, perfect-critic limit, formula oracle") {
  auto half = leaf(nn::Tensor::scalar(0.5));
  auto obj = losses::loss_adv_d(half, half);
  CHECK(obj->value.item() == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-12));

  auto near_one = leaf(nn::Tensor::scalar(1.0 - 1e-12));
  auto near_zero = leaf(nn::Tensor::scalar(1e-12));
  auto perfect = losses::loss_adv_d(near_one, near_zero);
  CHECK(perfect->value.item() < 0.0);
  CHECK(perfect->value.item() > -1e-10);

  RandomStream rng(33);
  for (int trial = 0; trial < 25; ++trial) {
    const double sr = rng.uniform(0.01, 0.99);
    const double sf = rng.uniform(0.01, 0.99);
    auto v = losses::loss_adv_d(leaf(nn::Tensor::scalar(sr)), leaf(nn::Tensor::scalar(sf)));
    CHECK(v->value.item() ==
          doctest::Approx(std::log(sr) + std::log(1.0 - sf)).epsilon(1e-12));
    auto g = losses::loss_adv_g(leaf(nn::Tensor::scalar(sf)));
    CHECK(g->value.item() == doctest::Approx(std::log(1.0 - sf)).epsilon(1e-12));
    auto g_ns = losses::loss_adv_g(leaf(nn::Tensor::scalar(sf)), true);
    CHECK(g_ns->value.item() == doctest::Approx(-std::log(sf)).epsilon(1e-12));
  }
}

TEST_CASE("frontalization objective composes its four terms") {
  RandomStream rng(34);
  losses::LossWeights w;
  w.lambda2 = 2.0;
  w.lambda3 = 0.5;
  auto img_a = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto img_b = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto emb_a = leaf(random_tensor(1, 8, 1, 1, rng));
  auto emb_b = leaf(random_tensor(1, 8, 1, 1, rng));
  auto s_pcd = leaf(nn::Tensor::scalar(0.3));
  auto s_icd = leaf(nn::Tensor::scalar(0.7));

  auto total = losses::loss_ffn(img_a, img_b, emb_a, emb_b, s_pcd, s_icd, w);
  const double expected = losses::loss_pixel(img_a, img_b)->value.item() +
                          2.0 * losses::loss_id(emb_a, emb_b)->value.item() +
                          0.5 * (std::log(1.0 - 0.3) + std::log(1.0 - 0.7));
  CHECK(total->value.item() == doctest::Approx(expected).epsilon(1e-12));

  losses::LossWeights w0;
  w0.lambda2 = 0.0;
  w0.lambda3 = 0.0;
  auto reduced = losses::loss_ffn(img_a, img_b, emb_a, emb_b, s_pcd, s_icd, w0);
  CHECK(reduced->value.item() ==
        doctest::Approx(losses::loss_pixel(img_a, img_b)->value.item()).epsilon(1e-15));
}

TEST_CASE("feature alignment: exact zero, analytic 1x1 case, loop oracle") {
  RandomStream rng(35);
  auto f = leaf(random_tensor(1, 4, 5, 5, rng));
  CHECK(losses::loss_fa(f, f)->value.item() == 0.0);

  auto three = leaf(nn::Tensor::scalar(3.0));
  auto one = leaf(nn::Tensor::scalar(1.0));
  CHECK(losses::loss_fa(three, one)->value.item() == doctest::Approx(4.0).epsilon(1e-15));

  auto g = leaf(random_tensor(1, 4, 5, 5, rng));
  double expected = 0.0;
  for (std::size_t i = 0; i < f->value.numel(); ++i) {
    const double d = f->value[i] - g->value[i];
    expected += d * d;
  }
  expected /= static_cast<double>(f->value.numel());
  CHECK(losses::loss_fa(f, g)->value.item() == doctest::Approx(expected).epsilon(1e-12));

  auto wrong = leaf(random_tensor(1, 4, 5, 6, rng));
  CHECK_THROWS_AS(losses::loss_fa(f, wrong), ShapeError);
}

TEST_CASE("task-integrated objective composes pixel, identity and alignment terms") {
  RandomStream rng(36);
  losses::LossWeights w; // lambda4 = 0.1, lambda5 = 1 by default
  auto teacher = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto student = leaf(random_tensor(1, 3, 6, 6, rng, 0.0, 1.0));
  auto emb_t = leaf(random_tensor(1, 8, 1, 1, rng));
  auto emb_s = leaf(random_tensor(1, 8, 1, 1, rng));
  auto fa = leaf(nn::Tensor::scalar(0.37));

  auto total = losses::loss_ti(teacher, student, emb_t, emb_s, fa, w);
  const double expected = losses::loss_pixel(teacher, student)->value.item() +
                          0.1 * losses::loss_id(emb_t, emb_s)->value.item() + 1.0 * 0.37;
  CHECK(total->value.item() == doctest::Approx(expected).epsilon(1e-12));

  auto zero_fa = leaf(nn::Tensor::scalar(0.0));
  CHECK(losses::loss_ti(teacher, teacher, emb_t, emb_t, zero_fa, w)->value.item() == 0.0);
}

TEST_CASE("every objective passes central finite differences on each input slot") {
  RandomStream rng(37);
  losses::LossWeights w;
  w.lambda1 = 2.0;
  w.lambda2 = 1.5;
  w.lambda3 = 0.25;
  w.lambda4 = 0.1;
  w.lambda5 = 1.0;

  auto img_a = leaf(random_tensor(2, 3, 4, 4, rng, 0.1, 0.9));
  auto img_b = leaf(random_tensor(2, 3, 4, 4, rng, 0.1, 0.9));
  auto emb_a = leaf(random_tensor(2, 8, 1, 1, rng));
  auto emb_b = leaf(random_tensor(2, 8, 1, 1, rng));
  auto feats_a = leaf(random_tensor(2, 4, 3, 3, rng));
  auto feats_b = leaf(random_tensor(2, 4, 3, 3, rng));
  auto s_real = leaf(nn::Tensor::scalar(0.62));
  auto s_fake = leaf(nn::Tensor::scalar(0.31));

  auto check_slots = [&](const std::function<nn::VarPtr()>& build,
                         std::initializer_list<nn::VarPtr> slots) {
    for (const auto& slot : slots) {
      auto res = grad_check(slot, build, 10, rng);
      CHECK(res.max_rel_err < 1e-4);
    }
  };

  check_slots([&] { return losses::loss_id(emb_a, emb_b); }, {emb_a, emb_b});
  check_slots([&] { return losses::loss_pixel(img_a, img_b); }, {img_a, img_b});
  check_slots([&] { return losses::loss_frn(img_a, img_b, emb_a, emb_b, w); },
              {img_a, img_b, emb_a, emb_b});
  check_slots([&] { return losses::loss_adv_d(s_real, s_fake); }, {s_real, s_fake});
  check_slots([&] { return losses::loss_adv_g(s_fake); }, {s_fake});
  check_slots([&] { return losses::loss_ffn(img_a, img_b, emb_a, emb_b, s_fake, s_real, w); },
              {img_a, img_b, emb_a, emb_b, s_fake, s_real});
  check_slots([&] { return losses::loss_fa(feats_a, feats_b); }, {feats_a, feats_b});
  check_slots(
      [&] {
        return losses::loss_ti(img_a, img_b, emb_a, emb_b, losses::loss_fa(feats_a, feats_b), w);
      },
      {img_a, img_b, emb_a, emb_b, feats_a, feats_b});
}

TEST_CASE("non-negativity holds for all bounded objectives over random draws") {
  RandomStream rng(38);
  losses::LossWeights w;
  for (int trial = 0; trial < 30; ++trial) {
    auto a = leaf(random_tensor(1, 3, 4, 4, rng, 0.0, 1.0));
    auto b = leaf(random_tensor(1, 3, 4, 4, rng, 0.0, 1.0));
    auto ea = leaf(random_tensor(1, 6, 1, 1, rng));
    auto eb = leaf(random_tensor(1, 6, 1, 1, rng));
    auto fa = leaf(random_tensor(1, 2, 3, 3, rng));
    auto fb = leaf(random_tensor(1, 2, 3, 3, rng));
    CHECK(losses::loss_id(ea, eb)->value.item() >= 0.0);
    CHECK(losses::loss_pixel(a, b)->value.item() >= 0.0);
    CHECK(losses::loss_frn(a, b, ea, eb, w)->value.item() >= 0.0);
    CHECK(losses::loss_fa(fa, fb)->value.item() >= 0.0);
    CHECK(losses::loss_ti(a, b, ea, eb, losses::loss_fa(fa, fb), w)->value.item() >= 0.0);
  }
}

TEST_CASE("loss weights reject negative or non-finite values") {
  losses::LossWeights w;
  w.lambda3 = -1.0;
  CHECK_THROWS_AS(w.validate(), InvalidArgumentError);
}
