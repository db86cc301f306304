#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mrnn/ordinal.hpp"
#include "mrnn/rng.hpp"

using namespace mrnn;

TEST_CASE("encode boundary classes") {
  const OrdinalTarget lo = ordinal_encode(0, 5);
  CHECK(lo.bits == std::vector<int>{0, 0, 0, 0});
  const OrdinalTarget hi = ordinal_encode(4, 5);
  CHECK(hi.bits == std::vector<int>{1, 1, 1, 1});
  const OrdinalTarget mid = ordinal_encode(2, 5);
  CHECK(mid.bits == std::vector<int>{1, 1, 0, 0});
}

TEST_CASE("encode rejects out-of-range labels") {
  CHECK_THROWS_AS(ordinal_encode(5, 5), DomainError);
  CHECK_THROWS_AS(ordinal_encode(-1, 5), DomainError);
  CHECK_THROWS_AS(ordinal_encode(0, 1), DomainError);
}

TEST_CASE("decode truncates after the first zero") {
  // binarized [1,0,1,0] reads as [1,0,0,0]
  CHECK(ordinal_decode(Vector{1.0, 0.0, 1.0, 0.0}) == 1);
  CHECK(ordinal_decode(Vector{0.9, 0.6, 0.4, 0.7}) == 2);
  CHECK(ordinal_decode(Vector{0.1, 0.2, 0.3, 0.4}) == 0);
  // threshold 0.5 itself reads as 1
  CHECK(ordinal_decode(Vector{0.5, 0.5}) == 2);
}

TEST_CASE("decode inverts encode for K in 2..10") {
  for (int k_classes = 2; k_classes <= 10; ++k_classes) {
    for (int label = 0; label < k_classes; ++label) {
      const OrdinalTarget t = ordinal_encode(label, k_classes);
      Vector raw(t.bits.size());
      for (std::size_t i = 0; i < t.bits.size(); ++i) raw[i] = t.bits[i];
      CHECK(ordinal_decode(raw) == label);
    }
  }
}

TEST_CASE("decode stays in range and is monotone under raises") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int k_classes = 2 + static_cast<int>(rng.index(9));
    Vector raw(static_cast<std::size_t>(k_classes) - 1);
    for (std::size_t i = 0; i < raw.dim(); ++i) raw[i] = rng.uniform(0.0, 1.0);
    const int label = ordinal_decode(raw);
    CHECK(label >= 0);
    CHECK(label <= k_classes - 1);

    // raising one entry while everything before it stays >= 0.5 cannot
    // decrease the label
    Vector raised = raw;
    const std::size_t at = rng.index(raw.dim());
    bool prefix_on = true;
    for (std::size_t i = 0; i < at; ++i) prefix_on = prefix_on && raw[i] >= 0.5;
    if (prefix_on) {
      raised[at] = 1.0;
      CHECK(ordinal_decode(raised) >= label);
    }
  }
}

TEST_CASE("ranking loss arithmetic") {
  CHECK(ranking_loss({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ranking_loss({3, 1}, {1, 2}) == doctest::Approx(1.5));
  CHECK(ranking_loss({0}, {4}) == doctest::Approx(4.0));
}

TEST_CASE("ranking loss is symmetric and zero only on equality") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.index(5));
      b[i] = static_cast<int>(rng.index(5));
    }
    const double ab = ranking_loss(a, b);
    CHECK(ab == ranking_loss(b, a));
    CHECK(ab >= 0.0);
    CHECK((ab == 0.0) == (a == b));
  }
}

TEST_CASE("accuracy arithmetic") {
  CHECK(accuracy({1, 2, 3, 4}, {1, 2, 3, 4}) == 1.0);
  CHECK(accuracy({1, 2, 3, 4}, {1, 0, 3, 0}) == doctest::Approx(0.5));
  CHECK(accuracy({0, 0}, {1, 1}) == 0.0);
}

TEST_CASE("metrics reject mismatched lengths") {
  CHECK_THROWS_AS(ranking_loss({1}, {1, 2}), DomainError);
  CHECK_THROWS_AS(accuracy({}, {}), DomainError);
}
