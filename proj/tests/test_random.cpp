#include <doctest.h>

#include <algorithm>
#include <set>

#include "star/random.hpp"

using star::Rng;

TEST_CASE("same seed, same sequence") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("streams are reproducible and distinct") {
  Rng s1 = Rng::stream(7, {1, 2}), s2 = Rng::stream(7, {1, 2}), s3 = Rng::stream(7, {2, 1});
  const auto v = s1.next_u64();
  CHECK(v == s2.next_u64());
  CHECK(v != s3.next_u64());
}

TEST_CASE("uniform and below stay in range") {
  Rng r(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    CHECK(r.below(7) < 7);
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal draws have unit variance") {
  Rng r(5);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.02);
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("sampling without replacement") {
  Rng r(9);
  const auto pick = r.sample_without_replacement(50, 20);
  CHECK(pick.size() == 20);
  CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 20);
  CHECK(*std::max_element(pick.begin(), pick.end()) < 50);
  CHECK(r.sample_without_replacement(5, 5).size() == 5);
  CHECK(r.sample_without_replacement(5, 0).empty());
}
