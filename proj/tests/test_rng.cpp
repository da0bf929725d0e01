#include <set>

#include "doctest.h"
#include "uwhdn/error.hpp"
#include "uwhdn/rng.hpp"

using namespace uwhdn;

TEST_CASE("same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in range") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u < 3.0);
  }
}

TEST_CASE("index covers [0, n) without bias artifacts") {
  Rng rng(9);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::size_t k = rng.index(7);
    CHECK(k < 7);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
  CHECK_THROWS_AS((void)rng.index(0), ValidationError);
}

TEST_CASE("normal draws look standard") {
  Rng rng(13);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("derived streams differ from the parent and each other") {
  Rng parent(5);
  Rng c1 = parent.derive(1), c2 = parent.derive(2);
  CHECK(c1.next_u64() != c2.next_u64());
  Rng c1_again = parent.derive(1);
  Rng c1_fresh = parent.derive(1);
  CHECK(c1_again.next_u64() == c1_fresh.next_u64());
}

TEST_CASE("state serialization resumes the exact stream") {
  Rng rng(77);
  for (int i = 0; i < 37; ++i) (void)rng.next_u64();
  const std::string state = rng.serialize_state();
  std::vector<std::uint64_t> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(rng.next_u64());
  Rng other(0);
  other.restore_state(state);
  for (int i = 0; i < 10; ++i) CHECK(other.next_u64() == expected[i]);
  CHECK_THROWS_AS(other.restore_state("not a state"), ValidationError);
}
