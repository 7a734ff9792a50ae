#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cadmr/rng.hpp>

#include <cmath>
#include <vector>

using namespace cadmr;

TEST_CASE("identical seed and call sequence reproduce identical draws") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform draws stay in [0,1) and look uniform") {
  RngStream rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws have roughly unit variance") {
  RngStream rng(11);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("derived streams are independent of each other's draw counts") {
  RngStream init_a = derive_stream(123, "init");
  RngStream dropout = derive_stream(123, "dropout");
  for (int i = 0; i < 50; ++i) (void)dropout.uniform();  // burn another stream
  RngStream init_b = derive_stream(123, "init");
  for (int i = 0; i < 100; ++i) CHECK(init_a.next_u64() == init_b.next_u64());
}

TEST_CASE("different purposes give different streams") {
  RngStream a = derive_stream(5, "split");
  RngStream b = derive_stream(5, "synthetic");
  int equal = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal == 0);
}

TEST_CASE("position round-trips") {
  RngStream a(99);
  for (int i = 0; i < 17; ++i) (void)a.next_u64();
  RngStream b(99);
  b.set_position(a.position());
  CHECK(a.next_u64() == b.next_u64());
}
