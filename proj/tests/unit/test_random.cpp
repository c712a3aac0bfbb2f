#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "fairdiff/random.hpp"

using namespace fairdiff;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using W = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("splitmix64 reference outputs") {
  // Successive outputs of the splitmix64 generator seeded with 0.
  std::uint64_t state = 0;
  std::vector<std::uint64_t> got;
  for (int i = 0; i < 3; ++i) {
    state += 0x9e3779b97f4a7c15ull;
    got.push_back(splitmix64(state - 0x9e3779b97f4a7c15ull));
  }
  CHECK(got[0] == 0xe220a8397b1dcdafull);
  CHECK(got[1] == 0x6e789e6aa1b965f4ull);
  CHECK(got[2] == 0x06c45d188009454full);
}

TEST_CASE("streams depend only on their address") {
  CounterStream a(42, StreamTag::test, 5, 1);
  CounterStream b(42, StreamTag::test, 5, 1);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

  std::set<double> firsts;
  firsts.insert(CounterStream(42, StreamTag::test, 5, 1).uniform());
  firsts.insert(CounterStream(43, StreamTag::test, 5, 1).uniform());
  firsts.insert(CounterStream(42, StreamTag::sample_step, 5, 1).uniform());
  firsts.insert(CounterStream(42, StreamTag::test, 6, 1).uniform());
  firsts.insert(CounterStream(42, StreamTag::test, 5, 2).uniform());
  CHECK(firsts.size() == 5);
}

TEST_CASE("uniform and normal moments") {
  CounterStream s(1, StreamTag::test, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, umin = 1, umax = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    su += u;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(umin > 0.0);
  CHECK(umax < 1.0);
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}

TEST_CASE("below is uniform over its range") {
  CounterStream s(3, StreamTag::test, 0);
  std::vector<int> hist(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = s.below(7);
    REQUIRE(v < 7);
    ++hist[v];
  }
  double chi2 = 0;
  for (int h : hist) chi2 += (h - n / 7.0) * (h - n / 7.0) / (n / 7.0);
  CHECK(chi2 < 22.46);  // 0.999 quantile, 6 degrees of freedom
}
