#include <doctest.h>

#include <bit>
#include <random>

#include "semap/error.hpp"
#include "semap/morton.hpp"
#include "semap/octree_grid.hpp"

using namespace semap;

TEST_SUITE("morton") {
  TEST_CASE("origin round-trips") {
    CHECK(morton::decode(morton::encode(0, 0, 0)) == morton::Coords{0, 0, 0});
  }

  TEST_CASE("decode(0) is the offset origin") {
    const auto c = morton::decode(0);
    CHECK(c.ix == -static_cast<int32_t>(morton::kOffset));
    CHECK(c.iy == -static_cast<int32_t>(morton::kOffset));
    CHECK(c.iz == -static_cast<int32_t>(morton::kOffset));
  }

  TEST_CASE("unit offsets differ in exactly one lane bit") {
    const uint64_t o = morton::encode(0, 0, 0);
    const uint64_t x = morton::encode(1, 0, 0), y = morton::encode(0, 1, 0), z = morton::encode(0, 0, 1);
    CHECK(x != y);
    CHECK(y != z);
    CHECK(x != z);
    // The offset origin has every lane's low 20 bits clear, so +1 sets one bit.
    CHECK(std::popcount(x ^ o) == 1);
    CHECK(std::popcount(y ^ o) == 1);
    CHECK(std::popcount(z ^ o) == 1);
    CHECK(std::popcount(x ^ y) == 2);
    CHECK((x ^ o) == 1u);
    CHECK((y ^ o) == 2u);
    CHECK((z ^ o) == 4u);
  }

  TEST_CASE("known round trip") {
    CHECK(morton::decode(morton::encode(3, -2, 7)) == morton::Coords{3, -2, 7});
  }

  TEST_CASE("exhaustive [-8,8]^3") {
    size_t failures = 0;
    for (int x = -8; x <= 8; ++x)
      for (int y = -8; y <= 8; ++y)
        for (int z = -8; z <= 8; ++z) failures += !(morton::decode(morton::encode(x, y, z)) == morton::Coords{x, y, z});
    CHECK(failures == 0);
  }

  TEST_CASE("random 10000 keys round-trip, codes injective") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int32_t> u(-morton::kCoordLimit + 1, morton::kCoordLimit - 1);
    size_t failures = 0;
    for (int i = 0; i < 10000; ++i) {
      const morton::Coords c{u(rng), u(rng), u(rng)};
      failures += !(morton::decode(morton::encode(c.ix, c.iy, c.iz)) == c);
    }
    CHECK(failures == 0);
  }

  TEST_CASE("out-of-range coordinates are rejected") {
    CHECK_THROWS_AS(morton::encode(morton::kCoordLimit, 0, 0), RangeError);
    CHECK_THROWS_AS(morton::encode(0, -morton::kCoordLimit, 0), RangeError);
    CHECK_NOTHROW(morton::encode(morton::kCoordLimit - 1, -morton::kCoordLimit + 1, 0));
  }

  TEST_CASE("corner table: insert, find, growth") {
    CornerTable t;
    for (int64_t i = 0; i < 5000; ++i) {
      auto [slot, inserted] = t.insert(morton::encode(static_cast<int32_t>(i % 37), static_cast<int32_t>(i / 37), -3), i);
      CHECK(inserted);
      CHECK(slot == i);
    }
    CHECK(t.size() == 5000);
    for (int64_t i = 0; i < 5000; ++i) {
      CHECK(t.find(morton::encode(static_cast<int32_t>(i % 37), static_cast<int32_t>(i / 37), -3)) == i);
    }
    CHECK(t.find(morton::encode(100, 100, 100)) == -1);
    auto [slot, inserted] = t.insert(morton::encode(0, 0, -3), 99);
    CHECK_FALSE(inserted);
    CHECK(slot == 0);
  }
}
