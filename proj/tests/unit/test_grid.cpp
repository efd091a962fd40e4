#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "hjb/exceptions.hpp"
#include "hjb/grid.hpp"

using namespace hjb;
using doctest::Approx;

namespace {

constexpr NodeFamily kFamilies[] = {NodeFamily::Classic, NodeFamily::Modified, NodeFamily::CGL};

// Independent count oracle: walk every multi-index with |i| <= q directly.
std::uint64_t brute_force_count(NodeFamily family, int d, int q) {
    std::uint64_t total = 0;
    std::vector<int> mi(d, 1);
    auto walk = [&](auto&& self, int axis, int used) -> void {
        if (axis == d) {
            std::uint64_t prod = 1;
            for (int v : mi) prod *= static_cast<std::uint64_t>(delta_count(family, v));
            total += prod;
            return;
        }
        const int remaining_axes = d - axis - 1;
        for (int v = 1; used + v + remaining_axes <= q; ++v) {
            mi[axis] = v;
            self(self, axis + 1, used + v);
        }
    };
    walk(walk, 0, 0);
    return total;
}

}  // namespace

TEST_CASE("nodes_1d matches the defining formulas") {
    CHECK(nodes_1d(NodeFamily::Classic, 1) == std::vector<double>{0.0, 1.0});
    CHECK(nodes_1d(NodeFamily::Modified, 1) == std::vector<double>{0.5});
    CHECK(nodes_1d(NodeFamily::CGL, 2) == std::vector<double>{0.0, 0.5, 1.0});

    const auto cgl3 = nodes_1d(NodeFamily::CGL, 3);
    REQUIRE(cgl3.size() == 5);
    const double expected[] = {0.0, 0.146447, 0.5, 0.853553, 1.0};
    for (int k = 0; k < 5; ++k) CHECK(cgl3[k] == Approx(expected[k]).epsilon(1e-6));

    // Direct cosine formula for a deeper level.
    const auto cgl6 = nodes_1d(NodeFamily::CGL, 6);
    for (std::size_t k = 0; k < cgl6.size(); ++k) {
        const double direct = 0.5 * (1.0 - std::cos(static_cast<double>(k) * std::numbers::pi / 32.0));
        CHECK(cgl6[k] == Approx(direct).epsilon(1e-15).scale(1.0));
    }
}

TEST_CASE("node counts") {
    for (int i = 1; i <= 12; ++i) {
        CHECK(node_count(NodeFamily::Classic, i) == (1 << (i - 1)) + 1);
        if (i >= 2) {
            CHECK(node_count(NodeFamily::Modified, i) == (1 << (i - 1)) + 1);
            CHECK(node_count(NodeFamily::CGL, i) == (1 << (i - 1)) + 1);
        }
    }
    CHECK(node_count(NodeFamily::Modified, 1) == 1);
    CHECK(node_count(NodeFamily::CGL, 1) == 1);
    CHECK_THROWS_AS((void)node_count(NodeFamily::CGL, 0), std::invalid_argument);
}

TEST_CASE("delta_nodes examples") {
    CHECK(delta_nodes(NodeFamily::Classic, 2) == std::vector<double>{0.5});
    CHECK(delta_nodes(NodeFamily::Modified, 2) == std::vector<double>{0.0, 1.0});
    CHECK(delta_nodes(NodeFamily::Classic, 3) == std::vector<double>{0.25, 0.75});
    CHECK(delta_nodes(NodeFamily::Modified, 1) == std::vector<double>{0.5});
}

TEST_CASE("nestedness and telescoping union up to level 12") {
    for (const NodeFamily family : kFamilies) {
        std::set<double> accumulated;
        for (int i = 1; i <= 12; ++i) {
            const auto xi = nodes_1d(family, i);
            CHECK(std::is_sorted(xi.begin(), xi.end()));
            CHECK(std::adjacent_find(xi.begin(), xi.end()) == xi.end());
            CHECK(xi.front() >= 0.0);
            CHECK(xi.back() <= 1.0);
            if (i >= 2) {
                const auto prev = nodes_1d(family, i - 1);
                CHECK(std::includes(xi.begin(), xi.end(), prev.begin(), prev.end()));
            }
            const auto delta = delta_nodes(family, i);
            CHECK(static_cast<int>(delta.size()) == delta_count(family, i));
            for (double x : delta) CHECK(accumulated.insert(x).second);
            CHECK(std::vector<double>(accumulated.begin(), accumulated.end()) == xi);
        }
    }
}

TEST_CASE("node birth bookkeeping round-trips") {
    for (const NodeFamily family : kFamilies) {
        for (int i = 1; i <= 10; ++i) {
            const auto xi = nodes_1d(family, i);
            for (int k = 0; k < static_cast<int>(xi.size()); ++k) {
                const NodeBirth b = node_birth(family, i, k);
                CHECK(b.level <= i);
                CHECK(delta_node(family, b.level, b.offset) == xi[k]);
            }
        }
    }
}

TEST_CASE("build_grid counts") {
    CHECK(build_grid(NodeFamily::Classic, 2, 8).size() == 385);
    CHECK(build_grid(NodeFamily::Modified, 2, 8).size() == 321);
    CHECK(build_grid(NodeFamily::CGL, 6, 13).size() == 44689);
    CHECK(build_grid(NodeFamily::CGL, 4, 12).size() == 18945);
    CHECK_THROWS_AS((void)build_grid(NodeFamily::CGL, 3, 2), std::invalid_argument);
    CHECK(build_grid(NodeFamily::Modified, 1, 1).size() == 1);
}

TEST_CASE("count identity over family, d <= 6, q <= d+8") {
    for (const NodeFamily family : kFamilies) {
        for (int d = 1; d <= 6; ++d) {
            for (int q = d; q <= d + 8; ++q) {
                const auto oracle = brute_force_count(family, d, q);
                CHECK(sparse_size(family, d, q) == oracle);
                if (oracle <= 60000) CHECK(build_grid(family, d, q).size() == oracle);
            }
        }
    }
}

TEST_CASE("dense_size uses exact integers") {
    CHECK(dense_size(NodeFamily::CGL, 6, 13) == boost::multiprecision::cpp_int("4608273662721"));
    CHECK(dense_size(NodeFamily::CGL, 4, 12) == boost::multiprecision::cpp_int(257) * 257 * 257 * 257);
    CHECK(dense_size(NodeFamily::Classic, 1, 1) == 2);
    CHECK(dense_size(NodeFamily::Classic, 2, 8) == 4225);
    // Far past 64 bits.
    CHECK(dense_size(NodeFamily::CGL, 8, 40) > boost::multiprecision::cpp_int("18446744073709551616"));
    CHECK(dense_size(NodeFamily::CGL, 2, 41) ==
          pow((boost::multiprecision::cpp_int(1) << 39) + 1, 2));
    CHECK_THROWS_AS((void)node_count(NodeFamily::CGL, kMaxLevel + 1), std::invalid_argument);
}

TEST_CASE("one-dimensional sparse grid is X^q") {
    for (const NodeFamily family : kFamilies) {
        for (int q = 1; q <= 9; ++q) {
            const auto grid = build_grid(family, 1, q);
            std::vector<double> xs;
            for (std::size_t id = 0; id < grid.size(); ++id) xs.push_back(grid.ref(id)[0]);
            std::sort(xs.begin(), xs.end());
            CHECK(xs == nodes_1d(family, q));
        }
    }
}

TEST_CASE("grid points are distinct and ordered by (|i|, i, j)") {
    for (const NodeFamily family : kFamilies) {
        const auto grid = build_grid(family, 3, 9);
        // 1-D node gaps bound how close two distinct tuples can be.
        const auto top = nodes_1d(family, grid.max_level());
        for (std::size_t k = 1; k < top.size(); ++k) CHECK(top[k] - top[k - 1] > 1e-13);
        std::set<std::vector<double>> seen;
        for (std::size_t id = 0; id < grid.size(); ++id) {
            const auto r = grid.ref(id);
            CHECK(seen.insert(std::vector<double>(r.begin(), r.end())).second);
        }
        for (std::size_t id = 1; id < grid.size(); ++id) {
            const auto key = [&](std::size_t p) {
                std::vector<int> k{grid.level_sum(p)};
                for (int v : grid.levels(p)) k.push_back(v);
                for (int v : grid.offsets(p)) k.push_back(v);
                return k;
            };
            CHECK(key(id - 1) < key(id));
        }
        for (std::size_t id = 0; id < grid.size(); ++id) {
            const auto found = grid.find(grid.levels(id), grid.offsets(id));
            REQUIRE(found.has_value());
            CHECK(*found == id);
        }
    }
}

TEST_CASE("grid point reference coordinates come from delta nodes") {
    const auto grid = build_grid(NodeFamily::CGL, 2, 6);
    for (std::size_t id = 0; id < grid.size(); ++id) {
        const auto p = grid.point(id);
        for (int k = 0; k < 2; ++k) {
            CHECK(p.offsets[k] >= 1);
            CHECK(p.offsets[k] <= delta_count(NodeFamily::CGL, p.levels[k]));
            CHECK(p.ref[k] == delta_nodes(NodeFamily::CGL, p.levels[k])[p.offsets[k] - 1]);
        }
    }
}

TEST_CASE("affine box maps") {
    const double pi = std::numbers::pi;
    const Box d1({-pi / 6}, {pi / 6});
    CHECK(d1.to_phys(std::vector{0.5})[0] == Approx(0.0).scale(1.0).epsilon(1e-16));
    CHECK(d1.to_phys(std::vector{0.0})[0] == -pi / 6);
    const Box b({-pi / 8}, {pi / 8});
    CHECK(b.to_phys(std::vector{0.25})[0] == Approx(-pi / 16).epsilon(1e-15));
    CHECK(b.to_phys(std::vector{1.0})[0] == pi / 8);

    CHECK_THROWS_AS((void)b.to_ref(std::vector{1.0}), OutOfDomainError);
    CHECK_THROWS_AS((void)b.to_phys(std::vector{1.1}), OutOfDomainError);
    CHECK(b.to_ref(std::vector{pi / 8 * (1 + 1e-14)})[0] == 1.0);

    std::mt19937_64 rng(7);
    const Box box({-2.0, 0.0, 10.0}, {3.0, 0.25, 11.0});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const std::vector<double> r{u(rng), u(rng), u(rng)};
        const auto back = box.to_ref(box.to_phys(r));
        for (int k = 0; k < 3; ++k) CHECK(std::abs(back[k] - r[k]) <= 1e-14 * std::max(1.0, std::abs(r[k])) + 1e-15);
    }
}

TEST_CASE("describe emits the summary fields") {
    const auto grid = build_grid(NodeFamily::Classic, 2, 8, Box({-1, -2}, {1, 2}));
    const auto j = describe(grid);
    CHECK(j["family"] == "classic");
    CHECK(j["d"] == 2);
    CHECK(j["q"] == 8);
    CHECK(j["count"] == 385);
    CHECK(j["domain"][1][1] == 2.0);
    CHECK(parse_family("CGL") == NodeFamily::CGL);
    CHECK_THROWS_AS((void)parse_family("chebyshev"), std::invalid_argument);
}
