#include "doctest.h"
#include "expect.hpp"

#include "embedsom/demo_data.hpp"
#include "embedsom/io.hpp"

#include <cmath>

using namespace embedsom;

TEST_CASE("extruded S lies on its parametric surface") {
    const auto s = demo::extruded_s(5000, 3).data;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double x = s.points()(i, 0), y = s.points()(i, 1), z = s.points()(i, 2);
        const double c = 1.0 - std::abs(z);
        REQUIRE(std::abs(x * x + c * c - 1.0) < 1e-5);
        REQUIRE(y >= 0.0);
        REQUIRE(y < 2.0);
        REQUIRE(std::abs(z) <= 2.0 + 1e-6);
    }
    // noise bounds the residual only statistically
    const auto noisy = demo::extruded_s(5000, 3, 0.05).data;
    double worst = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        const double x = noisy.points()(i, 0), z = noisy.points()(i, 2);
        const double c = 1.0 - std::abs(z);
        worst = std::max(worst, std::abs(std::sqrt(x * x + c * c) - 1.0));
    }
    CHECK(worst < 6 * 0.05 * std::sqrt(2.0));
}

TEST_CASE("generators are deterministic per seed") {
    CHECK(demo::gaussians(3, 500, 4, 9).data.points() == demo::gaussians(3, 500, 4, 9).data.points());
    CHECK(!(demo::gaussians(3, 500, 4, 9).data.points() == demo::gaussians(3, 500, 4, 10).data.points()));
    CHECK(demo::extruded_s(100, 1).data.points() == demo::extruded_s(100, 1).data.points());
    CHECK(demo::uniform(100, 3, 2).points() == demo::uniform(100, 3, 2).points());
    CHECK(write_delimited(demo::uniform(50, 3, 2), '\t') == write_delimited(demo::uniform(50, 3, 2), '\t'));
}

TEST_CASE("degenerate gaussians give identical rows") {
    const auto g = demo::gaussians(1, 100, 5, 4, 0.0);
    for (std::size_t i = 1; i < 100; ++i)
        REQUIRE(std::equal(g.data.points().row(i).begin(), g.data.points().row(i).end(),
                           g.data.points().row(0).begin()));
    CHECK(g.labels == std::vector<std::uint32_t>(100, 0));
}

TEST_CASE("gaussian labels and uniform range") {
    const auto g = demo::gaussians(3, 9, 2, 1);
    CHECK(g.labels == std::vector<std::uint32_t>{0, 1, 2, 0, 1, 2, 0, 1, 2});
    const auto u = demo::uniform(1000, 4, 5);
    for (float v : u.points().data()) {
        REQUIRE(v >= 0.f);
        REQUIRE(v < 1.f);
    }
    CHECK_ERROR_CODE(demo::uniform(0, 4, 5), "invalid_generator");
    CHECK_ERROR_CODE(demo::gaussians(0, 10, 4, 5), "invalid_generator");
}
