#include "doctest.h"
#include "oracles.hpp"

#include "embedsom/demo_data.hpp"
#include "embedsom/graphmodel.hpp"
#include "embedsom/knn.hpp"
#include "embedsom/projection.hpp"
#include "embedsom/rng.hpp"
#include "embedsom/som.hpp"

#include <set>

using namespace embedsom;

TEST_CASE("kmeans: full step, tie-break, monotone winner distance") {
    Matrix<float> hi(2, 1, std::vector<float>{-1.f, 1.f});
    const Matrix<float> sample(1, 1, std::vector<float>{0.f});
    Rng rng(1);
    kmeans_tick(sample, hi.view(), {1.0, 1}, rng);
    CHECK(hi(0, 0) == 0.f);  // lower index wins the tie and lands on the sample
    CHECK(hi(1, 0) == 1.f);

    const auto data = oracle::random_matrix(500, 4, 2);
    Matrix<float> h = oracle::random_matrix(10, 4, 3);
    Rng r(4);
    for (int i = 0; i < 300; ++i) {
        Rng probe = r;
        const auto s = data.row(static_cast<std::size_t>(probe.below(500)));
        const auto b = bmu(s, h);
        const float before = sq_euclidean(s, h.row(b));
        Matrix<float> other = h;
        kmeans_tick(data, h.view(), {0.3, 1}, r);
        REQUIRE(sq_euclidean(s, h.row(b)) <= before);
        for (std::size_t j = 0; j < 10; ++j)
            if (j != b)
                REQUIRE(std::equal(h.row(j).begin(), h.row(j).end(), other.row(j).begin()));
    }
}

TEST_CASE("kmeans lowers quantization error on two clusters") {
    const auto data = demo::gaussians(2, 2000, 3, 9, 0.5, 5.0).data;
    Matrix<float> hi(2, 3, 0.f);
    const double before = quantization_error(data.points(), hi);
    Rng rng(1);
    for (int t = 0; t < 500; ++t)
        kmeans_tick(data.points(), hi.view(), {0.05, 16}, rng);
    CHECK(quantization_error(data.points(), hi) < before);
}

TEST_CASE("graph: chain and structure") {
    const Matrix<float> line(3, 1, std::vector<float>{0.f, 1.f, 2.f});
    const auto es = build_knn_graph(line, 1, 1.0);
    REQUIRE(es.size() == 2);
    CHECK(es.edges[0].i == 0);
    CHECK(es.edges[0].j == 1);
    CHECK(es.edges[1].i == 1);
    CHECK(es.edges[1].j == 2);
    CHECK(es.edges[0].rest_length == 1.0);

    const auto cloud = oracle::random_matrix(40, 3, 5);
    const auto g = build_knn_graph(cloud, 4, 2.0);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (const auto &e : g.edges) {
        CHECK(e.i < e.j);
        CHECK(seen.insert({e.i, e.j}).second);
        CHECK(e.rest_length ==
              doctest::Approx(2.0 * std::sqrt(static_cast<double>(oracle::sqdist_ld(cloud.row(e.i), cloud.row(e.j)))))
                  .epsilon(1e-5));
    }
    CHECK_THROWS_AS(build_knn_graph(cloud, 40, 1.0), Error);
    CHECK_THROWS_AS(build_knn_graph(cloud, 0, 1.0), Error);
}

TEST_CASE("graph equals symmetrized knn_base without self") {
    const auto hi = oracle::random_matrix(32, 6, 8);
    const auto g = build_knn_graph(hi, 3, 1.0);
    const auto nl = knn_base(hi, hi, 4);
    std::set<std::pair<std::uint32_t, std::uint32_t>> expect;
    for (std::uint32_t i = 0; i < 32; ++i)
        for (std::size_t c = 0; c < 4; ++c) {
            const auto j = nl.indices(i, c);
            if (j != i)
                expect.insert({std::min(i, j), std::max(i, j)});
        }
    std::set<std::pair<std::uint32_t, std::uint32_t>> got;
    for (const auto &e : g.edges)
        got.insert({e.i, e.j});
    CHECK(got == expect);
}

TEST_CASE("graph is invariant under landmark permutation") {
    const auto hi = oracle::random_matrix(20, 3, 9);
    std::vector<std::uint32_t> perm{3, 7, 1, 0, 19, 2, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18};
    Matrix<float> p(20, 3);
    for (std::size_t j = 0; j < 20; ++j)
        std::copy(hi.row(perm[j]).begin(), hi.row(perm[j]).end(), p.row(j).begin());
    std::set<std::pair<std::uint32_t, std::uint32_t>> a, b;
    for (const auto &e : build_knn_graph(hi, 3, 1.0).edges)
        a.insert({e.i, e.j});
    for (const auto &e : build_knn_graph(p, 3, 1.0).edges)
        b.insert({std::min(perm[e.i], perm[e.j]), std::max(perm[e.i], perm[e.j])});
    CHECK(a == b);
}

TEST_CASE("rest scale sets the mean rest length") {
    const auto hi = oracle::random_matrix(50, 4, 10, 0.f, 30.f);
    const double scale = rest_scale_for_mean(hi, 3);
    const auto g = build_knn_graph(hi, 3, scale);
    double mean = 0;
    for (const auto &e : g.edges)
        mean += e.rest_length;
    CHECK(mean / static_cast<double>(g.size()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layout: equilibrium and spring sign") {
    EdgeSet es;
    es.edges.push_back({0, 1, 2.0});
    Matrix<float> lo(2, 2, std::vector<float>{0, 0, 2, 0});
    LayoutState st{Matrix<double>(2, 2), {1.0, 0.0, 0.9, 0.05}};
    const auto before = lo;
    layout_tick(lo.view(), es, st, {});
    CHECK(lo == before);

    Matrix<float> far(2, 2, std::vector<float>{0, 0, 5, 0});
    LayoutState st2{Matrix<double>(2, 2), {1.0, 0.0, 0.9, 0.05}};
    layout_tick(far.view(), es, st2, {});
    CHECK(far(0, 0) > 0.f);
    CHECK(far(1, 0) < 5.f);
}

TEST_CASE("layout: forces sum to zero and pinned nodes stay put") {
    const auto hi = oracle::random_matrix(12, 4, 11);
    const auto es = build_knn_graph(hi, 3, rest_scale_for_mean(hi, 3));
    Matrix<float> lo = oracle::random_matrix(12, 2, 12);
    const auto f = layout_forces(lo, es, LayoutParams{});
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < 12; ++i) {
        sx += f(i, 0);
        sy += f(i, 1);
    }
    CHECK(std::abs(sx) <= 1e-6);
    CHECK(std::abs(sy) <= 1e-6);

    std::vector<std::uint8_t> pins(12, 0);
    pins[2] = pins[7] = 1;
    const std::vector<float> p2(lo.row(2).begin(), lo.row(2).end());
    const std::vector<float> p7(lo.row(7).begin(), lo.row(7).end());
    LayoutState st{Matrix<double>(12, 2), LayoutParams{}};
    for (int t = 0; t < 300; ++t) {
        layout_tick(lo.view(), es, st, pins);
        REQUIRE(std::equal(p2.begin(), p2.end(), lo.row(2).begin()));
        REQUIRE(std::equal(p7.begin(), p7.end(), lo.row(7).begin()));
        REQUIRE(st.velocities(2, 0) == 0.0);
    }
}

TEST_CASE("layout: stress decreases on a random graph") {
    const auto hi = oracle::random_matrix(8, 4, 13);
    const auto es = build_knn_graph(hi, 3, rest_scale_for_mean(hi, 3));
    Matrix<float> lo = oracle::random_matrix(8, 2, 14, 0.f, 0.5f);
    const double before = edge_stress(lo, es);
    LayoutState st{Matrix<double>(8, 2), LayoutParams{}};
    for (int t = 0; t < 200; ++t)
        layout_tick(lo.view(), es, st, {});
    CHECK(edge_stress(lo, es) < before);
}

TEST_CASE("layout: mirror-symmetric configurations stay symmetric") {
    // Nodes 0..3 at x>0 mirror nodes 4..7 about the y axis.
    Matrix<float> lo(8, 2);
    const float xs[4] = {0.3f, 1.1f, 0.7f, 2.0f};
    const float ys[4] = {0.0f, 0.5f, -0.8f, 0.2f};
    for (std::size_t i = 0; i < 4; ++i) {
        lo(i, 0) = xs[i];
        lo(i, 1) = ys[i];
        lo(i + 4, 0) = -xs[i];
        lo(i + 4, 1) = ys[i];
    }
    EdgeSet es;
    es.edges = {{0, 1, 1.0}, {0, 3, 1.1}, {0, 4, 0.5}, {1, 2, 0.7}, {1, 5, 1.6}, {2, 3, 1.3},
                {4, 5, 1.0}, {4, 7, 1.1}, {5, 6, 0.7}, {6, 7, 1.3}};
    std::vector<std::uint8_t> pins(8, 0);
    pins[1] = pins[5] = 1;
    LayoutState st{Matrix<double>(8, 2), LayoutParams{}};
    for (int t = 0; t < 500; ++t) {
        layout_tick(lo.view(), es, st, pins);
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(std::abs(lo(i, 0) + lo(i + 4, 0)) <= 1e-6);
            REQUIRE(std::abs(lo(i, 1) - lo(i + 4, 1)) <= 1e-6);
        }
    }
}

TEST_CASE("duplicate: structure, recorded jitter, separation under training") {
    const auto blob = [] {
        // two sub-clusters at (+-1, 0)
        Rng r(1);
        Matrix<float> m(2000, 2);
        for (std::size_t i = 0; i < 2000; ++i) {
            m(i, 0) = static_cast<float>((i % 2 ? 1.0 : -1.0) + 0.2 * r.normal());
            m(i, 1) = static_cast<float>(0.2 * r.normal());
        }
        return Dataset(m);
    }();
    std::vector<double> ranges(2);
    for (std::size_t t = 0; t < 2; ++t)
        ranges[t] = blob.stats().max[t] - blob.stats().min[t];

    LandmarkModel model(Matrix<float>(1, 2, 0.f), Matrix<float>(1, 2, 0.f));
    const auto src = model.ids()[0];
    Rng rng(3);
    const auto res = duplicate_landmark(model, src, ranges, rng);
    CHECK(model.size() == 2);
    CHECK(res.id != src);
    CHECK(std::hypot(res.lo_offset[0], res.lo_offset[1]) == doctest::Approx(kDuplicateLoJitter));
    for (std::size_t t = 0; t < 2; ++t) {
        CHECK(std::abs(res.hi_offset[t]) == doctest::Approx(kDuplicateHiJitter * ranges[t]).epsilon(1e-6));
        CHECK(model.hi()(1, t) - model.hi()(0, t) == res.hi_offset[t]);
    }
    CHECK(model.lo()(1, 0) == doctest::Approx(res.lo_offset[0]));

    const double jitter = std::hypot(res.hi_offset[0], res.hi_offset[1]);
    for (int t = 0; t < 500; ++t)
        kmeans_tick(blob, model, {0.05, 256}, rng);
    CHECK(std::sqrt(sq_euclidean(model.hi().row(0), model.hi().row(1))) > 10 * jitter);
}

TEST_CASE("remove: floor, pinned set, id stability, no stale neighbors") {
    LandmarkModel model(oracle::random_matrix(6, 3, 1), oracle::random_matrix(6, 2, 2));
    const auto ids = model.ids();
    model.set_pinned(2, true);
    remove_landmark(model, ids[2], 4);
    CHECK(model.pinned_ids().empty());
    CHECK(!model.index_of(ids[2]).has_value());
    Rng rng(1);
    const std::vector<double> ranges(3, 1.0);
    const auto d = duplicate_landmark(model, ids[0], ranges, rng);
    CHECK(model.size() == 6);
    for (auto id : ids)
        CHECK(id != d.id);
    remove_landmark(model, ids[1], 4);
    remove_landmark(model, ids[3], 4);
    try {
        remove_landmark(model, ids[4], 4);
        FAIL("expected landmark_floor");
    } catch (const Error &e) {
        CHECK(e.code() == "landmark_floor");
    }
    CHECK_THROWS_AS(remove_landmark(model, ids[2], 1), Error);
    const auto pts = oracle::random_matrix(100, 3, 3);
    const auto nl = knn_base(pts, model.hi(), 4);
    for (auto idx : nl.indices.data())
        CHECK(idx < model.size());
}
