#include <cmath>

#include "doctest.h"
#include "oracle.hpp"
#include "retinavit/errors.hpp"
#include "retinavit/nn.hpp"
#include "retinavit/posembed.hpp"
#include "retinavit/pyramid.hpp"

using namespace retinavit;

namespace {

PosEmbedGrid make_grid(int cells, int dim, int cell_edge) {
    PosEmbedGrid g = sincos2d(cells, cells, dim);
    g.cell_edge = cell_edge;
    return g;
}

double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("sincos2d structure and norms") {
    SUBCASE("origin cell: sines zero, cosines one") {
        const PosEmbedGrid g = sincos2d(3, 3, 16);
        const double* v = g.at(0, 0);
        const int q = 4;
        for (int k = 0; k < q; ++k) {
            CHECK(v[k] == 0.0);
            CHECK(v[q + k] == 1.0);
            CHECK(v[2 * q + k] == 0.0);
            CHECK(v[3 * q + k] == 1.0);
        }
        CHECK(vec_norm(std::vector<double>(v, v + 16)) == doctest::Approx(std::sqrt(8.0)));
    }
    SUBCASE("dim 4 is [sin y, cos y, sin x, cos x]") {
        const PosEmbedGrid g = sincos2d(5, 5, 4);
        const double* v = g.at(3, 2);
        CHECK(v[0] == doctest::Approx(std::sin(3.0)));
        CHECK(v[1] == doctest::Approx(std::cos(3.0)));
        CHECK(v[2] == doctest::Approx(std::sin(2.0)));
        CHECK(v[3] == doctest::Approx(std::cos(2.0)));
        CHECK(vec_norm(std::vector<double>(v, v + 4)) == doctest::Approx(std::sqrt(2.0)));
    }
    SUBCASE("14x14 at dim 384: every norm is sqrt(192)") {
        const PosEmbedGrid g = sincos2d(14, 14, 384);
        for (int y = 0; y < 14; ++y) {
            for (int x = 0; x < 14; ++x) {
                const double* v = g.at(y, x);
                double s = 0.0;
                for (int k = 0; k < 384; ++k) s += v[k] * v[k];
                CHECK(std::abs(std::sqrt(s) - std::sqrt(192.0)) < 1e-6);
            }
        }
    }
    SUBCASE("rejects dim not divisible by 4") {
        CHECK_THROWS_AS(sincos2d(4, 4, 6), DataError);
        CHECK_THROWS_AS(sincos2d(4, 4, 16, -1.0), DataError);
    }
}

TEST_CASE("overlap_weights") {
    SUBCASE("full cell alignment gives a single weight 1") {
        const auto w = overlap_weights({16.0, 32.0, 16.0}, 16, 14, 14);
        REQUIRE(w.size() == 1);
        CHECK(w[0].cell_row == 1);
        CHECK(w[0].cell_col == 2);
        CHECK(w[0].weight == 1.0);
    }
    SUBCASE("28x28 box at the origin, cell 16") {
        const auto w = overlap_weights({0.0, 0.0, 28.0}, 16, 14, 14);
        REQUIRE(w.size() == 4);
        auto get = [&](int r, int c) {
            for (const auto& ow : w) {
                if (ow.cell_row == r && ow.cell_col == c) return ow.weight;
            }
            FAIL("missing cell");
            return 0.0;
        };
        CHECK(get(0, 0) == doctest::Approx(256.0 / 784.0).epsilon(1e-12));
        CHECK(get(0, 1) == doctest::Approx(192.0 / 784.0).epsilon(1e-12));
        CHECK(get(1, 0) == doctest::Approx(192.0 / 784.0).epsilon(1e-12));
        CHECK(get(1, 1) == doctest::Approx(144.0 / 784.0).epsilon(1e-12));
    }
    SUBCASE("whole image: uniform 1/196") {
        const auto w = overlap_weights({0.0, 0.0, 224.0}, 16, 14, 14);
        REQUIRE(w.size() == 196);
        for (const auto& ow : w) CHECK(ow.weight == doctest::Approx(1.0 / 196.0).epsilon(1e-12));
    }
    SUBCASE("weights sum to 1 within 1e-12, integer and dyadic boxes") {
        Rng rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            double edge, top, left;
            if (trial % 2 == 0) {
                edge = 1 + rng.next_int(224);
                top = rng.next_int(224 - static_cast<int>(edge) + 1);
                left = rng.next_int(224 - static_cast<int>(edge) + 1);
            } else {
                // dyadic quarters, as produced by fractional-stride levels
                edge = (4 + rng.next_int(896 - 8)) * 0.25;
                top = rng.next_int(static_cast<int>(4 * (224 - edge)) + 1) * 0.25;
                left = rng.next_int(static_cast<int>(4 * (224 - edge)) + 1) * 0.25;
            }
            const auto w = overlap_weights({top, left, edge}, 16, 14, 14);
            double sum = 0.0;
            for (const auto& ow : w) sum += ow.weight;
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
    SUBCASE("integer boxes match per-pixel cell counting exactly") {
        Rng rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            const int edge = 1 + rng.next_int(64);
            const int top = rng.next_int(224 - edge + 1);
            const int left = rng.next_int(224 - edge + 1);
            const auto w = overlap_weights({static_cast<double>(top), static_cast<double>(left),
                                            static_cast<double>(edge)},
                                           16, 14, 14);
            // brute-force pixel counts per cell
            std::vector<std::vector<long long>> counts(14, std::vector<long long>(14, 0));
            for (int y = top; y < top + edge; ++y) {
                for (int x = left; x < left + edge; ++x) ++counts[static_cast<size_t>(y / 16)][static_cast<size_t>(x / 16)];
            }
            long long total = static_cast<long long>(edge) * edge;
            for (const auto& ow : w) {
                const double expected = static_cast<double>(counts[static_cast<size_t>(ow.cell_row)][static_cast<size_t>(ow.cell_col)]) / total;
                CHECK(ow.weight == expected);  // both are single IEEE divisions
            }
        }
    }
    SUBCASE("rejects boxes outside the grid") {
        CHECK_THROWS_AS(overlap_weights({-1.0, 0.0, 8.0}, 16, 14, 14), DataError);
        CHECK_THROWS_AS(overlap_weights({0.0, 220.0, 8.0}, 16, 14, 14), DataError);
    }
}

TEST_CASE("scaled_avg_posembed norms follow the receptive-field rule") {
    const auto spec = PyramidSpec::retina(224, 16, 16);
    const Pyramid pyr = build_pyramid(ImageTensor(224, 224, 1), spec);
    const auto patches = extract_patches(pyr);
    const PosEmbedGrid grid = make_grid(14, 64, 16);

    SUBCASE("base-level patch: own grid vector rescaled to norm 1") {
        const auto pe = scaled_avg_posembed(patches[15], grid, 1.0);
        CHECK(vec_norm(pe.vector) == doctest::Approx(1.0).epsilon(1e-12));
        // direction matches the cell vector (single-cell average)
        const double* gv = grid.at(patches[15].grid_row, patches[15].grid_col);
        const double gn = std::sqrt(64.0 / 2.0);
        for (int k = 0; k < 64; ++k) {
            CHECK(pe.vector[static_cast<size_t>(k)] == doctest::Approx(gv[k] / gn).epsilon(1e-9));
        }
    }
    SUBCASE("level norms: 1, sqrt(1.75), sqrt(3.5), sqrt(7), sqrt(14)") {
        const auto pos = posembed_sequence(patches, grid, 1.0);
        const double expected[5] = {1.0, std::sqrt(1.75), std::sqrt(3.5), std::sqrt(7.0),
                                    std::sqrt(14.0)};
        for (size_t i = 0; i < pos.size(); ++i) {
            const double want = expected[pos[i].level_index];
            CHECK(std::abs(vec_norm(pos[i].vector) - want) < 1e-6);
            CHECK(pos[i].norm_target == doctest::Approx(want));
        }
    }
    SUBCASE("norm scales linearly with base_norm_scale") {
        const auto pe1 = scaled_avg_posembed(patches[200], grid, 1.0);
        const auto pe2 = scaled_avg_posembed(patches[200], grid, std::sqrt(32.0));
        CHECK(vec_norm(pe2.vector) ==
              doctest::Approx(std::sqrt(32.0) * vec_norm(pe1.vector)).epsilon(1e-9));
    }
    SUBCASE("identical receptive fields give identical embeddings") {
        const auto a = scaled_avg_posembed(patches[3], grid, 2.0);
        PatchRecord copy = patches[3];
        copy.pixels.assign(copy.pixels.size(), 0.77);  // pixels are irrelevant
        const auto b = scaled_avg_posembed(copy, grid, 2.0);
        CHECK(a.vector == b.vector);
    }
    SUBCASE("zero average is rejected") {
        PosEmbedGrid zeros;
        zeros.grid_h = zeros.grid_w = 2;
        zeros.dim = 4;
        zeros.cell_edge = 16;
        zeros.vectors = Mat(4, 4);
        CHECK_THROWS_AS(scaled_avg_posembed(patches[0], zeros, 1.0), DataError);
    }
}

TEST_CASE("analytic averages equal the naive backfill oracle") {
    SUBCASE("random integer boxes on the 14x14 grid") {
        const PosEmbedGrid grid = make_grid(14, 16, 16);
        Rng rng(31);
        for (int trial = 0; trial < 60; ++trial) {
            const int edge = 1 + rng.next_int(64);
            const int top = rng.next_int(224 - edge + 1);
            const int left = rng.next_int(224 - edge + 1);

            const auto naive = oracle::naive_backfill_average(top, left, edge, grid);
            const auto ws = overlap_weights({static_cast<double>(top), static_cast<double>(left),
                                             static_cast<double>(edge)},
                                            16, 14, 14);
            for (int k = 0; k < grid.dim; ++k) {
                double analytic = 0.0;
                for (const auto& ow : ws) analytic += ow.weight * grid.at(ow.cell_row, ow.cell_col)[k];
                CHECK(std::abs(analytic - naive[static_cast<size_t>(k)]) < 1e-12);
            }
        }
    }
    SUBCASE("every patch of a (64,16,16) pyramid") {
        const auto spec = PyramidSpec::retina(64, 16, 16);
        const auto patches = extract_patches(build_pyramid(ImageTensor(64, 64, 1), spec));
        const PosEmbedGrid grid = make_grid(4, 16, 16);
        for (const auto& p : patches) {
            const auto naive = oracle::naive_backfill_average(
                static_cast<int>(p.rf_box.top), static_cast<int>(p.rf_box.left),
                static_cast<int>(p.rf_box.edge), grid);
            const auto ws = overlap_weights(p.rf_box, 16, 4, 4);
            for (int k = 0; k < grid.dim; ++k) {
                double analytic = 0.0;
                for (const auto& ow : ws) analytic += ow.weight * grid.at(ow.cell_row, ow.cell_col)[k];
                CHECK(std::abs(analytic - naive[static_cast<size_t>(k)]) < 1e-5);
            }
        }
    }
    SUBCASE("whole-image box equals the grand cell mean") {
        const PosEmbedGrid grid = make_grid(4, 16, 16);
        const auto naive = oracle::naive_backfill_average(0, 0, 64, grid);
        for (int k = 0; k < 16; ++k) {
            double mean = 0.0;
            for (int y = 0; y < 4; ++y) {
                for (int x = 0; x < 4; ++x) mean += grid.at(y, x)[k];
            }
            mean /= 16.0;
            CHECK(naive[static_cast<size_t>(k)] == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("posembed_sequence over a single-level spec") {
    const auto spec = PyramidSpec::single_level(224, 16, 16);
    const auto patches = extract_patches(build_pyramid(ImageTensor(224, 224, 1), spec));
    const PosEmbedGrid grid = make_grid(14, 32, 16);
    const auto pos = posembed_sequence(patches, grid, 3.0);
    REQUIRE(pos.size() == 196);
    for (const auto& pe : pos) CHECK(vec_norm(pe.vector) == doctest::Approx(3.0).epsilon(1e-9));
}
