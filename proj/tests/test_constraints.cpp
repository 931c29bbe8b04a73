#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "wmc/constraints.hpp"

using namespace wmc;

namespace {

Market case_market() {
    auto surface =
        load_vol_surface(std::filesystem::path(WMC_DATA_DIR) / "ibex_vols.csv");
    const auto base = parse_iso_date("2005-07-21");
    std::vector<double> ts;
    for (const char* d : {"2005-11-02", "2006-11-02", "2007-11-02", "2008-11-02",
                          "2009-11-02", "2010-11-02", "2011-10-25"})
        ts.push_back(act365(base, parse_iso_date(d)));
    return Market{{10007.0, ts}, {0.0295, 0.03}, std::move(surface)};
}

Market small_market(double vol, double r = 0.0, double q = 0.0) {
    VolSurface s({80.0, 100.0, 120.0}, {0.5, 2.0},
                 Eigen::MatrixXd::Constant(3, 2, vol));
    return Market{{100.0, {1.0, 2.0}}, {r, q}, std::move(s)};
}

PathMatrix fixed_paths(std::vector<std::vector<double>> rows, std::vector<double> mats) {
    PathMatrix p;
    p.maturities = std::move(mats);
    p.spots.resize(rows.size(), p.maturities.size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t k = 0; k < p.maturities.size(); ++k)
            p.spots(i, k) = rows[i][k];
    return p;
}

} // namespace

TEST_CASE("case study produces 105 smile and 7 forward columns") {
    const Market m = case_market();
    const PathMatrix paths = simulate({200, 1, m.config.maturities}, m);
    const ConstraintSet smile = vanilla_columns(paths, m);
    CHECK(smile.size() == 105);
    const ConstraintSet fwd = forward_columns(paths, m);
    CHECK(fwd.size() == 7);

    // OTM convention: calls strictly above the forward, puts at or below
    for (int j = 0; j < smile.size(); ++j)
        CHECK((smile.kinds[j] == ConstraintKind::vanilla_call ||
               smile.kinds[j] == ConstraintKind::vanilla_put));
}

TEST_CASE("vanilla columns on deterministic paths equal their targets") {
    const Market m = small_market(0.0);
    const PathMatrix paths = simulate({8, 3, m.config.maturities}, m);
    const ConstraintSet cs = vanilla_columns(paths, m);

    for (int j = 0; j < cs.size(); ++j) {
        if (cs.kinds[j] == ConstraintKind::vanilla_call) {
            // OTM calls on zero-vol paths never pay
            CHECK(cs.payoffs.col(j).isZero(0.0));
            CHECK(cs.prices(j) == 0.0);
            CHECK(cs.active_fraction[j] == 0.0);
        } else {
            // ITM puts pay the discounted intrinsic on every path, which is
            // exactly the Black-Scholes zero-vol price
            for (int i = 0; i < cs.n_paths(); ++i)
                CHECK(cs.payoffs(i, j) == Catch::Approx(cs.prices(j)).margin(1e-15));
        }
    }
}

TEST_CASE("deep OTM call column is identically zero") {
    const Market m = small_market(0.1);
    const PathMatrix paths = simulate({100, 5, m.config.maturities}, m);
    const double top = paths.spots.maxCoeff();
    CHECK(top < 120.0 * 2);  // sanity for the strike below

    ConstraintSet cs = vanilla_columns(paths, m);
    // strike 120 at t=1 with 10% vol: essentially no paths reach it
    bool found_zero = false;
    for (int j = 0; j < cs.size(); ++j)
        if (cs.active_fraction[j] == 0.0) {
            CHECK(cs.payoffs.col(j).isZero(0.0));
            found_zero = true;
        }
    CHECK(found_zero);
}

TEST_CASE("forward column prices the dividend-discounted spot") {
    const Market m = small_market(0.2, 0.03, 0.01);
    const PathMatrix paths = simulate({2000, 9, m.config.maturities}, m);
    const ConstraintSet cs = forward_columns(paths, m);
    REQUIRE(cs.size() == 2);
    for (int k = 0; k < 2; ++k) {
        const double t = m.config.maturities[k];
        CHECK(cs.prices(k) == Catch::Approx(std::exp(-0.01 * t)).epsilon(1e-15));
        CHECK(cs.prices(k) ==
              Catch::Approx(m.discount(t) * m.forward(t) / m.config.spot).epsilon(1e-14));
    }
}

TEST_CASE("window grid covers the requested range once per pair") {
    const Market m = case_market();
    const auto windows =
        build_windows(m, m.config.maturities, 0.35, 2.25);
    const int per_pair = windows_per_pair(windows);
    CHECK(per_pair == 40);
    CHECK(windows.size() == static_cast<size_t>(per_pair) * 6);

    // disjoint and contiguous partition, reused for every pair
    for (size_t j = 0; j + 1 < windows.size(); ++j) {
        if (windows[j].t_from != windows[j + 1].t_from)
            continue;
        CHECK(windows[j].upper == windows[j + 1].lower);
        CHECK(windows[j].lower < windows[j].upper);
    }
    // covers [0.35, 2.25] * spot
    CHECK(windows.front().lower <= 0.35 * 10007.0);
    const auto& last = windows[per_pair - 1];
    CHECK(last.upper >= 2.25 * 10007.0);
}

TEST_CASE("window grid degenerates to a single window") {
    VolSurface s({90.0, 110.0}, {1.0, 2.0}, Eigen::MatrixXd::Constant(2, 2, 0.2));
    const Market m{{100.0, {1.0, 2.0}}, {0.0, 0.0}, s};
    const auto windows = build_windows(m, m.config.maturities, 0.95, 1.05);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].lower == 90.0);
    CHECK(windows[0].upper == 110.0);

    CHECK_THROWS_AS(build_windows(m, m.config.maturities, 1.05, 1.10),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_windows(m, m.config.maturities, -0.1, 1.10),
                    std::invalid_argument);
}

TEST_CASE("window extension never crosses below zero") {
    // a coarse grid whose strike gap exceeds the lowest strike: the downward
    // extension must stop instead of producing a non-positive edge
    VolSurface s({5000.0, 20000.0}, {1.0, 2.0}, Eigen::MatrixXd::Constant(2, 2, 0.2));
    const Market m{{10007.0, {1.0, 2.0}}, {0.0, 0.0}, s};
    const auto windows = build_windows(m, m.config.maturities, 0.35, 2.25);
    REQUIRE(!windows.empty());
    for (const auto& w : windows) {
        CHECK(w.lower > 0.0);
        CHECK(w.lower < w.upper);
    }
}

TEST_CASE("martingale columns reject malformed windows") {
    const Market m = small_market(0.2);
    const PathMatrix paths = fixed_paths({{100, 110}, {100, 90}}, {1.0, 2.0});
    CHECK_THROWS_AS(
        martingale_columns(paths, {{MartingaleWindow{105, 95, 1.0, 2.0}}}, m),
        std::invalid_argument);
    CHECK_THROWS_AS(
        martingale_columns(paths, {{MartingaleWindow{95, 105, 2.0, 1.0}}}, m),
        std::invalid_argument);
}

TEST_CASE("martingale column values and zero price") {
    const Market m = small_market(0.2, 0.0, 0.0);  // r = q = 0: forward ratio 1
    const PathMatrix paths =
        fixed_paths({{100, 110}, {100, 90}, {150, 170}}, {1.0, 2.0});
    const MartingaleWindow w{95, 105, 1.0, 2.0};
    const ConstraintSet cs = martingale_columns(paths, {{w}}, m);
    REQUIRE(cs.size() == 1);
    CHECK(cs.prices(0) == 0.0);
    CHECK(cs.payoffs(0, 0) == Catch::Approx(10.0 / 100.0));   // in-window, +10
    CHECK(cs.payoffs(1, 0) == Catch::Approx(-10.0 / 100.0));  // in-window, -10
    CHECK(cs.payoffs(2, 0) == 0.0);                           // outside the window
    CHECK(cs.active_fraction[0] == Catch::Approx(2.0 / 3.0));

    // symmetric +10/-10 cancel under uniform probabilities
    CHECK(cs.payoffs.col(0).mean() == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("window partition telescopes to the forward-difference security") {
    const Market m = case_market();
    const PathMatrix paths = simulate({3000, 3, m.config.maturities}, m);
    const auto windows = build_windows(m, m.config.maturities, 0.35, 2.25);
    const ConstraintSet cs = martingale_columns(paths, windows, m);

    const double t1 = m.config.maturities[0], t2 = m.config.maturities[1];
    const double ratio = m.forward(t1) / m.forward(t2);
    const double scale = m.discount(t2) / m.config.spot;
    const double lo = windows.front().lower;
    const double hi = windows[windows_per_pair(windows) - 1].upper;

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(paths.n_paths());
    for (size_t j = 0; j < windows.size(); ++j)
        if (windows[j].t_from == t1)
            sum += cs.payoffs.col(j);
    for (int i = 0; i < paths.n_paths(); ++i) {
        const double s1 = paths.spots(i, 0);
        if (s1 >= lo && s1 < hi) {
            const double expected = (paths.spots(i, 1) * ratio - s1) * scale;
            CHECK(sum(i) == Catch::Approx(expected).margin(1e-14));
        } else {
            CHECK(sum(i) == 0.0);
        }
    }
}

TEST_CASE("filter removes inactive columns and reports them") {
    const Market m = small_market(0.2);
    PathMatrix paths = simulate({1000, 3, m.config.maturities}, m);
    ConstraintSet cs = vanilla_columns(paths, m);
    cs.append(forward_columns(paths, m));
    cs.weights = Eigen::VectorXd::Constant(cs.size(), 1e-7);

    const FilterResult fr = filter_constraints(cs, 0.01);
    CHECK(fr.kept.size() + fr.n_removed() == cs.size());
    for (const auto& r : fr.report)
        if (!r.kept)
            CHECK(r.active_fraction < 0.01);
    for (double a : fr.kept.active_fraction)
        CHECK(a >= 0.01);

    // idempotent
    const FilterResult again = filter_constraints(fr.kept, 0.01);
    CHECK(again.n_removed() == 0);
    CHECK(again.kept.size() == fr.kept.size());

    // threshold zero still drops exactly-all-zero columns
    const FilterResult zero_thr = filter_constraints(cs, 0.0);
    for (const auto& r : zero_thr.report)
        CHECK(r.kept == (r.active_fraction > 0.0));
}

TEST_CASE("filter refuses to remove every column") {
    const Market m = small_market(0.0);
    const PathMatrix paths = simulate({10, 3, m.config.maturities}, m);
    ConstraintSet cs = vanilla_columns(paths, m);
    // keep only the all-zero OTM call columns
    std::vector<int> zeros;
    for (int j = 0; j < cs.size(); ++j)
        if (cs.active_fraction[j] == 0.0)
            zeros.push_back(j);
    REQUIRE(!zeros.empty());
    const ConstraintSet dead = cs.select(zeros);
    CHECK_THROWS_AS(filter_constraints(dead, 0.5), std::runtime_error);
    CHECK_THROWS_AS(filter_constraints(cs, 1.0), std::invalid_argument);
}

TEST_CASE("constraint set append checks path counts") {
    const Market m = small_market(0.2);
    const PathMatrix a = simulate({100, 3, m.config.maturities}, m);
    const PathMatrix b = simulate({50, 3, m.config.maturities}, m);
    ConstraintSet cs = vanilla_columns(a, m);
    CHECK_THROWS_AS(cs.append(vanilla_columns(b, m)), std::invalid_argument);
}
