#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "wmc/market.hpp"

using namespace wmc;

namespace {

// Reference volatility grid (percent), the calibration target surface.
constexpr int kNStrikes = 15;
constexpr int kNMats = 10;
const double kStrikes[kNStrikes] = {6505,  7005,  7505,  8006,  8506,
                                    9006,  9507,  10007, 10507, 11008,
                                    11508, 12008, 12509, 13009, 13509};
const double kMats[kNMats] = {0.08, 0.25, 0.50, 0.75, 1, 2, 3, 4, 5, 10};
const double kVolsPct[kNStrikes][kNMats] = {
    {35.86, 30.38, 25.21, 24.04, 22.91, 22.33, 22.82, 23.37, 23.80, 24.55},
    {31.86, 27.38, 23.26, 22.39, 21.41, 21.33, 21.77, 22.37, 22.90, 24.00},
    {27.86, 24.38, 21.31, 20.74, 20.01, 20.33, 20.77, 21.37, 22.00, 23.45},
    {23.86, 21.38, 19.41, 19.09, 18.61, 19.33, 19.77, 20.37, 21.10, 22.90},
    {19.86, 18.38, 17.51, 17.44, 17.31, 18.33, 18.77, 19.47, 20.30, 22.35},
    {16.16, 15.63, 15.61, 15.79, 15.91, 17.33, 17.77, 18.57, 19.50, 21.80},
    {12.77, 13.27, 13.81, 14.20, 14.67, 16.43, 16.87, 17.77, 18.75, 21.30},
    {10.42, 11.37, 12.21, 12.89, 13.53, 15.53, 15.97, 16.97, 18.05, 20.80},
    {10.02, 10.31, 11.13, 11.79, 12.46, 14.68, 15.17, 16.17, 17.35, 20.30},
    {11.00, 10.03, 10.65, 10.97, 11.71, 13.88, 14.47, 15.47, 16.70, 19.85},
    {13.00, 9.98, 10.50, 10.47, 11.21, 13.28, 13.87, 14.77, 16.05, 19.45},
    {15.50, 10.08, 10.40, 10.07, 10.71, 12.68, 13.27, 14.17, 15.45, 19.10},
    {18.50, 10.48, 10.40, 9.87, 10.31, 12.18, 12.87, 13.77, 14.85, 18.80},
    {21.50, 10.98, 10.50, 9.77, 9.91, 11.68, 12.47, 13.37, 14.25, 18.50},
    {24.50, 11.58, 10.80, 9.67, 9.61, 11.38, 12.07, 12.97, 13.85, 18.35}};

VolSurface reference_surface() {
    return load_vol_surface(std::filesystem::path(WMC_DATA_DIR) / "ibex_vols.csv");
}

Market case_market() {
    return Market{{10007.0, {}}, {0.0295, 0.03}, reference_surface()};
}

} // namespace

TEST_CASE("forward factor") {
    Market flat{{10007.0, {}}, {0.02, 0.02}, reference_surface()};
    for (double t : {0.0, 0.5, 3.0, 10.0})
        CHECK(flat.forward(t) == Catch::Approx(10007.0).epsilon(1e-15));

    Market m = case_market();
    CHECK(m.forward(0.0) == 10007.0);
    CHECK(m.forward(1.0) == Catch::Approx(10001.99775066654689).epsilon(1e-14));

    // strictly monotone in t when r != q (here r < q, so decreasing)
    double prev = m.forward(0.0);
    for (double t = 0.5; t <= 10.0; t += 0.5) {
        CHECK(m.forward(t) < prev);
        prev = m.forward(t);
    }
}

TEST_CASE("surface reproduces every grid node exactly") {
    const VolSurface s = reference_surface();
    REQUIRE(s.strikes().size() == kNStrikes);
    REQUIRE(s.maturities().size() == kNMats);
    for (int i = 0; i < kNStrikes; ++i)
        for (int j = 0; j < kNMats; ++j)
            CHECK(s(kStrikes[i], kMats[j]) == kVolsPct[i][j] / 100.0);
}

TEST_CASE("surface interpolation stays inside its bracket") {
    const VolSurface s = reference_surface();
    CHECK(s(10007, 1.0) == Catch::Approx(0.1353));
    CHECK(s(10007, 10.0) == Catch::Approx(0.2080));

    // midway between 9507 and 10007 at t = 1: linear in strike
    const double mid = s(0.5 * (9507 + 10007), 1.0);
    CHECK(mid == Catch::Approx(0.5 * (0.1467 + 0.1353)).epsilon(1e-12));
    CHECK(mid < 0.1467);
    CHECK(mid > 0.1353);

    // between maturities the vol lies between the bracketing node vols
    const double v = s(10007, 1.5);
    CHECK(v > 0.1353);
    CHECK(v < 0.1553);

    // flat extrapolation beyond the grid
    CHECK(s(1000.0, 1.0) == s(6505.0, 1.0));
    CHECK(s(50000.0, 1.0) == s(13509.0, 1.0));
    CHECK(s(10007.0, 20.0) == s(10007.0, 10.0));
    CHECK(s(10007.0, 0.01) == s(10007.0, 0.08));
}

TEST_CASE("surface validation") {
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(2, 2, 0.2);
    CHECK_THROWS_AS(VolSurface({100, 90}, {1, 2}, v), std::invalid_argument);
    CHECK_THROWS_AS(VolSurface({90, 100}, {2, 2}, v), std::invalid_argument);
    CHECK_THROWS_AS(VolSurface({90, 100}, {1, 2}, Eigen::MatrixXd::Constant(3, 2, 0.2)),
                    std::invalid_argument);
    Eigen::MatrixXd neg = v;
    neg(0, 0) = -0.1;
    CHECK_THROWS_AS(VolSurface({90, 100}, {1, 2}, neg), std::invalid_argument);
}

TEST_CASE("black price analytic values") {
    // zero vol: discounted intrinsic
    CHECK(black_price(105.0, 100.0, 0.0, 1.0, 0.9, true) ==
          Catch::Approx(0.9 * 5.0).epsilon(1e-15));
    CHECK(black_price(105.0, 100.0, 0.0, 1.0, 0.9, false) == 0.0);

    // ATM call, F = 100, vol 20%, t = 1, no discounting
    CHECK(black_price(100.0, 100.0, 0.2, 1.0, 1.0, true) ==
          Catch::Approx(7.965567455405796).epsilon(1e-13));
}

TEST_CASE("put-call parity at every surface node") {
    const Market m = case_market();
    for (int i = 0; i < kNStrikes; ++i)
        for (int j = 0; j < kNMats; ++j) {
            const double k = kStrikes[i], t = kMats[j];
            const double lhs = m.vanilla_price(k, t, true) - m.vanilla_price(k, t, false);
            const double rhs = m.discount(t) * (m.forward(t) - k);
            CHECK(std::abs(lhs - rhs) < 1e-10);
        }
}

TEST_CASE("vanilla price monotone in strike at fixed vol") {
    const Market m = case_market();
    const double t = 2.0, vol = m.surface(10007, t);
    double prev_call = black_price(m.forward(t), 7000, vol, t, m.discount(t), true);
    double prev_put = black_price(m.forward(t), 7000, vol, t, m.discount(t), false);
    for (double k = 7500; k <= 13000; k += 500) {
        const double c = black_price(m.forward(t), k, vol, t, m.discount(t), true);
        const double p = black_price(m.forward(t), k, vol, t, m.discount(t), false);
        CHECK(c < prev_call);
        CHECK(p > prev_put);
        prev_call = c;
        prev_put = p;
    }
}

TEST_CASE("surface CSV rejects malformed input") {
    std::istringstream empty("");
    CHECK_THROWS(load_vol_surface(empty));
    std::istringstream ragged("K,1y,2y\n100,10.0\n");
    CHECK_THROWS(load_vol_surface(ragged));
    std::istringstream bad_header("K,1x,2y\n100,10.0,11.0\n");
    CHECK_THROWS(load_vol_surface(bad_header));
    CHECK_THROWS_AS(load_vol_surface(std::filesystem::path("/nonexistent.csv")),
                    std::runtime_error);
}

TEST_CASE("ACT/365 year fractions for the case-study dates") {
    const auto base = parse_iso_date("2005-07-21");
    CHECK(act365(base, parse_iso_date("2005-11-02")) == Catch::Approx(104.0 / 365.0));
    CHECK(act365(base, parse_iso_date("2006-11-02")) == Catch::Approx(469.0 / 365.0));
    CHECK(act365(base, parse_iso_date("2008-11-02")) == Catch::Approx(1200.0 / 365.0));
    CHECK(act365(base, parse_iso_date("2011-10-25")) == Catch::Approx(2287.0 / 365.0));
    CHECK_THROWS_AS(parse_iso_date("2005-13-01"), std::invalid_argument);
    CHECK_THROWS_AS(parse_iso_date("not-a-date"), std::invalid_argument);
}
