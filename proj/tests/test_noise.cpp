#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "navlab/noise.hpp"

using namespace navlab;

namespace {

Mat3 sym(double a00, double a01, double a02, double a11, double a12, double a22) {
    return {{{a00, a01, a02}, {a01, a11, a12}, {a02, a12, a22}}};
}

GaussianMixture3 two_blob_mixture() {
    GaussianMixture3 g;
    g.components.push_back({0.3, {0.2, -0.1, 0.05}, sym(0.01, 0.004, 0.0, 0.02, 0.0, 0.005)});
    g.components.push_back({0.7, {-0.1, 0.05, -0.02}, sym(0.015, 0.0, 0.0, 0.008, -0.003, 0.01)});
    return g;
}

std::vector<Vec3> draw(const GaussianMixture3& g, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(sample(g, rng));
    return out;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/navlab_noise_") + name;
}

}  // namespace

TEST_CASE("symmetric eigenvalues match trace/minor/determinant identities") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Mat3 a{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j <= i; ++j) a[i][j] = a[j][i] = rng.uniform(-2.0, 2.0);
        auto ev = sym_eigenvalues3(a);
        REQUIRE(ev[0] <= ev[1]);
        REQUIRE(ev[1] <= ev[2]);
        double trace = a[0][0] + a[1][1] + a[2][2];
        double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        double minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] -
                        a[0][2] * a[2][0] + a[1][1] * a[2][2] - a[1][2] * a[2][1];
        REQUIRE(ev[0] + ev[1] + ev[2] == Catch::Approx(trace).margin(1e-10));
        REQUIRE(ev[0] * ev[1] * ev[2] == Catch::Approx(det).margin(1e-9));
        REQUIRE(ev[0] * ev[1] + ev[0] * ev[2] + ev[1] * ev[2] ==
                Catch::Approx(minors).margin(1e-9));
    }
}

TEST_CASE("cholesky3 reconstructs the matrix and rejects non-PD input") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        // build SPD as B B^T + small ridge
        Mat3 b{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) b[i][j] = rng.uniform(-1.0, 1.0);
        Mat3 a{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                for (int k = 0; k < 3; ++k) a[i][j] += b[i][k] * b[j][k];
                if (i == j) a[i][j] += 1e-6;
            }
        Mat3 l = cholesky3(a);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double r = 0;
                for (int k = 0; k < 3; ++k) r += l[i][k] * l[j][k];
                REQUIRE(r == Catch::Approx(a[i][j]).margin(1e-10));
            }
    }
    Mat3 indef = sym(1.0, 0.0, 0.0, -1.0, 0.0, 1.0);
    REQUIRE_THROWS_AS(cholesky3(indef), std::invalid_argument);
}

TEST_CASE("mixture validation enforces the documented invariants") {
    GaussianMixture3 ok = two_blob_mixture();
    REQUIRE_NOTHROW(ok.validate());

    GaussianMixture3 bad_sum = ok;
    bad_sum.components[0].weight = 0.2;  // sums to 0.9
    REQUIRE_THROWS_WITH(bad_sum.validate(), Catch::Matchers::ContainsSubstring("sum to 1"));

    GaussianMixture3 bad_eig = ok;
    bad_eig.components[0].cov = sym(1e-12, 0, 0, 1.0, 0, 1.0);
    REQUIRE_THROWS_WITH(bad_eig.validate(), Catch::Matchers::ContainsSubstring("eigenvalue"));

    GaussianMixture3 empty;
    REQUIRE_THROWS_AS(empty.validate(), std::invalid_argument);
}

TEST_CASE("sampling: degenerate limit, reproducibility, moment recovery") {
    GaussianMixture3 tight;
    tight.components.push_back({1.0, {0, 0, 0}, identity3(1e-12)});
    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
        auto x = to_array(sample(tight, rng));
        for (int d = 0; d < 3; ++d) REQUIRE(std::abs(x[d]) < 1e-4);
    }

    GaussianMixture3 g = two_blob_mixture();
    auto a = draw(g, 500, 99);
    auto b = draw(g, 500, 99);
    REQUIRE(a == b);

    const int n = 100000;
    auto s = draw(g, n, 4242);
    // mixture moments
    std::array<double, 3> mean{};
    Mat3 cov{};
    for (const Gaussian3& c : g.components) {
        auto cm = to_array(c.mean);
        for (int d = 0; d < 3; ++d) mean[d] += c.weight * cm[d];
    }
    for (const Gaussian3& c : g.components) {
        auto cm = to_array(c.mean);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                cov[i][j] += c.weight * (c.cov[i][j] + (cm[i] - mean[i]) * (cm[j] - mean[j]));
    }
    std::array<double, 3> emean{};
    for (const Vec3& x : s) {
        auto xa = to_array(x);
        for (int d = 0; d < 3; ++d) emean[d] += xa[d] / n;
    }
    for (int d = 0; d < 3; ++d) {
        double se = std::sqrt(cov[d][d] / n);
        REQUIRE(std::abs(emean[d] - mean[d]) < 3 * se);
    }
    Mat3 ecov{};
    for (const Vec3& x : s) {
        auto xa = to_array(x);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) ecov[i][j] += (xa[i] - emean[i]) * (xa[j] - emean[j]) / n;
    }
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double se = std::sqrt((cov[i][i] * cov[j][j] + cov[i][j] * cov[i][j]) / n);
            REQUIRE(std::abs(ecov[i][j] - cov[i][j]) < 5 * se);  // mixtures have excess kurtosis
        }
}

TEST_CASE("log_density: closed form, quadrature mass, component permutation") {
    GaussianMixture3 std3;
    std3.components.push_back({1.0, {0, 0, 0}, identity3()});
    REQUIRE(log_density(std3, {0, 0, 0}) ==
            Catch::Approx(-1.5 * std::log(2.0 * std::numbers::pi)).margin(1e-14));

    // near-degenerate third dimension: variance 1e-8 (sigma 1e-4)
    GaussianMixture3 flat;
    flat.components.push_back({0.4, {0.15, -0.1, 0.0}, sym(0.01, 0.002, 0.0, 0.02, 0.0, 1e-8)});
    flat.components.push_back({0.6, {-0.15, 0.1, 0.0}, sym(0.02, 0.0, 0.0, 0.01, 0.0, 1e-8)});
    flat.validate();
    const int nx = 120, ny = 120, nz = 120;
    const double lx = 1.6, ly = 1.4, lz = 1.4e-3;  // grids span ~±5 sigma around 0
    double dx = lx / nx, dy = ly / ny, dz = lz / nz;
    double mass = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
        double x = -lx / 2 + (ix + 0.5) * dx;
        for (int iy = 0; iy < ny; ++iy) {
            double y = -ly / 2 + (iy + 0.5) * dy;
            for (int iz = 0; iz < nz; ++iz) {
                double z = -lz / 2 + (iz + 0.5) * dz;
                mass += std::exp(log_density(flat, {x, y, z})) * dx * dy * dz;
            }
        }
    }
    REQUIRE(mass == Catch::Approx(1.0).margin(5e-3));

    GaussianMixture3 swapped = flat;
    std::swap(swapped.components[0], swapped.components[1]);
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
        Vec3 x{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-5e-4, 5e-4)};
        REQUIRE(log_density(flat, x) == Catch::Approx(log_density(swapped, x)).margin(1e-13));
    }
}

TEST_CASE("sampler and density agree on single-Gaussian differential entropy") {
    GaussianMixture3 g;
    g.components.push_back({1.0, {0.1, -0.2, 0.3}, sym(0.02, 0.005, 0.0, 0.03, -0.004, 0.015)});
    double det = 0.02 * (0.03 * 0.015 - 0.004 * 0.004) - 0.005 * (0.005 * 0.015 - 0.0) +
                 0.0;
    double h = 0.5 * std::log(std::pow(2.0 * std::numbers::pi * std::numbers::e, 3) * det);
    const int n = 20000;
    auto s = draw(g, n, 271);
    double avg = 0.0;
    for (const Vec3& x : s) avg += log_density(g, x) / n;
    // Var(log p) = Var(chi2_3)/4 = 1.5 for a Gaussian
    double se = std::sqrt(1.5 / n);
    REQUIRE(std::abs(avg - (-h)) < 4 * se);
}

TEST_CASE("EM: training log-likelihood is nondecreasing and recovers a Gaussian") {
    GaussianMixture3 truth;
    truth.components.push_back({1.0, {0.25, -0.1, 0.05}, sym(0.01, 0.003, 0.0, 0.02, 0.0, 0.004)});
    auto data = draw(truth, 500, 77);
    Rng rng(78);
    EmRun run = em_fit(data, 1, rng);
    REQUIRE(run.curve.size() >= 2);
    for (std::size_t i = 1; i < run.curve.size(); ++i)
        REQUIRE(run.curve[i] - run.curve[i - 1] >= -1e-9);
    run.model.validate();
    auto fitted = to_array(run.model.components[0].mean);
    auto want = to_array(truth.components[0].mean);
    for (int d = 0; d < 3; ++d) {
        double se = std::sqrt(truth.components[0].cov[d][d] / data.size());
        REQUIRE(std::abs(fitted[d] - want[d]) < 3 * se);
    }

    Rng rng2(79);
    EmRun multi = em_fit(data, 3, rng2);
    for (std::size_t i = 1; i < multi.curve.size(); ++i)
        REQUIRE(multi.curve[i] - multi.curve[i - 1] >= -1e-9);
    multi.model.validate();

    REQUIRE_THROWS_AS(em_fit({}, 1, rng), std::invalid_argument);
    std::vector<Vec3> same(50, Vec3{1.0, 2.0, 3.0});
    REQUIRE_THROWS_AS(em_fit(same, 1, rng), std::runtime_error);
}

TEST_CASE("fit_gmm selects k=1 for a single tight Gaussian") {
    GaussianMixture3 truth;
    truth.components.push_back({1.0, {0.02, -0.01, 0.03}, sym(0.004, 0.0, 0.0, 0.003, 0.0, 0.002)});
    auto data = draw(truth, 600, 101);
    Rng rng(102);
    FitResult fit = fit_gmm(data, {1, 2, 3}, 1.0 / 6.0, rng);
    REQUIRE(fit.chosen_k == 1);
    REQUIRE(fit.holdout_scores.size() == 3);
    double chosen_score = 0;
    for (const auto& [k, s] : fit.holdout_scores)
        if (k == fit.chosen_k) chosen_score = s;
    for (const auto& [k, s] : fit.holdout_scores) REQUIRE(chosen_score >= s);
    fit.model.validate();
    auto fitted = to_array(fit.model.components[0].mean);
    auto want = to_array(truth.components[0].mean);
    for (int d = 0; d < 3; ++d) {
        double se = std::sqrt(truth.components[0].cov[d][d] / data.size());
        REQUIRE(std::abs(fitted[d] - want[d]) < 3 * se);
    }
}

TEST_CASE("fit_gmm recovers two well-separated equal-weight components") {
    GaussianMixture3 truth;
    truth.components.push_back({0.5, {0.0, 0.0, 0.0}, sym(0.005, 0.0, 0.0, 0.005, 0.0, 0.002)});
    truth.components.push_back({0.5, {1.0, 0.8, -0.6}, sym(0.004, 0.0, 0.0, 0.006, 0.0, 0.003)});

    // the single-split selector is allowed one miss across ten seeds
    int correct = 0;
    FitResult good;
    bool have_good = false;
    for (int seed = 0; seed < 10; ++seed) {
        auto data = draw(truth, 600, 300 + seed);
        Rng rng(400 + seed);
        FitResult fit = fit_gmm(data, {1, 2, 3}, 1.0 / 6.0, rng);
        if (fit.chosen_k == 2) {
            ++correct;
            if (!have_good) {
                good = std::move(fit);
                have_good = true;
            }
        }
    }
    REQUIRE(correct >= 9);
    REQUIRE(have_good);

    good.model.validate();
    REQUIRE(good.model.components.size() == 2);
    for (const Gaussian3& c : good.model.components) REQUIRE(std::abs(c.weight - 0.5) < 0.05);
    // match fitted components to the generating means, then check each to 3 SE
    auto near = [&](const Vec3& m) {
        double d0 = detail::dist2(m, truth.components[0].mean);
        double d1 = detail::dist2(m, truth.components[1].mean);
        return d0 < d1 ? 0 : 1;
    };
    REQUIRE(near(good.model.components[0].mean) != near(good.model.components[1].mean));
    for (const Gaussian3& c : good.model.components) {
        const Gaussian3& t = truth.components[near(c.mean)];
        auto cm = to_array(c.mean), tm = to_array(t.mean);
        for (int d = 0; d < 3; ++d) {
            double se = std::sqrt(t.cov[d][d] / (0.5 * 600));
            REQUIRE(std::abs(cm[d] - tm[d]) < 3 * se);
        }
    }

    auto data = draw(truth, 600, 303);
    Rng rng(304);
    REQUIRE_THROWS_AS(fit_gmm(data, {1, 2, 100}, 1.0 / 6.0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_gmm(data, {1}, 0.0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_gmm(data, {}, 0.1, rng), std::invalid_argument);
}

TEST_CASE("noise model set: save/load round trip is bit-exact") {
    NoiseModelSet set = make_default_noise_models();
    REQUIRE_NOTHROW(set.validate());
    std::string path = temp_path("roundtrip.txt");
    save_noise_models(set, path);
    NoiseModelSet back = load_noise_models(path);
    for (Action a : {Action::Forward, Action::TurnLeft, Action::TurnRight}) {
        for (auto side : {0, 1}) {
            const GaussianMixture3& g0 = side ? set.sensor.at(a) : set.actuation.at(a);
            const GaussianMixture3& g1 = side ? back.sensor.at(a) : back.actuation.at(a);
            REQUIRE(g0.components.size() == g1.components.size());
            for (std::size_t i = 0; i < g0.components.size(); ++i) {
                REQUIRE(g0.components[i].weight == g1.components[i].weight);
                REQUIRE(g0.components[i].mean == g1.components[i].mean);
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(g0.components[i].cov[r][c] == g1.components[i].cov[r][c]);
            }
        }
    }
}

TEST_CASE("noise model file errors name the offending field") {
    std::string bad_weights = temp_path("badweights.txt");
    {
        std::ofstream out(bad_weights);
        out << "schema: noise-models-v1\n";
        for (const char* kind : {"actuation", "sensor"})
            for (const char* act : {"forward", "turn_left", "turn_right"}) {
                out << "model: kind=" << kind << " action=" << act << " components=1\n";
                out << "component: weight=0.9 mean=0,0,0 cov=1e-4,0,0,1e-4,0,1e-4\n";
            }
    }
    REQUIRE_THROWS_WITH(load_noise_models(bad_weights),
                        Catch::Matchers::ContainsSubstring("sum to 1"));

    std::string bad_field = temp_path("badfield.txt");
    {
        std::ofstream out(bad_field);
        out << "schema: noise-models-v1\n";
        out << "model: kind=actuation action=forward components=1\n";
        out << "component: weight=abc mean=0,0,0 cov=1e-4,0,0,1e-4,0,1e-4\n";
    }
    REQUIRE_THROWS_WITH(load_noise_models(bad_field),
                        Catch::Matchers::ContainsSubstring("bad field 'weight'"));

    std::string missing = temp_path("missing.txt");
    {
        std::ofstream out(missing);
        out << "schema: noise-models-v1\n";
        out << "model: kind=actuation action=forward components=1\n";
        out << "component: weight=1 mean=0,0,0 cov=1e-4,0,0,1e-4,0,1e-4\n";
    }
    REQUIRE_THROWS_WITH(load_noise_models(missing),
                        Catch::Matchers::ContainsSubstring("missing a required action"));

    std::string bad_schema = temp_path("badschema.txt");
    {
        std::ofstream out(bad_schema);
        out << "schema: something-else\n";
    }
    REQUIRE_THROWS_WITH(load_noise_models(bad_schema),
                        Catch::Matchers::ContainsSubstring("schema"));
}

TEST_CASE("csv sample ingestion: header detection and errors") {
    std::string path = temp_path("samples.csv");
    {
        std::ofstream out(path);
        out << "x,y,o\n0.1,0.2,0.3\n-0.4,0.5,-0.6\n";
    }
    auto rows = load_samples_csv(path);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0] == Vec3{0.1, 0.2, 0.3});
    REQUIRE(rows[1] == Vec3{-0.4, 0.5, -0.6});

    std::string bad = temp_path("badsamples.csv");
    {
        std::ofstream out(bad);
        out << "0.1,0.2\n";
    }
    REQUIRE_THROWS_WITH(load_samples_csv(bad), Catch::Matchers::ContainsSubstring("3 columns"));
}
