#include "sae/covariates.hpp"
#include "sae/model_formula.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sae;

namespace {

AreaCovariateTable table_from(const std::string& text) {
    std::istringstream in(text);
    return AreaCovariateTable::from_csv(parse_csv(in));
}

DeprivationMatrix make_dep(std::vector<double> hh_w, std::vector<std::vector<double>> rows, std::vector<double> ind_w,
                           double cutoff = 0.30) {
    DeprivationMatrix dep;
    dep.household_weights = Eigen::Map<Eigen::VectorXd>(hh_w.data(), static_cast<Eigen::Index>(hh_w.size()));
    dep.indicator_weights = Eigen::Map<Eigen::VectorXd>(ind_w.data(), static_cast<Eigen::Index>(ind_w.size()));
    dep.indicators.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ind_w.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            dep.indicators(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    dep.cutoff = cutoff;
    return dep;
}

} // namespace

TEST(AlkireFoster, TwoHouseholdExample) {
    // Scores 0.5 and 0; only the first is poor at k = 0.3.
    const auto r = alkire_foster(make_dep({1.0, 1.0}, {{1, 0}, {0, 0}}, {0.5, 0.5}));
    EXPECT_DOUBLE_EQ(r.scores[0], 0.5);
    EXPECT_DOUBLE_EQ(r.incidence, 0.5);
    EXPECT_DOUBLE_EQ(r.intensity, 0.5);
    EXPECT_DOUBLE_EQ(r.adjusted_headcount, 0.25);
}

TEST(AlkireFoster, ScoreExactlyAtCutoffIsPoor) {
    // 0.1 + 0.2 is not exactly 0.3 in binary; still poor.
    const auto r = alkire_foster(make_dep({1.0}, {{1, 1, 0}}, {0.1, 0.2, 0.7}, 0.3));
    EXPECT_TRUE(r.poor[0]);
}

TEST(AlkireFoster, MatchesBruteForceOnRandomMatrices) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> w(0.5, 20.0);
    std::bernoulli_distribution dep_bit(0.35);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 30, k = 6;
        std::vector<double> hh(n), ind(k, 1.0 / k);
        std::vector<std::vector<double>> rows(n, std::vector<double>(k));
        for (int i = 0; i < n; ++i) {
            hh[i] = w(rng);
            for (int j = 0; j < k; ++j) rows[i][j] = dep_bit(rng) ? 1.0 : 0.0;
        }
        const auto r = alkire_foster(make_dep(hh, rows, ind, 2.0 / 6.0));
        double tot = 0, poor_w = 0, poor_c = 0, m0 = 0;
        for (int i = 0; i < n; ++i) {
            int count = 0;
            for (int j = 0; j < k; ++j) count += rows[i][j] > 0.5;
            tot += hh[i];
            if (count >= 2) {
                poor_w += hh[i];
                poor_c += hh[i] * count / 6.0;
                m0 += hh[i] * count / 6.0;
            }
        }
        EXPECT_NEAR(r.incidence, poor_w / tot, 1e-12);
        if (poor_w > 0) EXPECT_NEAR(r.intensity, poor_c / poor_w, 1e-12);
        // M0 equals the censored weighted mean score.
        EXPECT_NEAR(r.adjusted_headcount, m0 / tot, 1e-12);
    }
}

TEST(AlkireFoster, ValidatesInputs) {
    EXPECT_THROW(alkire_foster(make_dep({1.0}, {{1, 0}}, {0.6, 0.6})), InputError);
    EXPECT_THROW(alkire_foster(make_dep({0.0}, {{1, 0}}, {0.5, 0.5})), InputError);
    EXPECT_THROW(alkire_foster(make_dep({1.0}, {{2, 0}}, {0.5, 0.5})), InputError);
    EXPECT_THROW(alkire_foster(make_dep({1.0}, {{1, 0}}, {0.5, 0.5}, 0.0)), InputError);
}

TEST(Transforms, LogReciprocal) {
    const std::vector<double> h{1.0, 0.5, 0.1};
    const auto r = reciprocal(h);
    const auto l = log_reciprocal(h);
    EXPECT_DOUBLE_EQ(r[1], 2.0);
    EXPECT_DOUBLE_EQ(l[0], 0.0);
    EXPECT_NEAR(l[1], std::log(2.0), 1e-15);
    EXPECT_NEAR(l[2], std::log(10.0), 1e-15);
    const std::vector<double> zero{0.0};
    const std::vector<double> above{1.5};
    EXPECT_THROW(log_reciprocal(zero), InputError);
    EXPECT_THROW(reciprocal(above), InputError);
}

TEST(Residualize, HandWorkedSimpleRegression) {
    const std::vector<double> x{0.0, 1.0, 2.0}, y{0.0, 0.0, 3.0};
    const auto r = ols_residualize(y, std::span<const double>(x));
    EXPECT_NEAR(r.coefficients[0], -0.5, 1e-12);
    EXPECT_NEAR(r.coefficients[1], 1.5, 1e-12);
    EXPECT_NEAR(r.residuals[0], 0.5, 1e-12);
    EXPECT_NEAR(r.residuals[1], -1.0, 1e-12);
    EXPECT_NEAR(r.residuals[2], 0.5, 1e-12);
}

TEST(Residualize, ResidualsAreOrthogonalToRegressors) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 19;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 1e5 + 1e6 * std::abs(z(rng));
            y[i] = 100 + 4e-5 * x[i] + 10 * z(rng);
        }
        const auto r = ols_residualize(y, std::span<const double>(x));
        double s = 0, sx = 0, scale = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s += r.residuals[i];
            sx += r.residuals[i] * x[i];
            scale += std::abs(r.residuals[i] * x[i]);
        }
        EXPECT_NEAR(s, 0.0, 1e-9);
        EXPECT_NEAR(sx / scale, 0.0, 1e-9);
    }
}

TEST(Residualize, RejectsDegenerateInput) {
    const std::vector<double> y{1, 2, 3, 4}, constant{5, 5, 5, 5}, two{1, 2};
    EXPECT_THROW(ols_residualize(y, std::span<const double>(constant)), InputError);
    EXPECT_THROW(ols_residualize(two, std::span<const double>(two)), InputError);
}

TEST(Standardize, ZeroMeanUnitSd) {
    const std::vector<double> v{1, 2, 3, 4, 10};
    const auto s = standardize(v);
    double m = 0, ss = 0;
    for (double x : s) m += x;
    for (double x : s) ss += x * x;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(ss / 4.0, 1.0, 1e-12);
}

TEST(AreaTable, LoadsNumericAndLabelColumns) {
    const auto t = table_from("domain_id,name,incidence,valorization\n"
                              "1,North,0.5,120\n"
                              "2,South,NA,130\n");
    EXPECT_EQ(t.size(), 2u);
    EXPECT_TRUE(t.has_column("incidence"));
    EXPECT_FALSE(t.has_column("name"));
    EXPECT_TRUE(std::isnan(t.column("incidence")[1]));
    EXPECT_THROW(t.complete_column("incidence"), InputError);
    EXPECT_THROW(t.column("missing"), InputError);
    EXPECT_THROW(table_from("domain_id,x\n1,2\n1,3\n"), InputError);
}

TEST(AreaTable, SelectReordersAndRejectsUnknownIds) {
    const auto t = table_from("domain_id,x\n1,10\n2,20\n3,30\n");
    const std::vector<std::string> ids{"3", "1"};
    const auto s = t.select(ids);
    EXPECT_EQ(s.domain_ids(), ids);
    EXPECT_DOUBLE_EQ(s.column("x")[0], 30.0);
    const std::vector<std::string> unknown{"9"};
    EXPECT_THROW(t.select(unknown), InputError);
}

TEST(DeriveCovariates, AppendsRequestedColumns) {
    auto t = table_from("domain_id,incidence,valorization,population_projection\n"
                        "1,0.5,100,1000\n"
                        "2,0.25,150,2000\n"
                        "3,0.1,170,3000\n"
                        "4,0.2,260,4000\n");
    const std::vector<std::string> emit{"log_ri", "zeta"};
    derive_covariates(t, emit);
    EXPECT_NEAR(t.column("log_ri")[1], std::log(4.0), 1e-14);
    const auto& z = t.column("zeta");
    EXPECT_NEAR(z[0] + z[1] + z[2] + z[3], 0.0, 1e-9);
    const std::vector<std::string> bad{"nope"};
    EXPECT_THROW(derive_covariates(t, bad), InputError);

    const std::string csv = t.to_csv();
    EXPECT_NE(csv.find("log_ri,zeta"), std::string::npos);
}

TEST(DeriveCovariates, StandardizedZetaIsAPositiveRescaling) {
    const std::string text = "domain_id,incidence,valorization,population_projection\n"
                             "1,0.5,100,1000\n2,0.25,150,2000\n3,0.1,170,3000\n4,0.2,260,4000\n5,0.3,210,3500\n";
    auto raw = table_from(text), scaled = table_from(text);
    const std::vector<std::string> emit{"zeta"};
    derive_covariates(raw, emit);
    CovariateOptions opt;
    opt.standardize_zeta = true;
    derive_covariates(scaled, emit, opt);
    const double ratio = scaled.column("zeta")[0] / raw.column("zeta")[0];
    EXPECT_GT(ratio, 0.0);
    for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(scaled.column("zeta")[d], ratio * raw.column("zeta")[d], 1e-12);
}

TEST(ModelFormula, ParsesTermsAndInteractions) {
    const auto f = ModelFormula::parse("y ~ log_ri * zeta");
    EXPECT_EQ(f.response(), "y");
    const std::vector<std::string> expected{"(Intercept)", "log_ri", "zeta", "log_ri:zeta"};
    EXPECT_EQ(f.column_names(), expected);
    EXPECT_EQ(f.n_params(), 4u);

    const auto g = ModelFormula::parse("y~a+b:c");
    const std::vector<std::string> g_cols{"(Intercept)", "a", "b:c"};
    EXPECT_EQ(g.column_names(), g_cols);
    EXPECT_EQ(ModelFormula::parse("y ~ 1").n_params(), 1u);

    EXPECT_THROW(ModelFormula::parse("log_ri + zeta"), InputError);
    EXPECT_THROW(ModelFormula::parse("y ~ "), InputError);
    EXPECT_THROW(ModelFormula::parse("y ~ a + "), InputError);
}

TEST(ModelFormula, DesignMatrixMultipliesInteractions) {
    const auto t = table_from("domain_id,a,b\n1,2,3\n2,4,5\n");
    const auto x = ModelFormula::parse("y ~ a * b").design_matrix(t);
    ASSERT_EQ(x.rows(), 2);
    ASSERT_EQ(x.cols(), 4);
    EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(x(1, 1), 4.0);
    EXPECT_DOUBLE_EQ(x(1, 3), 20.0);
    EXPECT_THROW(ModelFormula::parse("y ~ c").design_matrix(t), InputError);
}
