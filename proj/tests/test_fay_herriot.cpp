#include "fh_oracle.hpp"

#include "sae/fay_herriot.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sae;

namespace {

AreaLevelDataset balanced(const std::vector<double>& y, double s2) {
    AreaLevelDataset data;
    const auto D = static_cast<Eigen::Index>(y.size());
    data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), D);
    data.sigma2 = Eigen::VectorXd::Constant(D, s2);
    data.X = Eigen::MatrixXd::Ones(D, 1);
    data.column_names = {"(Intercept)"};
    return data;
}

double sum_sq_dev(const std::vector<double>& y) {
    double m = 0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    double s = 0;
    for (double v : y) s += (v - m) * (v - m);
    return s;
}

} // namespace

TEST(ProfileLikelihood, MatchesDenseOracle) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> s2u(0.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto data = oracle::random_dataset(rng, 8 + trial % 30, 1 + trial % 4);
        const double s = s2u(rng);
        for (bool reml : {false, true}) {
            const auto kind = reml ? Likelihood::reml : Likelihood::ml;
            const double ref = oracle::loglik(data, s, reml);
            EXPECT_NEAR(profile_log_likelihood(data, s, kind), ref, 1e-9 * std::abs(ref));
        }
    }
}

TEST(ProfileLikelihood, ScoreMatchesCentralDifferences) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> s2u(0.2, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto data = oracle::random_dataset(rng, 10 + trial % 20, 1 + trial % 4);
        const double s = s2u(rng);
        const double h = 1e-5 * s;
        for (auto kind : {Likelihood::ml, Likelihood::reml}) {
            const double fd = (profile_log_likelihood(data, s + h, kind) - profile_log_likelihood(data, s - h, kind)) /
                              (2.0 * h);
            const double an = profile_score(data, s, kind);
            EXPECT_NEAR(an, fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(ProfileLikelihood, FisherInformationClosedForms) {
    // Intercept only, common variance v: ML info D/(2v^2), REML info (D-1)/(2v^2).
    const auto data = balanced({1.0, 2.5, 0.3, 4.1, 2.2}, 0.7);
    const double v = 1.3 + 0.7;
    EXPECT_NEAR(fisher_information(data, 1.3, Likelihood::ml), 5.0 / (2 * v * v), 1e-12);
    EXPECT_NEAR(fisher_information(data, 1.3, Likelihood::reml), 4.0 / (2 * v * v), 1e-12);
    EXPECT_NEAR(asymptotic_variance_sigma2_u(data.sigma2, 1.3), 2.0 * v * v / 5.0, 1e-12);
}

TEST(FitFH, BalancedInterceptModelHasClosedForms) {
    const std::vector<double> y{3.1, 5.6, 1.2, 7.4, 4.4, 2.9, 6.3};
    const double s2 = 0.5;
    const auto data = balanced(y, s2);
    const double ss = sum_sq_dev(y);
    const auto D = static_cast<double>(y.size());
    EXPECT_NEAR(fit_fh(data, FitMethod::ml).sigma2_u, ss / D - s2, 1e-7);
    EXPECT_NEAR(fit_fh(data, FitMethod::reml).sigma2_u, ss / (D - 1) - s2, 1e-7);
    EXPECT_NEAR(fit_fh(data, FitMethod::fh_moment).sigma2_u, ss / (D - 1) - s2, 1e-7);
}

TEST(FitFH, AgreesWithDenseOracleMaximizer) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 40; ++trial) {
        const auto data = oracle::random_dataset(rng, 10 + trial, 1 + trial % 4);
        for (bool reml : {false, true}) {
            const auto fit = fit_fh(data, reml ? FitMethod::reml : FitMethod::ml);
            const double ref = oracle::argmax(data, reml, 20.0);
            if (fit.at_boundary) {
                EXPECT_LT(ref, 1e-3);
            } else {
                EXPECT_NEAR(fit.sigma2_u, ref, 1e-4 * std::max(1.0, ref)) << "trial " << trial;
                EXPECT_NEAR(fit.score_at_estimate, 0.0, 1e-6);
            }
            EXPECT_GE(oracle::loglik(data, fit.sigma2_u, reml) + 1e-9, oracle::loglik(data, ref, reml));
        }
    }
}

TEST(FitFH, BetaAndCovarianceMatchDenseGls) {
    std::mt19937_64 rng(44);
    const auto data = oracle::random_dataset(rng, 25, 3);
    const auto fit = fit_fh(data);
    const auto o = oracle::dense(data, fit.sigma2_u);
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(fit.beta[j], o.beta[j], 1e-10 * std::max(1.0, std::abs(o.beta[j])));
        for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(fit.beta_cov(j, k), o.XtVinvX_inv(j, k), 1e-10);
    }
    EXPECT_NEAR(fit.loglik, oracle::loglik(data, fit.sigma2_u, false), 1e-9);
    EXPECT_NEAR(fit.restricted_loglik, oracle::loglik(data, fit.sigma2_u, true), 1e-9);
    EXPECT_NEAR(fit.aic, -2.0 * fit.loglik + 2.0 * 4.0, 1e-12);
    EXPECT_DOUBLE_EQ(aic(fit), fit.aic);
}

TEST(FitFH, BoundaryWhenDirectEstimatesAgreeTooWell) {
    const auto data = balanced({2.0, 2.01, 1.99, 2.02, 1.98, 2.0}, 1.0);
    for (auto m : {FitMethod::ml, FitMethod::reml, FitMethod::fh_moment}) {
        const auto fit = fit_fh(data, m);
        EXPECT_EQ(fit.sigma2_u, 0.0);
        EXPECT_TRUE(fit.at_boundary);
        const auto pred = eblup(fit, data);
        for (const auto& d : pred.domains) {
            EXPECT_EQ(d.gamma, 0.0);
            EXPECT_DOUBLE_EQ(d.eblup, d.synthetic);
        }
    }
}

TEST(FitFH, EquivariantUnderAffineResponseTransforms) {
    std::mt19937_64 rng(45);
    for (int trial = 0; trial < 20; ++trial) {
        const auto data = oracle::random_dataset(rng, 30, 3);
        const double a = 2.5;
        Eigen::VectorXd shift(3);
        shift << 4.0, -1.0, 0.5;
        auto scaled = data;
        scaled.y = a * data.y + data.X * shift;
        scaled.sigma2 = a * a * data.sigma2;
        for (auto m : {FitMethod::ml, FitMethod::reml, FitMethod::fh_moment}) {
            const auto f0 = fit_fh(data, m);
            const auto f1 = fit_fh(scaled, m);
            EXPECT_NEAR(f1.sigma2_u, a * a * f0.sigma2_u, 1e-6 * std::max(1.0, f1.sigma2_u));
            for (Eigen::Index j = 0; j < 3; ++j) {
                EXPECT_NEAR(f1.beta[j], a * f0.beta[j] + shift[j], 1e-6 * std::max(1.0, std::abs(f1.beta[j])));
            }
        }
    }
}

TEST(FitFH, DomainOrderDoesNotMatter) {
    std::mt19937_64 rng(46);
    const auto data = oracle::random_dataset(rng, 20, 2);
    auto reversed = data;
    reversed.y = data.y.reverse();
    reversed.sigma2 = data.sigma2.reverse();
    reversed.X = data.X.colwise().reverse();
    const auto a = fit_fh(data), b = fit_fh(reversed);
    EXPECT_NEAR(a.sigma2_u, b.sigma2_u, 1e-7 * std::max(1.0, a.sigma2_u));
    EXPECT_NEAR(a.loglik, b.loglik, 1e-9);
}

TEST(FitFH, MomentAndMaximumLikelihoodAgreeForManyDomains) {
    std::mt19937_64 rng(47);
    double ml_mean = 0, mom_mean = 0;
    constexpr int kReps = 20;
    for (int rep = 0; rep < kReps; ++rep) {
        const auto data = oracle::random_dataset(rng, 200, 2, 1.0, 0.5, 2.0);
        const auto ml = fit_fh(data, FitMethod::ml).sigma2_u;
        const auto mom = fit_fh(data, FitMethod::fh_moment).sigma2_u;
        EXPECT_NEAR(ml, mom, 0.35);
        ml_mean += ml / kReps;
        mom_mean += mom / kReps;
    }
    EXPECT_NEAR(ml_mean, 1.0, 0.15);
    EXPECT_NEAR(mom_mean, 1.0, 0.15);
}

TEST(FitFH, IterationBudgetRaisesConvergenceError) {
    std::mt19937_64 rng(48);
    const auto data = oracle::random_dataset(rng, 20, 2);
    FitOptions tight;
    tight.max_iterations = 2;
    try {
        fit_fh(data, FitMethod::reml, tight);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_TRUE(std::isfinite(e.last_iterate()));
        EXPECT_TRUE(std::isfinite(e.gradient_norm()));
    }
}

TEST(FitFH, ValidatesTheDataset) {
    auto data = balanced({1.0, 2.0}, 1.0);
    data.X = Eigen::MatrixXd::Ones(2, 2);
    EXPECT_THROW(fit_fh(data), InputError); // D <= p

    auto neg = balanced({1.0, 2.0, 3.0}, 1.0);
    neg.sigma2[1] = 0.0;
    EXPECT_THROW(fit_fh(neg), InputError);

    auto collinear = balanced({1.0, 2.0, 3.0, 4.0}, 1.0);
    collinear.X = Eigen::MatrixXd::Ones(4, 2);
    EXPECT_THROW(fit_fh(collinear), InputError);

    EXPECT_EQ(parse_fit_method("reml"), FitMethod::reml);
    EXPECT_EQ(parse_fit_method("moment"), FitMethod::fh_moment);
    EXPECT_THROW(parse_fit_method("bayes"), InputError);
}

TEST(Eblup, ShrinksTowardsTheSyntheticEstimate) {
    std::mt19937_64 rng(49);
    for (int trial = 0; trial < 50; ++trial) {
        const auto data = oracle::random_dataset(rng, 15, 2);
        const auto fit = fit_fh(data);
        const auto pred = predict(fit, data);
        const auto o = oracle::dense(data, fit.sigma2_u);
        for (std::size_t d = 0; d < pred.domains.size(); ++d) {
            const auto& p = pred.domains[d];
            const auto i = static_cast<Eigen::Index>(d);
            const double g = fit.sigma2_u / (fit.sigma2_u + data.sigma2[i]);
            const double synth = data.X.row(i).dot(o.beta);
            EXPECT_NEAR(p.gamma, g, 1e-14);
            EXPECT_NEAR(p.eblup, g * data.y[i] + (1 - g) * synth, 1e-9 * std::max(1.0, std::abs(p.eblup)));
            EXPECT_GE(p.eblup, std::min(p.direct, p.synthetic) - 1e-12);
            EXPECT_LE(p.eblup, std::max(p.direct, p.synthetic) + 1e-12);
        }
    }
}

TEST(PrasadRao, ComponentsMatchDenseFormulas) {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 30; ++trial) {
        const auto data = oracle::random_dataset(rng, 12 + trial, 1 + trial % 4);
        const auto fit = fit_fh(data);
        if (fit.at_boundary) continue;
        const auto mse = prasad_rao_mse(fit, data);
        const auto o = oracle::dense(data, fit.sigma2_u);
        const double s = fit.sigma2_u;
        double inv_sq = 0;
        for (Eigen::Index d = 0; d < data.n_domains(); ++d) inv_sq += 1.0 / std::pow(s + data.sigma2[d], 2);
        for (Eigen::Index d = 0; d < data.n_domains(); ++d) {
            const double sd = data.sigma2[d], v = s + sd;
            const double b = sd / v;
            const Eigen::VectorXd x = data.X.row(d).transpose();
            const double g1 = s * sd / v;
            const double g2 = b * b * x.dot(o.XtVinvX_inv * x);
            const double g3 = sd * sd / (v * v * v) * (2.0 / inv_sq);
            const auto& m = mse[static_cast<std::size_t>(d)];
            EXPECT_NEAR(m.g1, g1, 1e-12 * g1);
            EXPECT_NEAR(m.g2, g2, 1e-9 * g2);
            EXPECT_NEAR(m.g3, g3, 1e-12 * g3);
            EXPECT_NEAR(m.mse, g1 + g2 + 2 * g3, 1e-9 * m.mse);
            EXPECT_GT(m.g2, 0.0);
        }
    }
}

TEST(ModelSuite, RanksByAicAndWarnsForReml) {
    std::mt19937_64 rng(51);
    std::normal_distribution<double> z(0.0, 1.0);
    const std::size_t D = 30;
    std::vector<std::string> ids;
    std::vector<double> a(D), b(D), y(D), s2(D);
    for (std::size_t d = 0; d < D; ++d) {
        ids.push_back(std::to_string(d + 1));
        a[d] = z(rng);
        b[d] = z(rng);
        s2[d] = 0.5;
        y[d] = 3.0 + 2.0 * a[d] + std::sqrt(0.5) * z(rng) + std::sqrt(0.5) * z(rng);
    }
    AreaCovariateTable t(ids);
    t.set_column("log_ri", a);
    t.set_column("zeta", b);
    t.set_column("y", y);
    t.set_column("sigma2_d", s2);

    const auto models = standard_models();
    const auto reml = fit_model_suite(t, models);
    ASSERT_EQ(reml.ranked.size(), 4u);
    for (std::size_t i = 1; i < reml.ranked.size(); ++i) {
        EXPECT_LE(reml.ranked[i - 1].fit.aic, reml.ranked[i].fit.aic);
    }
    EXPECT_NE(reml.best().spec.name, "model2");
    EXPECT_FALSE(reml.warnings.empty());

    const auto ml = fit_model_suite(t, models, FitMethod::ml);
    EXPECT_TRUE(ml.warnings.empty());
    EXPECT_EQ(ml.find("model3").fit.beta.size(), 3);

    const std::vector<ModelSpec> bad{{"m", "y ~ missing"}};
    EXPECT_THROW(fit_model_suite(t, bad), InputError);
    EXPECT_THROW(ml.find("model9"), InputError);
}

TEST(BuildDataset, ReadsColumnsInFormulaOrder) {
    std::istringstream in("domain_id,y,sigma2_d,a,b\n1,1,0.5,2,3\n2,2,0.5,4,5\n3,4,0.5,1,1\n4,3,0.5,0,2\n");
    const auto t = AreaCovariateTable::from_csv(parse_csv(in));
    const auto data = build_dataset(t, ModelFormula::parse("y ~ b + a"));
    EXPECT_EQ(data.X.cols(), 3);
    EXPECT_DOUBLE_EQ(data.X(1, 1), 5.0);
    EXPECT_DOUBLE_EQ(data.X(1, 2), 4.0);
    EXPECT_THROW(build_dataset(t, ModelFormula::parse("y ~ a"), "var"), InputError);
}
