#ifndef SAE_FAY_HERRIOT_HPP
#define SAE_FAY_HERRIOT_HPP

// Fay-Herriot area-level model
//
//   y_d = x_d beta + u_d + e_d,   u_d ~ N(0, s2u),   e_d ~ N(0, sigma2_d) (known),
//
// fitted by ML, REML or the Fay-Herriot moment estimator, with EBLUP
// prediction and the Prasad-Rao second-order MSE approximation.

#include "sae/covariates.hpp"
#include "sae/error.hpp"
#include "sae/model_formula.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sae {

enum class FitMethod { ml, reml, fh_moment };

/// Which likelihood a profile evaluation refers to.
enum class Likelihood { ml, reml };

inline FitMethod parse_fit_method(const std::string& s) {
    if (s == "ml") return FitMethod::ml;
    if (s == "reml") return FitMethod::reml;
    if (s == "moment" || s == "fh_moment" || s == "fh") return FitMethod::fh_moment;
    throw InputError("unknown fit method '" + s + "' (expected reml|ml|moment)");
}

inline std::string to_string(FitMethod m) {
    switch (m) {
    case FitMethod::ml: return "ml";
    case FitMethod::reml: return "reml";
    case FitMethod::fh_moment: return "moment";
    }
    return "?";
}

struct AreaLevelDataset {
    std::vector<std::string> domain_ids;
    Eigen::VectorXd y;      ///< direct estimates
    Eigen::VectorXd sigma2; ///< known sampling variances
    Eigen::MatrixXd X;      ///< D x p, intercept first
    std::vector<std::string> column_names;

    Eigen::Index n_domains() const { return y.size(); }
    Eigen::Index n_params() const { return X.cols(); }

    void validate() const {
        const Eigen::Index D = y.size();
        if (sigma2.size() != D || X.rows() != D) {
            throw InputError("area dataset: y, sigma2_d and X disagree on the number of domains");
        }
        if (!domain_ids.empty() && static_cast<Eigen::Index>(domain_ids.size()) != D) {
            throw InputError("area dataset: domain id count does not match data");
        }
        if (X.cols() < 1) {
            throw InputError("area dataset: design matrix has no columns");
        }
        if (D <= X.cols()) {
            throw InputError("area dataset: need more domains (" + std::to_string(D) +
                             ") than parameters (" + std::to_string(X.cols()) + ")");
        }
        if (!y.allFinite() || !sigma2.allFinite() || !X.allFinite()) {
            throw InputError("area dataset: non-finite values");
        }
        if ((sigma2.array() <= 0.0).any()) {
            throw InputError("area dataset: every sampling variance must be > 0");
        }
        // Rank check on the column-scaled matrix so units do not matter.
        Eigen::VectorXd scale = X.colwise().norm().transpose();
        for (Eigen::Index j = 0; j < scale.size(); ++j) {
            if (scale[j] == 0.0) {
                throw InputError("area dataset: design column " + std::to_string(j) + " is all zero");
            }
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X * scale.cwiseInverse().asDiagonal());
        qr.setThreshold(1e-10);
        if (qr.rank() < X.cols()) {
            throw InputError("area dataset: design matrix is rank deficient (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(X.cols()) + ")");
        }
    }
};

/// Builds the dataset for `formula` from an area table holding the response
/// column (formula LHS) and a sampling-variance column.
inline AreaLevelDataset build_dataset(const AreaCovariateTable& table, const ModelFormula& formula,
                                      const std::string& variance_column = "sigma2_d") {
    AreaLevelDataset data;
    data.domain_ids = table.domain_ids();
    const auto& y = table.complete_column(formula.response());
    const auto& s2 = table.complete_column(variance_column);
    data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    data.sigma2 = Eigen::Map<const Eigen::VectorXd>(s2.data(), static_cast<Eigen::Index>(s2.size()));
    data.X = formula.design_matrix(table);
    data.column_names = formula.column_names();
    return data;
}

/// GLS quantities at a fixed random-effect variance.
struct GlsSolution {
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_cov; ///< (X' V^-1 X)^-1
    Eigen::VectorXd v;        ///< s2u + sigma2_d
    Eigen::VectorXd residuals;
};

inline GlsSolution gls(const AreaLevelDataset& data, double sigma2_u) {
    GlsSolution g;
    g.v = data.sigma2.array() + sigma2_u;
    const Eigen::VectorXd w = g.v.cwiseInverse();
    const Eigen::MatrixXd xtw = data.X.transpose() * w.asDiagonal();
    const Eigen::MatrixXd info = xtw * data.X;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    g.beta_cov = ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
    g.beta = ldlt.solve(xtw * data.y);
    g.residuals = data.y - data.X * g.beta;
    return g;
}

namespace detail {

// P = V^-1 - V^-1 X (X'V^-1 X)^-1 X' V^-1
inline Eigen::MatrixXd reml_projection(const AreaLevelDataset& data, const GlsSolution& g) {
    const Eigen::VectorXd w = g.v.cwiseInverse();
    const Eigen::MatrixXd wx = w.asDiagonal() * data.X;
    Eigen::MatrixXd P = -wx * g.beta_cov * wx.transpose();
    P.diagonal() += w;
    return P;
}

} // namespace detail

/// Log-likelihood profiled over beta (beta at its GLS value).
inline double profile_log_likelihood(const AreaLevelDataset& data, double sigma2_u, Likelihood kind) {
    const auto g = gls(data, sigma2_u);
    const auto D = static_cast<double>(data.n_domains());
    const auto p = static_cast<double>(data.n_params());
    const double log_det_v = g.v.array().log().sum();
    const double quad = (g.residuals.array().square() / g.v.array()).sum();
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    if (kind == Likelihood::ml) {
        return -0.5 * (D * log_2pi + log_det_v + quad);
    }
    // log|X'V^-1 X| = -log|(X'V^-1 X)^-1|
    const double log_det_cov = Eigen::LDLT<Eigen::MatrixXd>(g.beta_cov).vectorD().array().log().sum();
    return -0.5 * ((D - p) * log_2pi + log_det_v - log_det_cov + quad);
}

/// d loglik / d s2u.
inline double profile_score(const AreaLevelDataset& data, double sigma2_u, Likelihood kind) {
    const auto g = gls(data, sigma2_u);
    const Eigen::ArrayXd v = g.v.array();
    const Eigen::ArrayXd r = g.residuals.array();
    const double quad2 = (r.square() / v.square()).sum(); // y'P P y = r' V^-2 r
    if (kind == Likelihood::ml) {
        return -0.5 * ((1.0 / v).sum() - quad2);
    }
    const Eigen::MatrixXd P = detail::reml_projection(data, g);
    return -0.5 * (P.trace() - quad2);
}

/// Expected information for s2u.
inline double fisher_information(const AreaLevelDataset& data, double sigma2_u, Likelihood kind) {
    const auto g = gls(data, sigma2_u);
    if (kind == Likelihood::ml) {
        return 0.5 * (g.v.array().square().inverse()).sum();
    }
    const Eigen::MatrixXd P = detail::reml_projection(data, g);
    return 0.5 * (P.array() * P.transpose().array()).sum();
}

/// avar(s2u) = 2 / sum_d (s2u + sigma2_d)^-2
inline double asymptotic_variance_sigma2_u(const Eigen::VectorXd& sigma2, double sigma2_u) {
    return 2.0 / (sigma2.array() + sigma2_u).square().inverse().sum();
}

struct FitOptions {
    double tolerance = 1e-8; ///< relative, on s2u
    int max_iterations = 200;
};

struct FHFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_cov;
    double sigma2_u = 0.0;
    Eigen::VectorXd gamma;
    double loglik = 0.0;            ///< Gaussian log-likelihood at (beta, s2u)
    double restricted_loglik = std::numeric_limits<double>::quiet_NaN(); ///< REML fits only
    double aic = 0.0;
    double avar_sigma2_u = 0.0;
    FitMethod method = FitMethod::reml;
    bool at_boundary = false; ///< s2u estimate truncated at zero
    int iterations = 0;
    double score_at_estimate = 0.0;
    std::vector<std::string> column_names;
};

namespace detail {

inline double sample_variance(const Eigen::VectorXd& y) {
    if (y.size() < 2) return 0.0;
    const double mean = y.mean();
    return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

inline double initial_upper_bound(const AreaLevelDataset& data) {
    double upper = 10.0 * sample_variance(data.y);
    if (!(upper > 0.0)) {
        upper = 10.0 * data.sigma2.maxCoeff();
    }
    return upper;
}

// Golden-section bracketing on [0, upper] followed by safeguarded Fisher
// scoring inside the final bracket.
inline double maximize_likelihood(const AreaLevelDataset& data, Likelihood kind, const FitOptions& opt,
                                  int& iterations, bool& at_boundary) {
    const auto loglik = [&](double s) { return profile_log_likelihood(data, s, kind); };
    const auto score = [&](double s) { return profile_score(data, s, kind); };

    iterations = 0;
    double upper = initial_upper_bound(data);
    while (score(upper) > 0.0) {
        upper *= 2.0;
        if (++iterations > opt.max_iterations) {
            throw ConvergenceError("likelihood still increasing at the search bound", upper,
                                   std::abs(score(upper)));
        }
    }

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0;
    double b = upper;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = loglik(c);
    double fd = loglik(d);
    const double bracket_target = 1e-6 * upper;
    while (b - a > bracket_target) {
        if (++iterations > opt.max_iterations) {
            throw ConvergenceError("golden-section search exceeded the iteration limit", 0.5 * (a + b),
                                   std::abs(score(0.5 * (a + b))));
        }
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = loglik(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = loglik(d);
        }
    }

    if (a == 0.0 && score(0.0) <= 0.0) {
        at_boundary = true;
        return 0.0;
    }

    double x = fc >= fd ? c : d;
    double fx = std::max(fc, fd);
    const double floor = 1e-14 * upper;
    for (;;) {
        if (++iterations > opt.max_iterations) {
            throw ConvergenceError("Fisher scoring exceeded the iteration limit", x, std::abs(score(x)));
        }
        const double grad = score(x);
        const double info = fisher_information(data, x, kind);
        double step = grad / info;
        double next = std::clamp(x + step, a, b);
        double fnext = loglik(next);
        int halvings = 0;
        while (fnext < fx && halvings < 30) {
            step *= 0.5;
            next = std::clamp(x + step, a, b);
            fnext = loglik(next);
            ++halvings;
        }
        if (fnext < fx) {
            break; // no ascent direction left at working precision
        }
        const double change = std::abs(next - x);
        x = next;
        fx = fnext;
        if (change <= opt.tolerance * std::max(x, floor)) {
            break;
        }
    }
    at_boundary = x == 0.0;
    return x;
}

// Fay-Herriot moment estimator: root of sum_d r_d^2 / (s2u + sigma2_d) = D - p,
// truncated at zero.
inline double moment_estimate(const AreaLevelDataset& data, const FitOptions& opt, int& iterations,
                              bool& at_boundary) {
    const double target = static_cast<double>(data.n_domains() - data.n_params());
    const auto excess = [&](double s) {
        const auto g = gls(data, s);
        return (g.residuals.array().square() / g.v.array()).sum() - target;
    };
    iterations = 0;
    if (excess(0.0) <= 0.0) {
        at_boundary = true;
        return 0.0;
    }
    double lo = 0.0;
    double hi = initial_upper_bound(data);
    while (excess(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++iterations > opt.max_iterations) {
            throw ConvergenceError("moment equation has no root below the search bound", hi, excess(hi));
        }
    }
    while (hi - lo > opt.tolerance * hi) {
        if (++iterations > opt.max_iterations) {
            throw ConvergenceError("moment bisection exceeded the iteration limit", 0.5 * (lo + hi),
                                   std::abs(excess(0.5 * (lo + hi))));
        }
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    at_boundary = false;
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Assembles an FHFit at a given variance estimate.
inline FHFit make_fit(const AreaLevelDataset& data, double sigma2_u, FitMethod method) {
    FHFit fit;
    const auto g = gls(data, sigma2_u);
    fit.beta = g.beta;
    fit.beta_cov = g.beta_cov;
    fit.sigma2_u = sigma2_u;
    fit.gamma = (sigma2_u / g.v.array()).matrix();
    fit.loglik = profile_log_likelihood(data, sigma2_u, Likelihood::ml);
    if (method == FitMethod::reml) {
        fit.restricted_loglik = profile_log_likelihood(data, sigma2_u, Likelihood::reml);
    }
    fit.aic = -2.0 * fit.loglik + 2.0 * static_cast<double>(data.n_params() + 1);
    fit.avar_sigma2_u = asymptotic_variance_sigma2_u(data.sigma2, sigma2_u);
    fit.method = method;
    fit.at_boundary = sigma2_u == 0.0;
    fit.score_at_estimate =
        profile_score(data, sigma2_u, method == FitMethod::reml ? Likelihood::reml : Likelihood::ml);
    fit.column_names = data.column_names;
    return fit;
}

inline FHFit fit_fh(const AreaLevelDataset& data, FitMethod method = FitMethod::reml,
                    const FitOptions& options = {}) {
    data.validate();
    int iterations = 0;
    bool boundary = false;
    double s2u = 0.0;
    switch (method) {
    case FitMethod::ml:
        s2u = detail::maximize_likelihood(data, Likelihood::ml, options, iterations, boundary);
        break;
    case FitMethod::reml:
        s2u = detail::maximize_likelihood(data, Likelihood::reml, options, iterations, boundary);
        break;
    case FitMethod::fh_moment:
        s2u = detail::moment_estimate(data, options, iterations, boundary);
        break;
    }
    FHFit fit = make_fit(data, s2u, method);
    fit.iterations = iterations;
    fit.at_boundary = boundary;
    return fit;
}

/// -2 loglik + 2 (p + 1); s2u counts as a parameter.
inline double aic(const FHFit& fit) {
    return -2.0 * fit.loglik + 2.0 * static_cast<double>(fit.beta.size() + 1);
}

struct DomainPrediction {
    std::string domain_id;
    double direct = 0.0;
    double sigma2_d = 0.0;
    double synthetic = 0.0; ///< x_d beta
    double gamma = 0.0;
    double eblup = 0.0;
    double g1 = std::numeric_limits<double>::quiet_NaN();
    double g2 = std::numeric_limits<double>::quiet_NaN();
    double g3 = std::numeric_limits<double>::quiet_NaN();
    double mse = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> eer_eblup; ///< sqrt(mse) / eblup when eblup > 0
};

struct EblupResult {
    std::vector<DomainPrediction> domains;
};

/// Point predictions gamma_d y_d + (1 - gamma_d) x_d beta.
inline EblupResult eblup(const FHFit& fit, const AreaLevelDataset& data) {
    EblupResult out;
    const Eigen::VectorXd synthetic = data.X * fit.beta;
    for (Eigen::Index d = 0; d < data.n_domains(); ++d) {
        DomainPrediction p;
        p.domain_id = data.domain_ids.empty() ? std::to_string(d + 1)
                                              : data.domain_ids[static_cast<std::size_t>(d)];
        p.direct = data.y[d];
        p.sigma2_d = data.sigma2[d];
        p.synthetic = synthetic[d];
        p.gamma = fit.sigma2_u / (fit.sigma2_u + data.sigma2[d]);
        p.eblup = p.gamma * p.direct + (1.0 - p.gamma) * p.synthetic;
        out.domains.push_back(std::move(p));
    }
    return out;
}

struct MseComponents {
    double g1 = 0.0;
    double g2 = 0.0;
    double g3 = 0.0;
    double mse = 0.0; ///< g1 + g2 + 2 g3
};

inline std::vector<MseComponents> prasad_rao_mse(const FHFit& fit, const AreaLevelDataset& data) {
    std::vector<MseComponents> out;
    out.reserve(static_cast<std::size_t>(data.n_domains()));
    const auto g = gls(data, fit.sigma2_u);
    for (Eigen::Index d = 0; d < data.n_domains(); ++d) {
        const double s2 = data.sigma2[d];
        const double v = fit.sigma2_u + s2;
        const double shrink = s2 / v; // 1 - gamma_d
        const Eigen::RowVectorXd x = data.X.row(d);
        MseComponents m;
        m.g1 = fit.sigma2_u * s2 / v;
        m.g2 = shrink * shrink * (x * g.beta_cov * x.transpose())(0, 0);
        m.g3 = s2 * s2 / (v * v * v) * fit.avar_sigma2_u;
        m.mse = m.g1 + m.g2 + 2.0 * m.g3;
        out.push_back(m);
    }
    return out;
}

/// EBLUPs with their Prasad-Rao MSE and relative standard error.
inline EblupResult predict(const FHFit& fit, const AreaLevelDataset& data) {
    auto result = eblup(fit, data);
    const auto mse = prasad_rao_mse(fit, data);
    for (std::size_t d = 0; d < mse.size(); ++d) {
        auto& p = result.domains[d];
        p.g1 = mse[d].g1;
        p.g2 = mse[d].g2;
        p.g3 = mse[d].g3;
        p.mse = mse[d].mse;
        if (p.eblup > 0.0) {
            p.eer_eblup = std::sqrt(p.mse) / p.eblup;
        }
    }
    return result;
}

struct ModelSpec {
    std::string name;
    std::string formula;
};

/// Intercept models over log(1/incidence) and the valorization residual.
inline std::vector<ModelSpec> standard_models(const std::string& response = "y") {
    return {{"model1", response + " ~ log_ri"},
            {"model2", response + " ~ zeta"},
            {"model3", response + " ~ log_ri + zeta"},
            {"model4", response + " ~ log_ri * zeta"}};
}

struct ModelOutcome {
    ModelSpec spec;
    AreaLevelDataset data;
    FHFit fit;
    EblupResult predictions;
};

struct ModelSuiteResult {
    std::vector<ModelOutcome> ranked; ///< ascending AIC; ties keep input order
    std::vector<std::string> warnings;

    const ModelOutcome& best() const { return ranked.front(); }

    const ModelOutcome& find(const std::string& name) const {
        for (const auto& m : ranked) {
            if (m.spec.name == name) return m;
        }
        throw InputError("no model named '" + name + "'");
    }
};

inline ModelSuiteResult fit_model_suite(const AreaCovariateTable& table, std::span<const ModelSpec> specs,
                                        FitMethod method = FitMethod::reml,
                                        const std::string& variance_column = "sigma2_d",
                                        const FitOptions& options = {}) {
    if (specs.empty()) {
        throw InputError("model suite is empty");
    }
    ModelSuiteResult result;
    for (const auto& spec : specs) {
        const auto formula = ModelFormula::parse(spec.formula);
        for (const auto& term : formula.terms()) {
            for (const auto& factor : term) {
                if (!table.has_column(factor)) {
                    throw InputError(spec.name + ": missing covariate column '" + factor + "'");
                }
            }
        }
        ModelOutcome outcome{spec, build_dataset(table, formula, variance_column), {}, {}};
        try {
            outcome.fit = fit_fh(outcome.data, method, options);
        } catch (const InputError& e) {
            throw InputError(spec.name + ": " + e.what());
        }
        outcome.predictions = predict(outcome.fit, outcome.data);
        result.ranked.push_back(std::move(outcome));
    }
    if (method == FitMethod::reml) {
        for (std::size_t i = 1; i < result.ranked.size(); ++i) {
            if (result.ranked[i].data.column_names != result.ranked[0].data.column_names) {
                result.warnings.push_back(
                    "REML fits with different fixed effects: AIC uses the ML likelihood at the REML "
                    "estimates; refit with method ml for a strict comparison");
                break;
            }
        }
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const ModelOutcome& a, const ModelOutcome& b) { return a.fit.aic < b.fit.aic; });
    return result;
}

} // namespace sae

#endif // SAE_FAY_HERRIOT_HPP
