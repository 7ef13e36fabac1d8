#ifndef SAE_SIMULATION_HPP
#define SAE_SIMULATION_HPP

// Monte Carlo harness: synthetic Fay-Herriot data, synthetic clustered
// household populations, stratified systematic cluster sampling, and
// empirical-vs-analytic estimator evaluation.

#include "sae/covariates.hpp"
#include "sae/csv.hpp"
#include "sae/direct_estimation.hpp"
#include "sae/error.hpp"
#include "sae/fay_herriot.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace sae {

using Rng = std::mt19937_64;

/// Independent substreams keyed by (seed, purpose, index): replicate r always
/// sees the same numbers no matter which thread runs it.
inline Rng make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(purpose), hi(purpose), lo(index), hi(index)};
    return Rng(seq);
}

namespace stream {
inline constexpr std::uint64_t covariates = 1;
inline constexpr std::uint64_t replicate = 2;
inline constexpr std::uint64_t population = 3;
inline constexpr std::uint64_t sample = 4;
} // namespace stream

/// Runs body(i) for i in [0, n) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) body(i);
        });
    }
}

// ---------------------------------------------------------------------------
// Area-level scenarios

struct SimScenario {
    std::size_t domains = 19;
    std::vector<double> beta_true{0.0}; ///< intercept first
    double sigma2_u = 1.0;
    std::vector<double> sigma2_d; ///< length domains
    std::vector<std::string> covariate_names; ///< one per non-intercept coefficient
    std::optional<Eigen::MatrixXd> covariate_values; ///< domains x names; drawn when absent
    double covariate_low = 0.0;
    double covariate_high = 10.0;
    std::size_t replicates = 1000;
    std::uint64_t seed = 1;
    FitMethod method = FitMethod::reml;
    std::vector<ModelSpec> models; ///< defaults to the generating model

    void validate() const {
        if (domains < 2) throw InputError("scenario: need at least 2 domains");
        if (replicates < 1) throw InputError("scenario: replicates must be >= 1");
        if (beta_true.empty()) throw InputError("scenario: beta must include the intercept");
        if (covariate_names.size() + 1 != beta_true.size()) {
            throw InputError("scenario: need one covariate name per non-intercept coefficient");
        }
        if (sigma2_d.size() != domains) throw InputError("scenario: sigma2_d must have one entry per domain");
        if (sigma2_u < 0.0) throw InputError("scenario: sigma2_u must be >= 0");
        for (double s : sigma2_d) {
            if (s < 0.0) throw InputError("scenario: sigma2_d must be >= 0");
        }
        if (covariate_values && (covariate_values->rows() != static_cast<Eigen::Index>(domains) ||
                                 covariate_values->cols() != static_cast<Eigen::Index>(covariate_names.size()))) {
            throw InputError("scenario: covariate values must be domains x covariates");
        }
    }

    /// sigma2_d evenly spaced over [low, high].
    static std::vector<double> spaced_variances(std::size_t domains, double low, double high) {
        std::vector<double> out(domains, low);
        for (std::size_t d = 0; d < domains && domains > 1; ++d) {
            out[d] = low + (high - low) * static_cast<double>(d) / static_cast<double>(domains - 1);
        }
        return out;
    }

    std::vector<ModelSpec> evaluated_models() const {
        if (!models.empty()) return models;
        std::string formula = "y ~ 1";
        for (const auto& name : covariate_names) formula += " + " + name;
        return {{"generating", formula}};
    }

    /// Covariate table shared by every replicate (columns per covariate name).
    AreaCovariateTable covariate_table() const {
        std::vector<std::string> ids;
        for (std::size_t d = 0; d < domains; ++d) ids.push_back(std::to_string(d + 1));
        AreaCovariateTable table(std::move(ids));
        Eigen::MatrixXd values;
        if (covariate_values) {
            values = *covariate_values;
        } else {
            auto rng = make_stream(seed, stream::covariates, 0);
            std::uniform_real_distribution<double> unif(covariate_low, covariate_high);
            values.resize(static_cast<Eigen::Index>(domains), static_cast<Eigen::Index>(covariate_names.size()));
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                for (Eigen::Index d = 0; d < values.rows(); ++d) values(d, j) = unif(rng);
            }
        }
        for (std::size_t j = 0; j < covariate_names.size(); ++j) {
            const Eigen::VectorXd col = values.col(static_cast<Eigen::Index>(j));
            table.set_column(covariate_names[j], std::vector<double>(col.data(), col.data() + col.size()));
        }
        table.set_column("sigma2_d", sigma2_d);
        return table;
    }

    /// Generating design matrix (intercept + covariates).
    Eigen::MatrixXd design() const {
        const auto table = covariate_table();
        Eigen::MatrixXd X(static_cast<Eigen::Index>(domains), static_cast<Eigen::Index>(beta_true.size()));
        X.col(0).setOnes();
        for (std::size_t j = 0; j < covariate_names.size(); ++j) {
            const auto& col = table.column(covariate_names[j]);
            X.col(static_cast<Eigen::Index>(j) + 1) =
                Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
        }
        return X;
    }

    static SimScenario from_json(const nlohmann::json& j) {
        SimScenario s;
        s.domains = j.value("domains", s.domains);
        s.beta_true = j.value("beta", s.beta_true);
        s.sigma2_u = j.value("sigma2_u", s.sigma2_u);
        if (j.contains("sigma2_d")) {
            s.sigma2_d = j.at("sigma2_d").get<std::vector<double>>();
        } else {
            const auto range = j.value("sigma2_d_range", std::vector<double>{1.0, 1.0});
            if (range.size() != 2) throw InputError("scenario: sigma2_d_range needs [low, high]");
            s.sigma2_d = spaced_variances(s.domains, range[0], range[1]);
        }
        if (j.contains("covariates")) {
            const auto& c = j.at("covariates");
            s.covariate_names = c.value("names", std::vector<std::string>{});
            if (c.contains("values")) {
                const auto cols = c.at("values").get<std::vector<std::vector<double>>>();
                Eigen::MatrixXd m(static_cast<Eigen::Index>(s.domains), static_cast<Eigen::Index>(cols.size()));
                for (std::size_t k = 0; k < cols.size(); ++k) {
                    if (cols[k].size() != s.domains) throw InputError("scenario: covariate column length != domains");
                    for (std::size_t d = 0; d < s.domains; ++d) {
                        m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = cols[k][d];
                    }
                }
                s.covariate_values = m;
            }
            const auto range = c.value("uniform", std::vector<double>{s.covariate_low, s.covariate_high});
            if (range.size() != 2) throw InputError("scenario: covariates.uniform needs [low, high]");
            s.covariate_low = range[0];
            s.covariate_high = range[1];
        } else {
            for (std::size_t k = 1; k < s.beta_true.size(); ++k) s.covariate_names.push_back("x" + std::to_string(k));
        }
        s.replicates = j.value("replicates", s.replicates);
        s.seed = j.value("seed", s.seed);
        s.method = parse_fit_method(j.value("method", std::string("reml")));
        if (j.contains("models")) {
            for (const auto& m : j.at("models")) {
                s.models.push_back({m.at("name").get<std::string>(), m.at("formula").get<std::string>()});
            }
        }
        s.validate();
        return s;
    }
};

struct SimulatedAreaData {
    Eigen::VectorXd y;
    Eigen::VectorXd theta; ///< x_d beta + u_d
};

/// y_d = x_d beta + u_d + e_d with u_d ~ N(0, s2u), e_d ~ N(0, sigma2_d).
inline SimulatedAreaData generate_fh_data(const SimScenario& scenario, const Eigen::MatrixXd& X, Rng& rng) {
    const Eigen::Map<const Eigen::VectorXd> beta(scenario.beta_true.data(),
                                                 static_cast<Eigen::Index>(scenario.beta_true.size()));
    SimulatedAreaData out;
    out.theta = X * beta;
    out.y.resize(out.theta.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index d = 0; d < out.theta.size(); ++d) {
        out.theta[d] += std::sqrt(scenario.sigma2_u) * normal(rng);
        out.y[d] = out.theta[d] + std::sqrt(scenario.sigma2_d[static_cast<std::size_t>(d)]) * normal(rng);
    }
    return out;
}

struct DomainMetrics {
    std::string domain_id;
    double sigma2_d = 0.0;
    double theta_mean = 0.0;
    double direct_mse = 0.0;    ///< empirical
    double eblup_mse = 0.0;     ///< empirical
    double eblup_mse_se = 0.0;  ///< Monte Carlo standard error of eblup_mse
    double mean_pr_mse = 0.0;   ///< mean analytic Prasad-Rao MSE
    double pr_relative_diff = 0.0; ///< (mean_pr_mse - eblup_mse) / eblup_mse
    double empirical_eer = 0.0;  ///< sqrt(eblup_mse) / theta_mean
    double mean_analytic_eer = 0.0;
    double mean_gamma = 0.0;
    double mean_abs_eblup_direct = 0.0;
    double mean_abs_synthetic_direct = 0.0;
};

struct ModelMetrics {
    ModelSpec spec;
    std::vector<DomainMetrics> domains;
    std::size_t fitted = 0;
    std::size_t failures = 0;
    std::size_t aic_wins = 0;
    double mean_sigma2_u = 0.0;
};

struct MonteCarloReport {
    std::size_t replicates = 0;
    double covariate_r2 = 0.0; ///< var(X beta) / (var(X beta) + s2u) across domains
    std::size_t aic_comparisons = 0; ///< replicates where every model fitted
    std::vector<ModelMetrics> models;

    const ModelMetrics& find(const std::string& name) const {
        for (const auto& m : models) {
            if (m.spec.name == name) return m;
        }
        throw InputError("no model named '" + name + "' in report");
    }

    std::string to_csv() const {
        std::ostringstream out;
        write_csv_row(out, {"model", "domain_id", "sigma2_d", "theta_mean", "direct_mse", "eblup_mse", "eblup_mse_se",
                            "mean_pr_mse", "pr_relative_diff", "empirical_eer", "mean_analytic_eer", "mean_gamma",
                            "mean_abs_eblup_direct", "mean_abs_synthetic_direct", "fitted", "failures", "aic_wins"});
        for (const auto& m : models) {
            for (const auto& d : m.domains) {
                write_csv_row(out, {m.spec.name, d.domain_id, format_general(d.sigma2_d), format_general(d.theta_mean),
                                    format_general(d.direct_mse), format_general(d.eblup_mse),
                                    format_general(d.eblup_mse_se), format_general(d.mean_pr_mse),
                                    format_general(d.pr_relative_diff), format_general(d.empirical_eer),
                                    format_general(d.mean_analytic_eer), format_general(d.mean_gamma),
                                    format_general(d.mean_abs_eblup_direct),
                                    format_general(d.mean_abs_synthetic_direct), std::to_string(m.fitted), std::to_string(m.failures),
                                    std::to_string(m.aic_wins)});
            }
        }
        return out.str();
    }
};

/// Fits every model to `replicates` independent draws and compares empirical
/// MSE against the analytic Prasad-Rao values. Replicate r uses substream r.
inline MonteCarloReport monte_carlo_evaluate(const SimScenario& scenario, unsigned threads = 0) {
    scenario.validate();
    const auto specs = scenario.evaluated_models();
    const auto table = scenario.covariate_table();
    const Eigen::MatrixXd X_true = scenario.design();
    const auto D = static_cast<Eigen::Index>(scenario.domains);

    std::vector<AreaLevelDataset> templates;
    for (const auto& spec : specs) {
        auto formula = ModelFormula::parse(spec.formula);
        AreaCovariateTable with_y = table;
        with_y.set_column(formula.response(), std::vector<double>(scenario.domains, 0.0));
        templates.push_back(build_dataset(with_y, formula));
    }

    struct ModelRun {
        bool ok = false;
        double aic = 0.0;
        double sigma2_u = 0.0;
        Eigen::VectorXd eblup, mse, gamma, synthetic;
    };
    struct ReplicateRun {
        Eigen::VectorXd y, theta;
        std::vector<ModelRun> models;
    };
    std::vector<ReplicateRun> runs(scenario.replicates);

    parallel_for(scenario.replicates, threads, [&](std::size_t r) {
        auto rng = make_stream(scenario.seed, stream::replicate, r);
        auto sim = generate_fh_data(scenario, X_true, rng);
        ReplicateRun run;
        run.models.resize(specs.size());
        for (std::size_t m = 0; m < specs.size(); ++m) {
            AreaLevelDataset data = templates[m];
            data.y = sim.y;
            try {
                const auto fit = fit_fh(data, scenario.method);
                const auto pred = predict(fit, data);
                ModelRun mr;
                mr.ok = true;
                mr.aic = fit.aic;
                mr.sigma2_u = fit.sigma2_u;
                mr.eblup.resize(D);
                mr.mse.resize(D);
                mr.gamma.resize(D);
                mr.synthetic.resize(D);
                for (Eigen::Index d = 0; d < D; ++d) {
                    const auto& p = pred.domains[static_cast<std::size_t>(d)];
                    mr.eblup[d] = p.eblup;
                    mr.mse[d] = p.mse;
                    mr.gamma[d] = p.gamma;
                    mr.synthetic[d] = p.synthetic;
                }
                run.models[m] = std::move(mr);
            } catch (const std::runtime_error&) {
                run.models[m].ok = false;
            }
        }
        run.y = std::move(sim.y);
        run.theta = std::move(sim.theta);
        runs[r] = std::move(run);
    });

    MonteCarloReport report;
    report.replicates = scenario.replicates;
    {
        const Eigen::Map<const Eigen::VectorXd> beta(scenario.beta_true.data(),
                                                     static_cast<Eigen::Index>(scenario.beta_true.size()));
        const Eigen::VectorXd fixed = X_true * beta;
        const double var_fixed = (fixed.array() - fixed.mean()).square().mean();
        report.covariate_r2 = var_fixed + scenario.sigma2_u > 0.0 ? var_fixed / (var_fixed + scenario.sigma2_u) : 0.0;
    }

    for (std::size_t m = 0; m < specs.size(); ++m) {
        ModelMetrics mm;
        mm.spec = specs[m];
        Eigen::ArrayXd sum_sq_direct = Eigen::ArrayXd::Zero(D), sum_sq = Eigen::ArrayXd::Zero(D),
                       sum_sq2 = Eigen::ArrayXd::Zero(D), sum_pr = Eigen::ArrayXd::Zero(D),
                       sum_theta = Eigen::ArrayXd::Zero(D), sum_eer = Eigen::ArrayXd::Zero(D),
                       sum_gamma = Eigen::ArrayXd::Zero(D), sum_ed = Eigen::ArrayXd::Zero(D),
                       sum_sd = Eigen::ArrayXd::Zero(D);
        double sum_s2u = 0.0;
        for (const auto& run : runs) {
            const auto& mr = run.models[m];
            if (!mr.ok) {
                ++mm.failures;
                continue;
            }
            ++mm.fitted;
            sum_s2u += mr.sigma2_u;
            const Eigen::ArrayXd err = (mr.eblup - run.theta).array();
            const Eigen::ArrayXd sq = err.square();
            sum_sq += sq;
            sum_sq2 += sq.square();
            sum_sq_direct += (run.y - run.theta).array().square();
            sum_pr += mr.mse.array();
            sum_theta += run.theta.array();
            sum_eer += mr.mse.array().sqrt() / mr.eblup.array();
            sum_gamma += mr.gamma.array();
            sum_ed += (mr.eblup - run.y).array().abs();
            sum_sd += (mr.synthetic - run.y).array().abs();
        }
        const double n = static_cast<double>(mm.fitted);
        mm.mean_sigma2_u = mm.fitted > 0 ? sum_s2u / n : std::nan("");
        for (Eigen::Index d = 0; d < D; ++d) {
            DomainMetrics dm;
            dm.domain_id = table.domain_ids()[static_cast<std::size_t>(d)];
            dm.sigma2_d = scenario.sigma2_d[static_cast<std::size_t>(d)];
            if (mm.fitted > 0) {
                dm.theta_mean = sum_theta[d] / n;
                dm.direct_mse = sum_sq_direct[d] / n;
                dm.eblup_mse = sum_sq[d] / n;
                const double var_sq = std::max(sum_sq2[d] / n - dm.eblup_mse * dm.eblup_mse, 0.0);
                dm.eblup_mse_se = std::sqrt(var_sq / n);
                dm.mean_pr_mse = sum_pr[d] / n;
                dm.pr_relative_diff = (dm.mean_pr_mse - dm.eblup_mse) / dm.eblup_mse;
                dm.empirical_eer = std::sqrt(dm.eblup_mse) / dm.theta_mean;
                dm.mean_analytic_eer = sum_eer[d] / n;
                dm.mean_gamma = sum_gamma[d] / n;
                dm.mean_abs_eblup_direct = sum_ed[d] / n;
                dm.mean_abs_synthetic_direct = sum_sd[d] / n;
            }
            mm.domains.push_back(dm);
        }
        report.models.push_back(std::move(mm));
    }

    for (const auto& run : runs) {
        const bool all_ok = std::all_of(run.models.begin(), run.models.end(), [](const ModelRun& mr) { return mr.ok; });
        if (!all_ok) continue;
        ++report.aic_comparisons;
        std::size_t best = 0;
        for (std::size_t m = 1; m < run.models.size(); ++m) {
            if (run.models[m].aic < run.models[best].aic) best = m;
        }
        ++report.models[best].aic_wins;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Design-based populations and sampling

struct StratumSpec {
    std::size_t clusters = 40;   ///< segments in the frame
    std::size_t segments = 8;    ///< segments selected
    double mean_households_per_cluster = 8.0;
    double mean_members = 3.2;
    double log_income_mean = 13.5;  ///< log monthly per-capita income
    double log_income_sd = 0.6;     ///< within cluster
    double cluster_effect_sd = 0.3; ///< between clusters
};

struct DomainPopulationSpec {
    std::string domain_id;
    std::vector<StratumSpec> strata;
};

struct PopulationSpec {
    std::vector<DomainPopulationSpec> domains;
    std::uint64_t seed = 1;

    void validate() const {
        if (domains.empty()) throw InputError("population: no domains");
        for (const auto& d : domains) {
            if (d.strata.empty()) throw InputError("population: domain '" + d.domain_id + "' has no strata");
            for (const auto& s : d.strata) {
                if (s.clusters == 0) throw InputError("population: stratum with zero clusters in domain '" + d.domain_id + "'");
                if (s.segments == 0) throw InputError("population: stratum with zero selected segments");
                if (s.segments > s.clusters) {
                    throw InputError("population: segments exceed available clusters in domain '" + d.domain_id + "'");
                }
                if (!(s.mean_households_per_cluster >= 1.0) || !(s.mean_members >= 1.0)) {
                    throw InputError("population: household and member means must be >= 1");
                }
            }
        }
    }

    static PopulationSpec from_json(const nlohmann::json& j) {
        PopulationSpec spec;
        spec.seed = j.value("seed", spec.seed);
        for (const auto& d : j.at("domains")) {
            DomainPopulationSpec dom;
            dom.domain_id = d.at("domain_id").get<std::string>();
            for (const auto& s : d.at("strata")) {
                StratumSpec st;
                st.clusters = s.value("clusters", st.clusters);
                st.segments = s.value("segments", st.segments);
                st.mean_households_per_cluster = s.value("mean_households_per_cluster", st.mean_households_per_cluster);
                st.mean_members = s.value("mean_members", st.mean_members);
                st.log_income_mean = s.value("log_income_mean", st.log_income_mean);
                st.log_income_sd = s.value("log_income_sd", st.log_income_sd);
                st.cluster_effect_sd = s.value("cluster_effect_sd", st.cluster_effect_sd);
                dom.strata.push_back(st);
            }
            spec.domains.push_back(std::move(dom));
        }
        spec.validate();
        return spec;
    }
};

struct PopulationHousehold {
    std::size_t domain = 0;
    std::size_t stratum = 0;
    std::size_t cluster = 0;
    std::size_t members = 1;
    double per_capita_income = 0.0;
};

struct PopulationCluster {
    std::size_t first_household = 0;
    std::size_t household_count = 0;
    double effect = 0.0;
};

struct Population {
    std::vector<std::string> domain_ids;
    std::vector<PopulationHousehold> households;
    std::vector<PopulationCluster> clusters;
    /// [domain][stratum] -> cluster indices in frame order (sorted by cluster effect)
    std::vector<std::vector<std::vector<std::size_t>>> frame;
    /// [domain][stratum] -> segments to select
    std::vector<std::vector<std::size_t>> segments;

    double true_mean(std::size_t domain) const {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& h : households) {
            if (h.domain == domain) {
                sum += h.per_capita_income;
                ++n;
            }
        }
        return sum / static_cast<double>(n);
    }

    std::size_t household_count(std::size_t domain) const {
        return static_cast<std::size_t>(std::count_if(households.begin(), households.end(),
                                                      [domain](const auto& h) { return h.domain == domain; }));
    }
};

/// Log-normal per-capita income with a cluster random effect; cluster sizes
/// are 1 + Poisson(mean - 1).
inline Population generate_population(const PopulationSpec& spec) {
    spec.validate();
    Population pop;
    auto rng = make_stream(spec.seed, stream::population, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < spec.domains.size(); ++d) {
        const auto& dom = spec.domains[d];
        pop.domain_ids.push_back(dom.domain_id);
        pop.frame.emplace_back();
        pop.segments.emplace_back();
        for (std::size_t s = 0; s < dom.strata.size(); ++s) {
            const auto& st = dom.strata[s];
            std::poisson_distribution<int> cluster_size(st.mean_households_per_cluster - 1.0);
            std::poisson_distribution<int> member_count(st.mean_members - 1.0);
            std::vector<std::size_t> stratum_clusters;
            for (std::size_t c = 0; c < st.clusters; ++c) {
                PopulationCluster cl;
                cl.effect = st.cluster_effect_sd * normal(rng);
                cl.first_household = pop.households.size();
                cl.household_count = 1 + static_cast<std::size_t>(cluster_size(rng));
                const std::size_t cluster_index = pop.clusters.size();
                for (std::size_t h = 0; h < cl.household_count; ++h) {
                    PopulationHousehold hh;
                    hh.domain = d;
                    hh.stratum = s;
                    hh.cluster = cluster_index;
                    hh.members = 1 + static_cast<std::size_t>(member_count(rng));
                    hh.per_capita_income = std::exp(st.log_income_mean + cl.effect + st.log_income_sd * normal(rng));
                    pop.households.push_back(hh);
                }
                pop.clusters.push_back(cl);
                stratum_clusters.push_back(cluster_index);
            }
            // Frame order: segments sorted by their socioeconomic level.
            std::stable_sort(stratum_clusters.begin(), stratum_clusters.end(),
                             [&pop](std::size_t a, std::size_t b) { return pop.clusters[a].effect < pop.clusters[b].effect; });
            pop.frame.back().push_back(std::move(stratum_clusters));
            pop.segments.back().push_back(st.segments);
        }
    }
    return pop;
}

/// Equal-probability inclusion probabilities m / M for the M segments of a stratum.
inline std::vector<double> segment_inclusion_probabilities(std::size_t clusters, std::size_t segments) {
    if (clusters == 0) throw InputError("stratum with zero clusters");
    if (segments > clusters) throw InputError("segments exceed available clusters");
    return std::vector<double>(clusters, static_cast<double>(segments) / static_cast<double>(clusters));
}

/// Systematic selection of `segments` positions out of `clusters` with a random start.
inline std::vector<std::size_t> systematic_selection(std::size_t clusters, std::size_t segments, Rng& rng) {
    if (clusters == 0) throw InputError("stratum with zero clusters");
    if (segments > clusters) throw InputError("segments exceed available clusters");
    const double interval = static_cast<double>(clusters) / static_cast<double>(segments);
    std::uniform_real_distribution<double> start_dist(0.0, interval);
    const double start = start_dist(rng);
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < segments; ++i) {
        const auto pos = static_cast<std::size_t>(std::floor(start + interval * static_cast<double>(i)));
        picks.push_back(std::min(pos, clusters - 1));
    }
    return picks;
}

struct SampledHousehold {
    std::size_t household = 0; ///< index into Population::households
    double weight = 1.0;        ///< inverse segment inclusion probability
};

/// Every household of each systematically selected segment enters the sample.
inline std::vector<SampledHousehold> draw_stratified_cluster_sample(const Population& pop, Rng& rng) {
    std::vector<SampledHousehold> sample;
    for (std::size_t d = 0; d < pop.frame.size(); ++d) {
        for (std::size_t s = 0; s < pop.frame[d].size(); ++s) {
            const auto& frame = pop.frame[d][s];
            const std::size_t m = pop.segments[d][s];
            const auto pi = segment_inclusion_probabilities(frame.size(), m);
            for (std::size_t pos : systematic_selection(frame.size(), m, rng)) {
                const auto& cl = pop.clusters[frame[pos]];
                for (std::size_t h = 0; h < cl.household_count; ++h) {
                    sample.push_back({cl.first_household + h, 1.0 / pi[pos]});
                }
            }
        }
    }
    return sample;
}

/// Hajek estimates per domain for one sample, in population domain order.
inline std::vector<DomainDirectEstimate> sample_direct_estimates(const Population& pop,
                                                                  const std::vector<SampledHousehold>& sample) {
    std::vector<std::vector<WeightedValue>> by_domain(pop.domain_ids.size());
    for (const auto& s : sample) {
        const auto& hh = pop.households[s.household];
        by_domain[hh.domain].push_back({s.weight, hh.per_capita_income});
    }
    std::vector<DomainDirectEstimate> out;
    for (std::size_t d = 0; d < by_domain.size(); ++d) {
        out.push_back(hajek_mean(by_domain[d], pop.domain_ids[d]));
    }
    return out;
}

struct DesignDomainMetrics {
    std::string domain_id;
    double true_mean = 0.0;
    double mean_estimate = 0.0;
    double relative_bias = 0.0;
    double empirical_variance = 0.0;
    double mean_formula_variance = 0.0; ///< mean of the single-stage variance formula
    double true_households = 0.0;
    double mean_n_hat = 0.0;
    double n_hat_relative_bias = 0.0;
    double mean_sample_size = 0.0;
    double empirical_deff = 0.0; ///< empirical variance / SRS variance at the mean sample size
};

struct DesignReport {
    std::size_t replicates = 0;
    std::vector<DesignDomainMetrics> domains;

    std::string to_csv() const {
        std::ostringstream out;
        write_csv_row(out, {"domain_id", "true_mean", "mean_estimate", "relative_bias", "empirical_variance",
                            "mean_formula_variance", "true_households", "mean_n_hat", "n_hat_relative_bias",
                            "mean_sample_size", "empirical_deff"});
        for (const auto& d : domains) {
            write_csv_row(out, {d.domain_id, format_general(d.true_mean), format_general(d.mean_estimate),
                                format_general(d.relative_bias), format_general(d.empirical_variance),
                                format_general(d.mean_formula_variance), format_general(d.true_households),
                                format_general(d.mean_n_hat), format_general(d.n_hat_relative_bias),
                                format_general(d.mean_sample_size), format_general(d.empirical_deff)});
        }
        return out.str();
    }
};

/// Repeated stratified systematic cluster sampling from a fixed population.
inline DesignReport evaluate_design(const Population& pop, std::size_t replicates, std::uint64_t seed,
                                    unsigned threads = 0) {
    if (replicates < 1) throw InputError("replicates must be >= 1");
    const std::size_t D = pop.domain_ids.size();
    std::vector<std::vector<DomainDirectEstimate>> runs(replicates);
    parallel_for(replicates, threads, [&](std::size_t r) {
        auto rng = make_stream(seed, stream::sample, r);
        runs[r] = sample_direct_estimates(pop, draw_stratified_cluster_sample(pop, rng));
    });

    DesignReport report;
    report.replicates = replicates;
    const double R = static_cast<double>(replicates);
    for (std::size_t d = 0; d < D; ++d) {
        DesignDomainMetrics m;
        m.domain_id = pop.domain_ids[d];
        m.true_mean = pop.true_mean(d);
        m.true_households = static_cast<double>(pop.household_count(d));
        double sum = 0.0, sum_sq = 0.0, sum_var = 0.0, sum_nhat = 0.0, sum_n = 0.0;
        for (const auto& run : runs) {
            const auto& e = run[d];
            sum += e.y_bar_hat;
            sum_sq += e.y_bar_hat * e.y_bar_hat;
            sum_var += e.var_hat.value_or(0.0);
            sum_nhat += e.n_hat;
            sum_n += static_cast<double>(e.n_sample);
        }
        m.mean_estimate = sum / R;
        m.relative_bias = (m.mean_estimate - m.true_mean) / m.true_mean;
        m.empirical_variance = replicates > 1 ? (sum_sq - R * m.mean_estimate * m.mean_estimate) / (R - 1.0) : 0.0;
        m.mean_formula_variance = sum_var / R;
        m.mean_n_hat = sum_nhat / R;
        m.n_hat_relative_bias = (m.mean_n_hat - m.true_households) / m.true_households;
        m.mean_sample_size = sum_n / R;

        double pop_ss = 0.0;
        for (const auto& h : pop.households) {
            if (h.domain == d) pop_ss += (h.per_capita_income - m.true_mean) * (h.per_capita_income - m.true_mean);
        }
        const double pop_var = pop_ss / (m.true_households - 1.0);
        const double srs_var = pop_var / m.mean_sample_size * (1.0 - m.mean_sample_size / m.true_households);
        m.empirical_deff = srs_var > 0.0 ? deff_ratio(m.empirical_variance, srs_var) : std::nan("");
        report.domains.push_back(m);
    }
    return report;
}

} // namespace sae

#endif // SAE_SIMULATION_HPP
