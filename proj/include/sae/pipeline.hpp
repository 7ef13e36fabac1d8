#ifndef SAE_PIPELINE_HPP
#define SAE_PIPELINE_HPP

// Config-driven end-to-end run: microdata -> direct estimates -> covariates
// -> Fay-Herriot model suite -> comparison artifacts.

#include "sae/covariates.hpp"
#include "sae/direct_estimation.hpp"
#include "sae/error.hpp"
#include "sae/fay_herriot.hpp"
#include "sae/report.hpp"
#include "sae/survey_data.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace sae {

struct PipelineConfig {
    std::filesystem::path microdata;
    std::optional<std::filesystem::path> item_map; ///< built-in labour-force map when absent
    std::filesystem::path areas;
    std::filesystem::path output_dir = "out";
    AnalysisUnit unit = AnalysisUnit::household;
    double annualization_divisor = 12.0;
    CovariateOptions covariates;
    std::vector<ModelSpec> models = standard_models();
    FitMethod method = FitMethod::reml;
    std::uint64_t seed = 1;

    /// Relative paths are resolved against `base_dir`.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
        const auto resolve = [&base_dir](const std::string& p) {
            const std::filesystem::path path(p);
            return path.is_absolute() ? path : base_dir / path;
        };
        const auto required = [&j](const char* key) {
            if (!j.contains(key)) throw InputError(std::string("config is missing '") + key + "'");
            return j.at(key).get<std::string>();
        };
        PipelineConfig c;
        c.microdata = resolve(required("microdata"));
        c.areas = resolve(required("areas"));
        if (j.contains("item_map")) c.item_map = resolve(j.at("item_map").get<std::string>());
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        c.unit = parse_analysis_unit(j.value("unit", std::string("household")));
        c.annualization_divisor = j.value("annualization_divisor", 12.0);
        if (j.contains("covariates")) {
            const auto& cov = j.at("covariates");
            c.covariates.incidence_column = cov.value("incidence_column", c.covariates.incidence_column);
            c.covariates.valorization_column = cov.value("valorization_column", c.covariates.valorization_column);
            c.covariates.population_column = cov.value("population_column", c.covariates.population_column);
            c.covariates.standardize_zeta = cov.value("standardize_zeta", false);
        }
        if (j.contains("models")) {
            c.models.clear();
            for (const auto& m : j.at("models")) {
                c.models.push_back({m.at("name").get<std::string>(), m.at("formula").get<std::string>()});
            }
        }
        c.method = parse_fit_method(j.value("method", std::string("reml")));
        c.seed = j.value("seed", std::uint64_t{1});
        return c;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config '" + path.string() + "'");
        try {
            return from_json(nlohmann::json::parse(in), path.parent_path());
        } catch (const nlohmann::json::exception& e) {
            throw InputError("config '" + path.string() + "': " + e.what());
        }
    }
};

struct PipelineResult {
    std::vector<std::filesystem::path> artifacts;
    std::string best_model;
    std::vector<std::string> warnings;
};

namespace detail {

template <typename F>
auto run_stage(const std::string& stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const ConvergenceError& e) {
        throw StageError(stage, e.what(), 2);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what(), 1);
    }
}

} // namespace detail

inline PipelineResult run_pipeline(const PipelineConfig& config) {
    PipelineResult result;

    const auto households = detail::run_stage("survey-data", [&] {
        const auto map = config.item_map ? ItemMap::load(config.item_map->string()) : ItemMap::labour_force_default();
        const auto records = load_microdata(config.microdata.string(), map);
        return aggregate_households(records, map, config.annualization_divisor);
    });

    const auto direct = detail::run_stage("direct-estimation", [&] {
        const auto obs = analysis_observations(households, config.unit);
        return direct_estimates(obs);
    });

    std::vector<DomainDirectEstimate> usable;
    for (const auto& e : direct) {
        if (!e.var_hat || !e.eer || *e.var_hat <= 0.0) {
            result.warnings.push_back("domain '" + e.domain_id +
                                      "' excluded from the area model: direct variance unavailable or zero");
        } else {
            usable.push_back(e);
        }
    }

    const auto areas = detail::run_stage("covariate-lab", [&] {
        auto table = AreaCovariateTable::load(config.areas.string());
        const std::vector<std::string> emit{"ri", "log_ri", "zeta"};
        derive_covariates(table, emit, config.covariates);
        std::vector<std::string> ids;
        for (const auto& e : usable) ids.push_back(e.domain_id);
        auto selected = table.select(ids);
        std::vector<double> y, s2;
        for (const auto& e : usable) {
            y.push_back(e.y_bar_hat);
            s2.push_back(*e.var_hat);
        }
        selected.set_column("y", std::move(y));
        selected.set_column("sigma2_d", std::move(s2));
        return selected;
    });

    const auto suite = detail::run_stage("fh-core", [&] {
        return fit_model_suite(areas, config.models, config.method, "sigma2_d");
    });
    result.warnings.insert(result.warnings.end(), suite.warnings.begin(), suite.warnings.end());
    result.best_model = suite.best().spec.name;

    detail::run_stage("reporting", [&] {
        std::filesystem::create_directories(config.output_dir);
        const auto write = [&](const std::string& name, const std::string& content) {
            const auto path = config.output_dir / name;
            write_text_file(path.string(), content);
            result.artifacts.push_back(path);
        };
        write("direct_estimates.csv", render_direct_table(direct));
        write("area_inputs.csv", areas.to_csv());
        write("model_eer.csv", render_model_eer_table(suite, config.models));

        nlohmann::ordered_json fits;
        fits["method"] = to_string(config.method);
        fits["best_model"] = result.best_model;
        fits["ranking"] = nlohmann::ordered_json::array();
        for (const auto& m : suite.ranked) {
            fits["ranking"].push_back({{"model", m.spec.name}, {"aic", m.fit.aic}});
        }
        fits["models"] = nlohmann::ordered_json::array();
        for (const auto& spec : config.models) {
            const auto& m = suite.find(spec.name);
            fits["models"].push_back(fit_report_json(m.spec, m.fit, m.predictions));
        }
        fits["warnings"] = result.warnings;
        write("model_fits.json", fits.dump(2) + "\n");

        const auto& best = suite.best();
        write("predictions_" + best.spec.name + ".csv", render_predictions(best.predictions));
        const auto rows = compare(usable, best.predictions);
        write("comparison.csv", render_report(rows, ReportFormat::csv));
        write("comparison.md", render_report(rows, ReportFormat::markdown));
        write("comparison.json", render_report(rows, ReportFormat::json));
        write("delta.csv", render_delta_series(rows));
        return 0;
    });
    return result;
}

inline PipelineResult run_pipeline(const std::filesystem::path& config_path) {
    const auto config = detail::run_stage("config", [&] { return PipelineConfig::load(config_path); });
    return run_pipeline(config);
}

} // namespace sae

#endif // SAE_PIPELINE_HPP
