// Command-line front end for the small-area-estimation toolkit.
//
// Exit codes: 0 success, 1 input error, 2 convergence failure.

#include "sae/sae.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

void emit(const std::string& content, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        sae::write_text_file(out_path, content);
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = sae::detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sae::InputError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw sae::InputError(path + ": " + e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small area estimation: direct estimates, Fay-Herriot EBLUPs, Prasad-Rao MSE"};
    app.require_subcommand(1);

    // direct
    std::string microdata, item_map_path, unit = "household", out_path;
    double divisor = 12.0;
    auto* direct = app.add_subcommand("direct", "Hajek direct estimates per domain");
    direct->add_option("--microdata", microdata, "Person-level microdata CSV")->required();
    direct->add_option("--item-map", item_map_path, "Item-to-component map (JSON); built-in map when omitted");
    direct->add_option("--unit", unit, "Analysis unit")->check(CLI::IsMember({"household", "person"}));
    direct->add_option("--divisor", divisor, "Divisor for last-12-months items");
    direct->add_option("--out", out_path, "Output CSV (stdout when omitted)");

    // covariates
    std::string areas_path, emit_list = "log_ri,zeta";
    sae::CovariateOptions cov_options;
    auto* covariates = app.add_subcommand("covariates", "Append derived area covariates");
    covariates->add_option("--areas", areas_path, "Area-level CSV")->required();
    covariates->add_option("--emit", emit_list, "Comma list of ri,log_ri,zeta");
    covariates->add_option("--incidence-col", cov_options.incidence_column);
    covariates->add_option("--valorization-col", cov_options.valorization_column);
    covariates->add_option("--population-col", cov_options.population_column);
    covariates->add_flag("--standardize-zeta", cov_options.standardize_zeta, "Standardise the residual column");
    covariates->add_option("--out", out_path);

    // fit
    std::string model = "y ~ log_ri * zeta", method = "reml", variance_column = "sigma2_d", predictions_path;
    auto* fit = app.add_subcommand("fit", "Fit one Fay-Herriot model and report EBLUPs");
    fit->add_option("--areas", areas_path, "Area CSV with response, sampling variance and covariates")->required();
    fit->add_option("--model", model, "Model formula, e.g. \"y ~ log_ri * zeta\"");
    fit->add_option("--method", method)->check(CLI::IsMember({"reml", "ml", "moment"}));
    fit->add_option("--var", variance_column, "Sampling-variance column");
    fit->add_option("--out", out_path, "JSON report (stdout when omitted)");
    fit->add_option("--predictions", predictions_path, "Also write the per-domain prediction CSV here");
    sae::FitOptions fit_options;
    fit->add_option("--max-iterations", fit_options.max_iterations, "Optimizer iteration budget");
    fit->add_option("--tolerance", fit_options.tolerance, "Relative convergence tolerance on sigma2_u");

    // compare
    std::string table_path, direct_path, eblup_path, format = "csv";
    bool by_delta = false;
    auto* compare = app.add_subcommand("compare", "Direct vs EBLUP relative standard errors");
    auto* table_opt = compare->add_option("--table", table_path,
                                          "CSV with domain_id, eer_direct, eer_eblup (percent) and optional "
                                          "y_bar_hat, eblup, n_sample");
    auto* direct_opt = compare->add_option("--direct", direct_path, "Output of `direct`");
    auto* eblup_opt = compare->add_option("--eblup", eblup_path, "Prediction CSV from `fit --predictions`");
    table_opt->excludes(direct_opt)->excludes(eblup_opt);
    direct_opt->needs(eblup_opt);
    eblup_opt->needs(direct_opt);
    compare->add_option("--format", format)->check(CLI::IsMember({"csv", "json", "markdown"}));
    compare->add_flag("--sort-delta", by_delta, "Order rows by decreasing delta");
    compare->add_option("--out", out_path);

    // pipeline
    std::string config_path, out_dir;
    std::uint64_t seed = 1;
    auto* pipeline = app.add_subcommand("pipeline", "Run the full estimation pipeline from a config file");
    pipeline->add_option("--config", config_path)->required();
    pipeline->add_option("--out-dir", out_dir, "Override the configured output directory");
    pipeline->add_option("--seed", seed, "Accepted for interface symmetry; the pipeline is deterministic");

    // samplesize
    sae::SampleSizeSpec size_spec;
    size_spec.population = 0.0;
    auto* samplesize = app.add_subcommand("samplesize", "Segment sample size for a target relative error");
    samplesize->add_option("--N", size_spec.population, "Domain population size")->required();
    samplesize->add_option("--P", size_spec.p, "Prevalence of the key indicator");
    samplesize->add_option("--deff", size_spec.deff, "Design effect");
    samplesize->add_option("--esrel", size_spec.esrel, "Target relative standard error");

    // simulate
    std::string scenario_path;
    std::size_t replicates = 0;
    unsigned threads = 0;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation of the estimators");
    simulate->add_option("--scenario", scenario_path, "Scenario JSON (type fh or design)")->required();
    simulate->add_option("--replicates", replicates, "Override the scenario replicate count");
    auto* seed_opt = simulate->add_option("--seed", seed, "Override the scenario seed");
    simulate->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
    simulate->add_option("--out", out_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*direct) {
            const auto map = item_map_path.empty() ? sae::ItemMap::labour_force_default() : sae::ItemMap::load(item_map_path);
            const auto records = sae::load_microdata(microdata, map);
            const auto households = sae::aggregate_households(records, map, divisor);
            const auto obs = sae::analysis_observations(households, sae::parse_analysis_unit(unit));
            const auto estimates = sae::direct_estimates(obs);
            for (const auto& e : estimates) {
                if (!e.var_hat) std::cerr << "warning: domain " << e.domain_id << " has one unit; variance unavailable\n";
                else if (e.degenerate_design) std::cerr << "warning: domain " << e.domain_id << " has all weights 1; variance is 0\n";
            }
            emit(sae::render_direct_table(estimates), out_path);
        } else if (*covariates) {
            auto table = sae::AreaCovariateTable::load(areas_path);
            sae::derive_covariates(table, split_list(emit_list), cov_options);
            emit(table.to_csv(), out_path);
        } else if (*fit) {
            const auto table = sae::AreaCovariateTable::load(areas_path);
            const auto formula = sae::ModelFormula::parse(model);
            const auto data = sae::build_dataset(table, formula, variance_column);
            const auto fitted = sae::fit_fh(data, sae::parse_fit_method(method), fit_options);
            const auto predictions = sae::predict(fitted, data);
            if (fitted.at_boundary) std::cerr << "warning: sigma2_u estimate truncated at 0\n";
            emit(sae::fit_report_json({"model", model}, fitted, predictions).dump(2) + "\n", out_path);
            if (!predictions_path.empty()) {
                sae::write_text_file(predictions_path, sae::render_predictions(predictions));
            }
        } else if (*compare) {
            std::vector<sae::ComparisonRow> rows;
            if (!table_path.empty()) {
                rows = sae::parse_comparison_table(sae::read_csv(table_path));
            } else if (!direct_path.empty()) {
                const auto direct_rows = sae::parse_direct_table(sae::read_csv(direct_path));
                rows = sae::compare(direct_rows, sae::parse_predictions(sae::read_csv(eblup_path)));
            } else {
                throw sae::InputError("compare needs --table or --direct with --eblup");
            }
            if (by_delta) sae::sort_by_delta(rows);
            emit(sae::render_report(rows, sae::parse_report_format(format)), out_path);
        } else if (*pipeline) {
            auto config = sae::PipelineConfig{};
            try {
                config = sae::PipelineConfig::load(config_path);
            } catch (const std::exception& e) {
                throw sae::StageError("config", e.what(), 1);
            }
            if (!out_dir.empty()) config.output_dir = out_dir;
            const auto result = sae::run_pipeline(config);
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
            std::cout << "best model: " << result.best_model << '\n';
            for (const auto& path : result.artifacts) std::cout << path.string() << '\n';
        } else if (*samplesize) {
            const auto n = sae::sample_size(size_spec);
            std::cout << "n_d," << sae::format_fixed(n.n, 4) << '\n' << "planned," << n.planned << '\n';
        } else if (*simulate) {
            const auto j = load_json(scenario_path);
            const std::string type = j.value("type", std::string("fh"));
            if (type == "fh") {
                auto scenario = sae::SimScenario::from_json(j);
                if (replicates > 0) scenario.replicates = replicates;
                if (seed_opt->count() > 0) scenario.seed = seed;
                const auto report = sae::monte_carlo_evaluate(scenario, threads);
                emit(report.to_csv(), out_path);
            } else if (type == "design") {
                auto spec = sae::PopulationSpec::from_json(j);
                const std::size_t reps = replicates > 0 ? replicates : j.value("replicates", std::size_t{1000});
                const std::uint64_t sample_seed = seed_opt->count() > 0 ? seed : j.value("seed", std::uint64_t{1});
                const auto pop = sae::generate_population(spec);
                emit(sae::evaluate_design(pop, reps, sample_seed, threads).to_csv(), out_path);
            } else {
                throw sae::InputError("unknown scenario type '" + type + "' (expected fh|design)");
            }
        }
    } catch (const sae::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const sae::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
