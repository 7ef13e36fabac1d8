#ifndef SAE_REPORT_HPP
#define SAE_REPORT_HPP

// Direct-vs-EBLUP comparison tables and their csv / json / markdown renderings.

#include "sae/csv.hpp"
#include "sae/direct_estimation.hpp"
#include "sae/error.hpp"
#include "sae/fay_herriot.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace sae {

/// Relative standard errors and delta are fractions; rendering converts to percent.
struct ComparisonRow {
    std::string domain_id;
    std::optional<double> y_bar_hat;
    double eer_direct = 0.0;
    std::optional<double> eblup;
    double eer_eblup = 0.0;
    double delta = 0.0; ///< (eer_direct - eer_eblup) / eer_direct
    std::optional<std::size_t> n_sample;
};

/// Relative EER reduction achieved by the EBLUP.
inline double relative_eer_reduction(double eer_direct, double eer_eblup) {
    if (!(eer_direct > 0.0)) {
        throw InputError("relative EER reduction needs a positive direct EER");
    }
    return (eer_direct - eer_eblup) / eer_direct;
}

inline ComparisonRow make_comparison_row(std::string domain_id, double eer_direct, double eer_eblup) {
    ComparisonRow row;
    row.domain_id = std::move(domain_id);
    row.eer_direct = eer_direct;
    row.eer_eblup = eer_eblup;
    row.delta = relative_eer_reduction(eer_direct, eer_eblup);
    return row;
}

/// Joins direct estimates and EBLUPs by domain. Both sides must cover the same domains.
inline std::vector<ComparisonRow> compare(std::span<const DomainDirectEstimate> direct,
                                          const EblupResult& model) {
    std::map<std::string, const DomainPrediction*> by_domain;
    for (const auto& p : model.domains) {
        by_domain[p.domain_id] = &p;
    }
    if (by_domain.size() != direct.size()) {
        throw InputError("compare: direct side has " + std::to_string(direct.size()) +
                         " domains, EBLUP side has " + std::to_string(by_domain.size()));
    }
    std::vector<ComparisonRow> rows;
    for (const auto& d : direct) {
        const auto it = by_domain.find(d.domain_id);
        if (it == by_domain.end()) {
            throw InputError("compare: domain '" + d.domain_id + "' has no EBLUP");
        }
        if (!d.eer) {
            throw InputError("compare: domain '" + d.domain_id + "' has no direct EER");
        }
        if (!it->second->eer_eblup) {
            throw InputError("compare: domain '" + d.domain_id + "' has no EBLUP EER");
        }
        auto row = make_comparison_row(d.domain_id, *d.eer, *it->second->eer_eblup);
        row.y_bar_hat = d.y_bar_hat;
        row.eblup = it->second->eblup;
        row.n_sample = d.n_sample;
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Largest reduction first; ties broken by domain order.
inline void sort_by_delta(std::vector<ComparisonRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) { return a.delta > b.delta; });
}

enum class ReportFormat { csv, json, markdown };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw InputError("unknown report format '" + s + "' (expected csv|json|markdown)");
}

namespace detail {

inline std::string percent(double fraction) { return format_fixed(100.0 * fraction, 2); }

inline std::string money(const std::optional<double>& v) { return v ? format_fixed(*v, 2) : "NA"; }

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

} // namespace detail

inline std::string render_report(std::span<const ComparisonRow> rows, ReportFormat format) {
    if (rows.empty()) {
        throw InputError("report has no rows");
    }
    std::ostringstream out;
    switch (format) {
    case ReportFormat::csv:
        write_csv_row(out, {"domain_id", "y_bar_hat", "eer_direct_pct", "eblup", "eer_eblup_pct",
                            "delta_pct", "n_sample"});
        for (const auto& r : rows) {
            write_csv_row(out, {r.domain_id, detail::money(r.y_bar_hat), detail::percent(r.eer_direct),
                                detail::money(r.eblup), detail::percent(r.eer_eblup),
                                detail::percent(r.delta),
                                r.n_sample ? std::to_string(*r.n_sample) : "NA"});
        }
        break;
    case ReportFormat::markdown:
        out << "| Domain | Direct mean | EER direct (%) | EBLUP | EER EBLUP (%) | delta (%) | n |\n";
        out << "|:--|--:|--:|--:|--:|--:|--:|\n";
        for (const auto& r : rows) {
            out << "| " << r.domain_id << " | " << detail::money(r.y_bar_hat) << " | "
                << detail::percent(r.eer_direct) << " | " << detail::money(r.eblup) << " | "
                << detail::percent(r.eer_eblup) << " | " << detail::percent(r.delta) << " | "
                << (r.n_sample ? std::to_string(*r.n_sample) : "NA") << " |\n";
        }
        break;
    case ReportFormat::json: {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json o;
            o["domain_id"] = r.domain_id;
            o["y_bar_hat"] = r.y_bar_hat ? nlohmann::ordered_json(detail::round2(*r.y_bar_hat)) : nlohmann::ordered_json(nullptr);
            o["eer_direct_pct"] = detail::round2(100.0 * r.eer_direct);
            o["eblup"] = r.eblup ? nlohmann::ordered_json(detail::round2(*r.eblup)) : nlohmann::ordered_json(nullptr);
            o["eer_eblup_pct"] = detail::round2(100.0 * r.eer_eblup);
            o["delta_pct"] = detail::round2(100.0 * r.delta);
            o["n_sample"] = r.n_sample ? nlohmann::ordered_json(*r.n_sample) : nlohmann::ordered_json(nullptr);
            arr.push_back(std::move(o));
        }
        out << arr.dump(2) << '\n';
        break;
    }
    }
    return out.str();
}

inline void emit_report(std::span<const ComparisonRow> rows, ReportFormat format, const std::string& path) {
    write_text_file(path, render_report(rows, format));
}

/// Reads a comparison input table. Required: domain_id, eer_direct, eer_eblup
/// (percent). Optional: y_bar_hat, eblup, n_sample.
inline std::vector<ComparisonRow> parse_comparison_table(const CsvTable& table) {
    const auto c_domain = table.column("domain_id");
    const auto c_direct = table.column("eer_direct");
    const auto c_eblup_eer = table.column("eer_eblup");
    const auto c_mean = table.find_column("y_bar_hat");
    const auto c_eblup = table.find_column("eblup");
    const auto c_n = table.find_column("n_sample");
    std::vector<ComparisonRow> rows;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        try {
            auto out = make_comparison_row(row[c_domain], parse_double(row[c_direct]) / 100.0,
                                           parse_double(row[c_eblup_eer]) / 100.0);
            if (c_mean) out.y_bar_hat = parse_optional_double(row[*c_mean]);
            if (c_eblup) out.eblup = parse_optional_double(row[*c_eblup]);
            if (c_n) {
                if (auto n = parse_optional_double(row[*c_n])) {
                    out.n_sample = static_cast<std::size_t>(std::llround(*n));
                }
            }
            rows.push_back(std::move(out));
        } catch (const InputError& e) {
            throw InputError("row " + std::to_string(r + 1) + ": " + e.what());
        }
    }
    return rows;
}

/// Per-model EER table: domain_id, then EER (%) for each model in the given order.
inline std::string render_model_eer_table(const ModelSuiteResult& suite, std::span<const ModelSpec> order) {
    std::ostringstream out;
    std::vector<std::string> header{"domain_id"};
    std::vector<const ModelOutcome*> models;
    for (const auto& spec : order) {
        models.push_back(&suite.find(spec.name));
        header.push_back("eer_" + spec.name + "_pct");
    }
    write_csv_row(out, header);
    const auto& domains = models.front()->predictions.domains;
    for (std::size_t d = 0; d < domains.size(); ++d) {
        std::vector<std::string> row{domains[d].domain_id};
        for (const auto* m : models) {
            const auto& eer = m->predictions.domains[d].eer_eblup;
            row.push_back(eer ? detail::percent(*eer) : "NA");
        }
        write_csv_row(out, row);
    }
    return out.str();
}

/// Plot-ready (domain_id, delta_pct) pairs.
inline std::string render_delta_series(std::span<const ComparisonRow> rows) {
    std::ostringstream out;
    write_csv_row(out, {"domain_id", "delta_pct"});
    for (const auto& r : rows) {
        write_csv_row(out, {r.domain_id, detail::percent(r.delta)});
    }
    return out.str();
}

/// Per-domain prediction table for one fitted model.
inline std::string render_predictions(const EblupResult& result) {
    std::ostringstream out;
    write_csv_row(out, {"domain_id", "direct", "sigma2_d", "synthetic", "gamma", "eblup", "g1", "g2", "g3",
                        "mse", "eer_eblup"});
    for (const auto& p : result.domains) {
        write_csv_row(out, {p.domain_id, format_general(p.direct, 12), format_general(p.sigma2_d, 12),
                            format_general(p.synthetic, 12), format_general(p.gamma, 12),
                            format_general(p.eblup, 12), format_general(p.g1, 12), format_general(p.g2, 12),
                            format_general(p.g3, 12), format_general(p.mse, 12),
                            p.eer_eblup ? format_general(*p.eer_eblup, 12) : "NA"});
    }
    return out.str();
}

/// Reads render_predictions output back into an EblupResult.
inline EblupResult parse_predictions(const CsvTable& table) {
    EblupResult out;
    const auto c_domain = table.column("domain_id");
    const auto c_direct = table.column("direct");
    const auto c_eblup = table.column("eblup");
    const auto c_mse = table.column("mse");
    const auto c_eer = table.column("eer_eblup");
    for (const auto& row : table.rows) {
        DomainPrediction p;
        p.domain_id = row[c_domain];
        p.direct = parse_double(row[c_direct]);
        p.eblup = parse_double(row[c_eblup]);
        p.mse = parse_double(row[c_mse]);
        p.eer_eblup = parse_optional_double(row[c_eer]);
        out.domains.push_back(std::move(p));
    }
    return out;
}

/// Structured fit report: coefficients, variance component, fit statistics, per-domain table.
inline nlohmann::ordered_json fit_report_json(const ModelSpec& spec, const FHFit& fit,
                                              const EblupResult& predictions) {
    nlohmann::ordered_json j;
    j["model"] = spec.name;
    j["formula"] = spec.formula;
    j["method"] = to_string(fit.method);
    nlohmann::ordered_json beta = nlohmann::ordered_json::object();
    for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
        beta[fit.column_names.at(static_cast<std::size_t>(i))] = fit.beta[i];
    }
    j["beta"] = beta;
    j["sigma2_u"] = fit.sigma2_u;
    j["sigma2_u_at_boundary"] = fit.at_boundary;
    j["avar_sigma2_u"] = fit.avar_sigma2_u;
    j["loglik"] = fit.loglik;
    if (fit.method == FitMethod::reml) {
        j["restricted_loglik"] = fit.restricted_loglik;
    }
    j["aic"] = fit.aic;
    j["iterations"] = fit.iterations;
    nlohmann::ordered_json domains = nlohmann::ordered_json::array();
    for (const auto& p : predictions.domains) {
        nlohmann::ordered_json d;
        d["domain_id"] = p.domain_id;
        d["direct"] = p.direct;
        d["sigma2_d"] = p.sigma2_d;
        d["synthetic"] = p.synthetic;
        d["gamma"] = p.gamma;
        d["eblup"] = p.eblup;
        d["g1"] = p.g1;
        d["g2"] = p.g2;
        d["g3"] = p.g3;
        d["mse"] = p.mse;
        d["eer_eblup"] = p.eer_eblup ? nlohmann::ordered_json(*p.eer_eblup) : nlohmann::ordered_json(nullptr);
        domains.push_back(std::move(d));
    }
    j["domains"] = domains;
    return j;
}

} // namespace sae

#endif // SAE_REPORT_HPP
