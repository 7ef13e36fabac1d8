#ifndef SAE_DIRECT_ESTIMATION_HPP
#define SAE_DIRECT_ESTIMATION_HPP

// Design-based direct estimation: Hajek domain means, their relative standard
// errors, and sample-size planning.

#include "sae/csv.hpp"
#include "sae/error.hpp"
#include "sae/survey_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace sae {

struct WeightedValue {
    double weight = 1.0;
    double value = 0.0;
};

struct DomainDirectEstimate {
    std::string domain_id;
    double y_bar_hat = 0.0;
    double n_hat = 0.0;
    std::optional<double> var_hat; ///< empty when only one unit was sampled
    std::optional<double> eer;     ///< empty when var_hat is empty or y_bar_hat <= 0
    std::size_t n_sample = 0;
    bool degenerate_design = false; ///< every weight equal to 1, so var_hat is 0
};

/// Hajek ratio mean with the with-replacement style variance
///   var = N^-2 * sum_j w_j (w_j - 1) (y_j - mean)^2,  N = sum_j w_j.
inline DomainDirectEstimate hajek_mean(std::span<const WeightedValue> units, std::string domain_id = {}) {
    if (units.empty()) {
        throw InputError("hajek_mean: domain '" + domain_id + "' has no sampled units");
    }
    DomainDirectEstimate est;
    est.domain_id = std::move(domain_id);
    est.n_sample = units.size();

    double weighted_sum = 0.0;
    bool all_unit_weights = true;
    for (const auto& u : units) {
        if (!(u.weight > 0.0)) {
            throw InputError("hajek_mean: non-positive weight in domain '" + est.domain_id + "'");
        }
        est.n_hat += u.weight;
        weighted_sum += u.weight * u.value;
        all_unit_weights = all_unit_weights && u.weight == 1.0;
    }
    est.y_bar_hat = weighted_sum / est.n_hat;

    if (units.size() < 2) {
        return est;
    }
    double acc = 0.0;
    for (const auto& u : units) {
        const double dev = u.value - est.y_bar_hat;
        acc += u.weight * (u.weight - 1.0) * dev * dev;
    }
    est.var_hat = std::max(acc, 0.0) / (est.n_hat * est.n_hat);
    est.degenerate_design = all_unit_weights;
    if (est.y_bar_hat > 0.0) {
        est.eer = std::sqrt(*est.var_hat) / est.y_bar_hat;
    }
    return est;
}

/// Runs hajek_mean per domain; results ordered by domain id.
inline std::vector<DomainDirectEstimate> direct_estimates(std::span<const WeightedObservation> observations) {
    std::map<std::string, std::vector<WeightedValue>, decltype(&domain_less)> by_domain(&domain_less);
    for (const auto& o : observations) {
        by_domain[o.domain_id].push_back({o.weight, o.value});
    }
    std::vector<DomainDirectEstimate> out;
    out.reserve(by_domain.size());
    for (const auto& [domain, units] : by_domain) {
        out.push_back(hajek_mean(units, domain));
    }
    return out;
}

/// Design-effect planning value recommended for household surveys.
inline constexpr double kRecommendedHouseholdDeff = 3.0;

/// Inputs of the segment sample-size formula. q() is 1 - p by construction.
struct SampleSizeSpec {
    double population = 0.0; ///< N_d
    double p = 0.1;          ///< prevalence of the key indicator
    double deff = kRecommendedHouseholdDeff;
    double esrel = 0.05; ///< target relative standard error

    double q() const { return 1.0 - p; }

    void validate() const {
        if (!(population > 0.0)) throw InputError("sample_size: N_d must be > 0");
        if (!(p > 0.0 && p < 1.0)) throw InputError("sample_size: P must lie in (0,1)");
        if (!(deff > 0.0)) throw InputError("sample_size: deff must be > 0");
        if (!(esrel > 0.0 && esrel < 1.0)) throw InputError("sample_size: esrel must lie in (0,1)");
    }
};

struct SampleSizeResult {
    double n = 0.0;          ///< unrounded
    long long planned = 0;   ///< ceil(n)
};

/// n = N P Q deff / (N (esrel P)^2 + P Q deff)
inline SampleSizeResult sample_size(const SampleSizeSpec& spec) {
    spec.validate();
    const double pq_deff = spec.p * spec.q() * spec.deff;
    const double abs_se = spec.esrel * spec.p;
    const double n = spec.population * pq_deff / (spec.population * abs_se * abs_se + pq_deff);
    return {n, static_cast<long long>(std::ceil(n))};
}

/// Design effect: variance under the cluster design over the SRS variance.
inline double deff_ratio(double var_cluster, double var_srs) {
    if (!(var_srs > 0.0)) {
        throw InputError("deff_ratio: SRS variance must be > 0");
    }
    if (var_cluster < 0.0) {
        throw InputError("deff_ratio: cluster variance must be >= 0");
    }
    return var_cluster / var_srs;
}

/// domain_id,y_bar_hat,var_hat,eer,n_hat,n_sample
inline std::string render_direct_table(std::span<const DomainDirectEstimate> estimates) {
    std::ostringstream out;
    write_csv_row(out, {"domain_id", "y_bar_hat", "var_hat", "eer", "n_hat", "n_sample"});
    for (const auto& e : estimates) {
        write_csv_row(out, {e.domain_id, format_general(e.y_bar_hat, 15),
                            e.var_hat ? format_general(*e.var_hat, 15) : "NA",
                            e.eer ? format_general(*e.eer, 15) : "NA", format_general(e.n_hat, 15),
                            std::to_string(e.n_sample)});
    }
    return out.str();
}

/// Parses the table written by render_direct_table.
inline std::vector<DomainDirectEstimate> parse_direct_table(const CsvTable& table) {
    const auto c_domain = table.column("domain_id");
    const auto c_mean = table.column("y_bar_hat");
    const auto c_var = table.column("var_hat");
    const auto c_eer = table.column("eer");
    const auto c_nhat = table.column("n_hat");
    const auto c_n = table.column("n_sample");
    std::vector<DomainDirectEstimate> out;
    for (const auto& row : table.rows) {
        DomainDirectEstimate e;
        e.domain_id = row[c_domain];
        e.y_bar_hat = parse_double(row[c_mean]);
        e.var_hat = parse_optional_double(row[c_var]);
        e.eer = parse_optional_double(row[c_eer]);
        e.n_hat = parse_double(row[c_nhat]);
        e.n_sample = static_cast<std::size_t>(parse_double(row[c_n]));
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace sae

#endif // SAE_DIRECT_ESTIMATION_HPP
