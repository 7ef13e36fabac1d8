#ifndef SAE_COVARIATES_HPP
#define SAE_COVARIATES_HPP

// Area-level auxiliary variables: Alkire-Foster poverty aggregation,
// log-reciprocal incidence and OLS residualisation.

#include "sae/csv.hpp"
#include "sae/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace sae {

/// Ordered domains with named numeric columns. Missing cells are NaN.
class AreaCovariateTable {
public:
    AreaCovariateTable() = default;
    explicit AreaCovariateTable(std::vector<std::string> domain_ids) : domain_ids_{std::move(domain_ids)} {}

    std::size_t size() const { return domain_ids_.size(); }
    const std::vector<std::string>& domain_ids() const { return domain_ids_; }
    const std::vector<std::string>& column_names() const { return order_; }

    bool has_column(const std::string& name) const { return columns_.count(name) > 0; }

    const std::vector<double>& column(const std::string& name) const {
        const auto it = columns_.find(name);
        if (it == columns_.end()) {
            throw InputError("area table has no column '" + name + "'");
        }
        return it->second;
    }

    /// Inserts or replaces a column; length must equal the domain count.
    void set_column(const std::string& name, std::vector<double> values) {
        if (values.size() != domain_ids_.size()) {
            throw InputError("column '" + name + "' has " + std::to_string(values.size()) +
                             " entries, expected " + std::to_string(domain_ids_.size()));
        }
        if (columns_.count(name) == 0) {
            order_.push_back(name);
        }
        columns_[name] = std::move(values);
    }

    /// Column values with a completeness check.
    const std::vector<double>& complete_column(const std::string& name) const {
        const auto& values = column(name);
        for (std::size_t d = 0; d < values.size(); ++d) {
            if (std::isnan(values[d])) {
                throw InputError("column '" + name + "' is missing a value for domain '" +
                                 domain_ids_[d] + "'");
            }
        }
        return values;
    }

    std::optional<std::size_t> find_domain(const std::string& id) const {
        for (std::size_t d = 0; d < domain_ids_.size(); ++d) {
            if (domain_ids_[d] == id) return d;
        }
        return std::nullopt;
    }

    /// Rows restricted to `ids`, in that order.
    AreaCovariateTable select(std::span<const std::string> ids) const {
        AreaCovariateTable out(std::vector<std::string>(ids.begin(), ids.end()));
        std::vector<std::size_t> index;
        for (const auto& id : ids) {
            const auto d = find_domain(id);
            if (!d) throw InputError("area table has no domain '" + id + "'");
            index.push_back(*d);
        }
        for (const auto& name : order_) {
            std::vector<double> col;
            for (auto d : index) col.push_back(columns_.at(name)[d]);
            out.set_column(name, std::move(col));
        }
        return out;
    }

    static AreaCovariateTable from_csv(const CsvTable& csv) {
        const auto c_domain = csv.column("domain_id");
        std::vector<std::string> ids;
        for (const auto& row : csv.rows) {
            if (std::find(ids.begin(), ids.end(), row[c_domain]) != ids.end()) {
                throw InputError("duplicate domain_id '" + row[c_domain] + "' in area table");
            }
            ids.push_back(row[c_domain]);
        }
        AreaCovariateTable table(std::move(ids));
        for (std::size_t c = 0; c < csv.header.size(); ++c) {
            if (c == c_domain) continue;
            std::vector<double> col;
            bool numeric = true;
            for (std::size_t r = 0; r < csv.rows.size() && numeric; ++r) {
                try {
                    col.push_back(parse_optional_double(csv.rows[r][c]).value_or(std::nan("")));
                } catch (const InputError&) {
                    numeric = false;
                }
            }
            // Text columns (e.g. locality names) are carried through untouched.
            if (numeric) {
                table.set_column(csv.header[c], std::move(col));
            } else {
                std::vector<std::string> text;
                for (const auto& row : csv.rows) text.push_back(row[c]);
                table.labels_[csv.header[c]] = std::move(text);
                table.label_order_.push_back(csv.header[c]);
            }
        }
        return table;
    }

    static AreaCovariateTable load(const std::string& path) {
        const auto csv = read_csv(path);
        try {
            return from_csv(csv);
        } catch (const InputError& e) {
            throw InputError(path + ": " + e.what());
        }
    }

    std::string to_csv() const {
        std::ostringstream out;
        std::vector<std::string> header{"domain_id"};
        header.insert(header.end(), label_order_.begin(), label_order_.end());
        header.insert(header.end(), order_.begin(), order_.end());
        write_csv_row(out, header);
        for (std::size_t d = 0; d < domain_ids_.size(); ++d) {
            std::vector<std::string> row{domain_ids_[d]};
            for (const auto& name : label_order_) row.push_back(labels_.at(name)[d]);
            for (const auto& name : order_) row.push_back(format_general(columns_.at(name)[d], 12));
            write_csv_row(out, row);
        }
        return out.str();
    }

private:
    std::vector<std::string> domain_ids_;
    std::vector<std::string> order_;
    std::map<std::string, std::vector<double>> columns_;
    std::vector<std::string> label_order_;
    std::map<std::string, std::vector<std::string>> labels_;
};

/// Households x indicators 0/1 deprivation matrix with indicator weights.
struct DeprivationMatrix {
    Eigen::VectorXd household_weights;
    Eigen::MatrixXd indicators;
    Eigen::VectorXd indicator_weights;
    double cutoff = 0.30;

    void validate() const {
        if (indicators.rows() == 0) {
            throw InputError("alkire_foster: empty household set");
        }
        if (household_weights.size() != indicators.rows()) {
            throw InputError("alkire_foster: household weight count does not match matrix rows");
        }
        if (indicator_weights.size() != indicators.cols()) {
            throw InputError("alkire_foster: indicator weight count does not match matrix columns");
        }
        if ((indicator_weights.array() < 0.0).any() || std::abs(indicator_weights.sum() - 1.0) > 1e-12) {
            throw InputError("alkire_foster: indicator weights must be >= 0 and sum to 1");
        }
        if ((household_weights.array() <= 0.0).any()) {
            throw InputError("alkire_foster: household weights must be > 0");
        }
        if (!(cutoff > 0.0 && cutoff <= 1.0)) {
            throw InputError("alkire_foster: cutoff must lie in (0,1]");
        }
        if (((indicators.array() != 0.0) && (indicators.array() != 1.0)).any()) {
            throw InputError("alkire_foster: indicator entries must be 0 or 1");
        }
    }
};

struct AlkireFosterResult {
    double incidence = 0.0; ///< H
    double intensity = 0.0; ///< A
    double adjusted_headcount = 0.0; ///< M0 = H * A
    Eigen::VectorXd scores;
    std::vector<bool> poor;
};

inline AlkireFosterResult alkire_foster(const DeprivationMatrix& dep) {
    dep.validate();
    AlkireFosterResult out;
    out.scores = dep.indicators * dep.indicator_weights;
    out.poor.resize(static_cast<std::size_t>(out.scores.size()));
    double total_weight = 0.0;
    double poor_weight = 0.0;
    double poor_score = 0.0;
    for (Eigen::Index i = 0; i < out.scores.size(); ++i) {
        const double w = dep.household_weights[i];
        total_weight += w;
        // Scores are sums of weights, so allow for rounding at the cutoff.
        const bool is_poor = out.scores[i] >= dep.cutoff - 1e-12;
        out.poor[static_cast<std::size_t>(i)] = is_poor;
        if (is_poor) {
            poor_weight += w;
            poor_score += w * out.scores[i];
        }
    }
    out.incidence = poor_weight / total_weight;
    out.intensity = poor_weight > 0.0 ? poor_score / poor_weight : 0.0;
    out.adjusted_headcount = out.incidence * out.intensity;
    return out;
}

inline std::vector<double> reciprocal(std::span<const double> incidence) {
    std::vector<double> out;
    out.reserve(incidence.size());
    for (double h : incidence) {
        if (!(h > 0.0 && h <= 1.0)) {
            throw InputError("incidence must lie in (0,1], got " + format_general(h));
        }
        out.push_back(1.0 / h);
    }
    return out;
}

/// ln(1 / incidence) for incidence in (0, 1].
inline std::vector<double> log_reciprocal(std::span<const double> incidence) {
    std::vector<double> out;
    out.reserve(incidence.size());
    for (double h : incidence) {
        if (!(h > 0.0 && h <= 1.0)) {
            throw InputError("incidence must lie in (0,1], got " + format_general(h));
        }
        out.push_back(-std::log(h));
    }
    return out;
}

struct Residualization {
    Eigen::VectorXd coefficients; ///< intercept first
    std::vector<double> residuals;
};

/// Least-squares residuals of y on an intercept plus the given regressor columns.
inline Residualization ols_residualize(std::span<const double> y, const Eigen::MatrixXd& regressors) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (regressors.rows() != n) {
        throw InputError("ols_residualize: regressor rows do not match response length");
    }
    const Eigen::Index p = regressors.cols() + 1;
    if (n < p + 1) {
        throw InputError("ols_residualize: need at least " + std::to_string(p + 1) + " domains");
    }
    Eigen::MatrixXd design(n, p);
    design.col(0).setOnes();
    design.rightCols(p - 1) = regressors;
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        throw InputError("ols_residualize: regressors are rank deficient (constant or collinear)");
    }
    Residualization out;
    out.coefficients = qr.solve(yv);
    const Eigen::VectorXd r = yv - design * out.coefficients;
    out.residuals.assign(r.data(), r.data() + r.size());
    return out;
}

/// Simple regression y = a + b x; returns residuals zeta.
inline Residualization ols_residualize(std::span<const double> y, std::span<const double> x) {
    if (y.size() < 3) {
        throw InputError("ols_residualize: need at least 3 domains");
    }
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    return ols_residualize(y, Eigen::MatrixXd(xv));
}

/// (v - mean) / sd with the n-1 divisor.
inline std::vector<double> standardize(std::span<const double> v) {
    if (v.size() < 2) {
        throw InputError("standardize: need at least 2 values");
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    if (!(sd > 0.0)) {
        throw InputError("standardize: constant column");
    }
    std::vector<double> out;
    for (double x : v) out.push_back((x - mean) / sd);
    return out;
}

struct CovariateOptions {
    std::string incidence_column = "incidence";
    std::string valorization_column = "valorization";
    std::string population_column = "population_projection";
    bool standardize_zeta = false;
};

/// Appends any of "ri", "log_ri", "zeta" (in the requested order) to the table.
inline void derive_covariates(AreaCovariateTable& table, std::span<const std::string> emit,
                              const CovariateOptions& options = {}) {
    for (const auto& name : emit) {
        if (name == "ri") {
            table.set_column("ri", reciprocal(table.complete_column(options.incidence_column)));
        } else if (name == "log_ri") {
            table.set_column("log_ri", log_reciprocal(table.complete_column(options.incidence_column)));
        } else if (name == "zeta") {
            auto fit = ols_residualize(table.complete_column(options.valorization_column),
                                       std::span<const double>(table.complete_column(options.population_column)));
            table.set_column("zeta", options.standardize_zeta ? standardize(fit.residuals)
                                                              : std::move(fit.residuals));
        } else {
            throw InputError("unknown derived covariate '" + name + "' (expected ri|log_ri|zeta)");
        }
    }
}

} // namespace sae

#endif // SAE_COVARIATES_HPP
