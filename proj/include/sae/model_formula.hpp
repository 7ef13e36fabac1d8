#ifndef SAE_MODEL_FORMULA_HPP
#define SAE_MODEL_FORMULA_HPP

// R-style model formulas over area-table columns: "y ~ a + b", "y ~ a * b",
// "y ~ a + b + a:b". The intercept is always included.

#include "sae/covariates.hpp"
#include "sae/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

namespace sae {

class ModelFormula {
public:
    /// One design column: a product of one or more table columns.
    using Term = std::vector<std::string>;

    static ModelFormula parse(const std::string& text) {
        const auto tilde = text.find('~');
        if (tilde == std::string::npos) {
            throw InputError("formula '" + text + "' has no '~'");
        }
        ModelFormula f;
        f.text_ = text;
        f.response_ = detail::trim(text.substr(0, tilde));
        if (f.response_.empty()) {
            throw InputError("formula '" + text + "' has no response");
        }
        const std::string rhs = text.substr(tilde + 1);
        for (const auto& piece : split(rhs, '+')) {
            const std::string term = detail::trim(piece);
            if (term.empty()) {
                throw InputError("formula '" + text + "' has an empty term");
            }
            if (term == "1") {
                continue;
            }
            if (term.find('*') != std::string::npos) {
                // a * b expands to every non-empty product of its factors.
                const auto factors = trimmed_factors(term, '*', text);
                const std::size_t k = factors.size();
                for (std::size_t size = 1; size <= k; ++size) {
                    for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
                        if (static_cast<std::size_t>(__builtin_popcountll(mask)) != size) continue;
                        Term t;
                        for (std::size_t i = 0; i < k; ++i) {
                            if (mask & (std::size_t{1} << i)) t.push_back(factors[i]);
                        }
                        f.add_term(std::move(t));
                    }
                }
            } else {
                f.add_term(trimmed_factors(term, ':', text));
            }
        }
        return f;
    }

    const std::string& text() const { return text_; }
    const std::string& response() const { return response_; }
    const std::vector<Term>& terms() const { return terms_; }

    /// Number of design columns including the intercept.
    Eigen::Index n_params() const { return static_cast<Eigen::Index>(terms_.size()) + 1; }

    std::vector<std::string> column_names() const {
        std::vector<std::string> names{"(Intercept)"};
        for (const auto& t : terms_) {
            std::string name;
            for (const auto& factor : t) name += (name.empty() ? "" : ":") + factor;
            names.push_back(name);
        }
        return names;
    }

    Eigen::MatrixXd design_matrix(const AreaCovariateTable& table) const {
        const auto n = static_cast<Eigen::Index>(table.size());
        Eigen::MatrixXd X(n, n_params());
        X.col(0).setOnes();
        for (std::size_t j = 0; j < terms_.size(); ++j) {
            Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
            for (const auto& factor : terms_[j]) {
                const auto& values = table.complete_column(factor);
                col.array() *= Eigen::Map<const Eigen::VectorXd>(values.data(), n).array();
            }
            X.col(static_cast<Eigen::Index>(j) + 1) = col;
        }
        return X;
    }

private:
    void add_term(Term t) {
        std::sort(t.begin(), t.end());
        t.erase(std::unique(t.begin(), t.end()), t.end());
        if (std::find(terms_.begin(), terms_.end(), t) == terms_.end()) {
            terms_.push_back(std::move(t));
        }
    }

    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        parts.push_back(cur);
        return parts;
    }

    static Term trimmed_factors(const std::string& term, char sep, const std::string& text) {
        Term out;
        for (const auto& f : split(term, sep)) {
            auto name = detail::trim(f);
            if (name.empty()) {
                throw InputError("formula '" + text + "' has an empty factor");
            }
            out.push_back(std::move(name));
        }
        return out;
    }

    std::string text_;
    std::string response_;
    std::vector<Term> terms_;
};

} // namespace sae

#endif // SAE_MODEL_FORMULA_HPP
