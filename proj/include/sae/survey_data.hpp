#ifndef SAE_SURVEY_DATA_HPP
#define SAE_SURVEY_DATA_HPP

// Household survey microdata ingestion and per-capita income construction.

#include "sae/csv.hpp"
#include "sae/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace sae {

/// The five income sources that make up an individual's monthly income.
enum class IncomeComponent : std::size_t {
    impa = 0, ///< monetary income, first activity
    ie,       ///< income in kind
    isa,      ///< second activity
    imdi,     ///< monetary income of unemployed and inactive
    iof       ///< other sources
};

inline constexpr std::size_t kIncomeComponentCount = 5;

enum class ItemPeriod { monthly, last_12_months };

enum class PerceptorCategory { salaried, independent, unpaid_family, unemployed_or_inactive };

enum class AnalysisUnit { household, person };

inline std::string to_string(IncomeComponent c) {
    static constexpr std::array names{"IMPA", "IE", "ISA", "IMDI", "IOF"};
    return names[static_cast<std::size_t>(c)];
}

inline IncomeComponent parse_income_component(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::toupper(ch); });
    for (std::size_t i = 0; i < kIncomeComponentCount; ++i) {
        if (to_string(static_cast<IncomeComponent>(i)) == s) {
            return static_cast<IncomeComponent>(i);
        }
    }
    throw InputError("unknown income component '" + s + "'");
}

inline ItemPeriod parse_item_period(const std::string& s) {
    if (s == "monthly") {
        return ItemPeriod::monthly;
    }
    if (s == "last_12_months") {
        return ItemPeriod::last_12_months;
    }
    throw InputError("unknown item period '" + s + "' (expected monthly|last_12_months)");
}

inline PerceptorCategory parse_perceptor_category(const std::string& s) {
    if (s == "salaried") return PerceptorCategory::salaried;
    if (s == "independent") return PerceptorCategory::independent;
    if (s == "unpaid_family") return PerceptorCategory::unpaid_family;
    if (s == "unemployed_or_inactive") return PerceptorCategory::unemployed_or_inactive;
    throw InputError("unknown perceptor category '" + s + "'");
}

inline AnalysisUnit parse_analysis_unit(const std::string& s) {
    if (s == "household") return AnalysisUnit::household;
    if (s == "person") return AnalysisUnit::person;
    throw InputError("unknown analysis unit '" + s + "' (expected household|person)");
}

struct ItemRule {
    IncomeComponent component = IncomeComponent::impa;
    ItemPeriod period = ItemPeriod::monthly;
    bool ignore = false;
};

/// Survey item code -> income component and reference period.
class ItemMap {
public:
    ItemMap() = default;

    void set(const std::string& code, ItemRule rule) { rules_[code] = rule; }

    const ItemRule* find(const std::string& code) const {
        const auto it = rules_.find(code);
        return it == rules_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, ItemRule>& rules() const { return rules_; }

    /// Accepts {"items": {"K30": {"component": "IMPA", "period": "monthly"}, "X": {"ignore": true}}}.
    static ItemMap from_json(const nlohmann::json& j) {
        ItemMap map;
        const auto& items = j.contains("items") ? j.at("items") : j;
        if (!items.is_object()) {
            throw InputError("item map must be an object of item codes");
        }
        for (const auto& [code, spec] : items.items()) {
            ItemRule rule;
            rule.ignore = spec.value("ignore", false);
            if (!rule.ignore) {
                if (!spec.contains("component")) {
                    throw InputError("item '" + code + "' has no component");
                }
                rule.component = parse_income_component(spec.at("component").get<std::string>());
                rule.period = parse_item_period(spec.value("period", std::string("monthly")));
            }
            map.set(code, rule);
        }
        return map;
    }

    static ItemMap load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw InputError("cannot open item map '" + path + "'");
        }
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw InputError("item map '" + path + "': " + e.what());
        }
    }

    /// Chapter K labour-force items of the 2011 multipurpose survey.
    static ItemMap labour_force_default() {
        ItemMap map;
        const auto add = [&map](const char* code, IncomeComponent c, ItemPeriod p) {
            map.set(code, ItemRule{c, p, false});
        };
        using enum IncomeComponent;
        using enum ItemPeriod;
        for (const char* code : {"K30", "K35", "K36", "K37", "K38", "K40"}) {
            add(code, impa, monthly);
        }
        for (const char* code : {"K39A", "K39B", "K39C", "K39D", "K39E"}) {
            add(code, impa, last_12_months);
        }
        add("K46", isa, monthly);
        for (const char* code : {"K51", "K52", "K53"}) {
            add(code, iof, monthly);
        }
        for (const char* code : {"K54", "K55", "K56", "K57"}) {
            add(code, iof, last_12_months);
        }
        return map;
    }

    nlohmann::json to_json() const {
        nlohmann::json items = nlohmann::json::object();
        for (const auto& [code, rule] : rules_) {
            if (rule.ignore) {
                items[code] = {{"ignore", true}};
            } else {
                items[code] = {{"component", to_string(rule.component)},
                               {"period", rule.period == ItemPeriod::monthly ? "monthly"
                                                                             : "last_12_months"}};
            }
        }
        return {{"items", items}};
    }

private:
    std::map<std::string, ItemRule> rules_;
};

/// Monthly amounts per income component. A component is incomplete when at
/// least one of its items was missing; missing items contribute zero.
struct IncomeComponents {
    std::array<double, kIncomeComponentCount> amount{};
    std::array<bool, kIncomeComponentCount> complete{true, true, true, true, true};

    double operator[](IncomeComponent c) const { return amount[static_cast<std::size_t>(c)]; }
    bool is_complete(IncomeComponent c) const { return complete[static_cast<std::size_t>(c)]; }

    double total() const {
        double sum = 0.0;
        for (double a : amount) {
            sum += a;
        }
        return sum;
    }
};

struct RawItem {
    std::optional<double> amount; ///< nullopt = missing in the file
};

struct PersonIncomeRecord {
    std::string person_id;
    std::string household_id;
    std::string domain_id;
    double weight = 1.0;
    std::optional<PerceptorCategory> perceptor_category;
    std::map<std::string, RawItem> raw_items;
};

struct HouseholdIncome {
    std::string household_id;
    std::string domain_id;
    double weight = 1.0;
    std::size_t member_count = 0;
    double total_income = 0.0;
    double per_capita_income = 0.0;
};

/// Reads microdata: person_id, household_id, domain_id, weight, optional
/// perceptor_category, then one column per survey item code.
inline std::vector<PersonIncomeRecord> load_microdata(const CsvTable& table, const ItemMap& item_map) {
    const std::size_t c_person = table.column("person_id");
    const std::size_t c_household = table.column("household_id");
    const std::size_t c_domain = table.column("domain_id");
    const std::size_t c_weight = table.column("weight");
    const auto c_category = table.find_column("perceptor_category");

    struct ItemColumn {
        std::size_t index;
        std::string code;
    };
    std::vector<ItemColumn> item_columns;
    std::vector<std::string> unknown;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i == c_person || i == c_household || i == c_domain || i == c_weight ||
            (c_category && i == *c_category)) {
            continue;
        }
        const auto& code = table.header[i];
        const ItemRule* rule = item_map.find(code);
        if (rule == nullptr) {
            unknown.push_back(code);
        } else if (!rule->ignore) {
            item_columns.push_back({i, code});
        }
    }
    if (!unknown.empty()) {
        std::string list;
        for (const auto& code : unknown) {
            list += (list.empty() ? "" : ", ") + code;
        }
        throw InputError("item columns not in item map: " + list);
    }

    std::vector<PersonIncomeRecord> records;
    records.reserve(table.rows.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "row " + std::to_string(r + 1);
        const auto cell_error = [&](const std::string& column, const std::string& msg) {
            return InputError(where + ", column " + column + ": " + msg);
        };

        PersonIncomeRecord rec;
        rec.person_id = row[c_person];
        rec.household_id = row[c_household];
        rec.domain_id = row[c_domain];
        if (rec.person_id.empty()) throw cell_error("person_id", "empty id");
        if (rec.household_id.empty()) throw cell_error("household_id", "empty id");
        if (rec.domain_id.empty()) throw cell_error("domain_id", "empty id");
        if (!seen.insert(rec.person_id).second) {
            throw cell_error("person_id", "duplicate person_id '" + rec.person_id + "'");
        }

        try {
            rec.weight = parse_double(row[c_weight]);
        } catch (const InputError& e) {
            throw cell_error("weight", e.what());
        }
        if (!(rec.weight > 0.0)) {
            throw cell_error("weight", "weight must be > 0, got " + row[c_weight]);
        }
        if (c_category && !is_missing_token(row[*c_category])) {
            try {
                rec.perceptor_category = parse_perceptor_category(row[*c_category]);
            } catch (const InputError& e) {
                throw cell_error("perceptor_category", e.what());
            }
        }
        for (const auto& col : item_columns) {
            RawItem item;
            try {
                item.amount = parse_optional_double(row[col.index]);
            } catch (const InputError& e) {
                throw cell_error(col.code, e.what());
            }
            if (item.amount && *item.amount < 0.0) {
                throw cell_error(col.code, "negative income amount");
            }
            rec.raw_items.emplace(col.code, item);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<PersonIncomeRecord> load_microdata(const std::string& path, const ItemMap& item_map) {
    const auto table = read_csv(path);
    try {
        return load_microdata(table, item_map);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

/// Converts a person's raw items into monthly component amounts.
inline IncomeComponents build_income(const PersonIncomeRecord& record, const ItemMap& item_map,
                                     double annualization_divisor = 12.0) {
    if (!(annualization_divisor > 0.0)) {
        throw InputError("annualization divisor must be > 0");
    }
    IncomeComponents out;
    for (const auto& [code, item] : record.raw_items) {
        const ItemRule* rule = item_map.find(code);
        if (rule == nullptr) {
            throw InputError("item '" + code + "' not in item map");
        }
        if (rule->ignore) {
            continue;
        }
        const auto slot = static_cast<std::size_t>(rule->component);
        if (!item.amount) {
            out.complete[slot] = false;
            continue;
        }
        const double monthly =
            rule->period == ItemPeriod::monthly ? *item.amount : *item.amount / annualization_divisor;
        out.amount[slot] += monthly;
    }
    return out;
}

/// Sums member incomes for one household. All records must share household,
/// domain and weight.
inline HouseholdIncome aggregate_household(std::span<const PersonIncomeRecord> members,
                                           const ItemMap& item_map,
                                           double annualization_divisor = 12.0) {
    if (members.empty()) {
        throw InputError("household has no member records");
    }
    HouseholdIncome hh;
    hh.household_id = members.front().household_id;
    hh.domain_id = members.front().domain_id;
    hh.weight = members.front().weight;
    for (const auto& m : members) {
        if (m.household_id != hh.household_id) {
            throw InputError("aggregate_household: mixed household ids '" + hh.household_id +
                             "' and '" + m.household_id + "'");
        }
        if (m.domain_id != hh.domain_id) {
            throw InputError("household '" + hh.household_id + "' spans domains '" +
                             hh.domain_id + "' and '" + m.domain_id + "'");
        }
        if (m.weight != hh.weight) {
            throw InputError("household '" + hh.household_id + "' has inconsistent weights");
        }
        hh.total_income += build_income(m, item_map, annualization_divisor).total();
    }
    hh.member_count = members.size();
    hh.per_capita_income = hh.total_income / static_cast<double>(hh.member_count);
    return hh;
}

/// Groups records by household; output is ordered by (domain, household).
inline std::vector<HouseholdIncome> aggregate_households(std::span<const PersonIncomeRecord> records,
                                                         const ItemMap& item_map,
                                                         double annualization_divisor = 12.0) {
    std::vector<const PersonIncomeRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) {
        sorted.push_back(&r);
    }
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
        if (a->domain_id != b->domain_id) return domain_less(a->domain_id, b->domain_id);
        if (a->household_id != b->household_id) return domain_less(a->household_id, b->household_id);
        return domain_less(a->person_id, b->person_id);
    });

    std::vector<HouseholdIncome> out;
    std::set<std::string> finished;
    std::vector<PersonIncomeRecord> group;
    const auto flush = [&] {
        if (group.empty()) return;
        if (!finished.insert(group.front().household_id).second) {
            throw InputError("household '" + group.front().household_id + "' spans several domains");
        }
        out.push_back(aggregate_household(group, item_map, annualization_divisor));
        group.clear();
    };
    for (const auto* r : sorted) {
        if (!group.empty() && (r->household_id != group.front().household_id ||
                               r->domain_id != group.front().domain_id)) {
            flush();
        }
        group.push_back(*r);
    }
    flush();
    return out;
}

/// One unit of analysis for the direct estimator.
struct WeightedObservation {
    std::string domain_id;
    double weight = 1.0;
    double value = 0.0;
};

/// Household unit: one observation per household (per-capita income, household
/// weight). Person unit: every member carries its household's per-capita income.
inline std::vector<WeightedObservation> analysis_observations(std::span<const HouseholdIncome> households,
                                                              AnalysisUnit unit) {
    std::vector<WeightedObservation> out;
    for (const auto& hh : households) {
        const std::size_t copies = unit == AnalysisUnit::household ? 1 : hh.member_count;
        for (std::size_t i = 0; i < copies; ++i) {
            out.push_back({hh.domain_id, hh.weight, hh.per_capita_income});
        }
    }
    return out;
}

} // namespace sae

#endif // SAE_SURVEY_DATA_HPP
