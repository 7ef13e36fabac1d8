// Writes the synthetic 19-domain fixture: person microdata drawn by the
// stratified systematic cluster sampler, an area covariate table, the item
// map and a pipeline config.
//
//   make_fixture <output-dir> [seed]

#include "sae/sae.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

std::string money(double v) { return sae::format_fixed(std::round(v), 0); }

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_fixture <output-dir> [seed]\n";
        return 1;
    }
    const std::filesystem::path dir = argv[1];
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 2011;
    std::filesystem::create_directories(dir);

    constexpr std::size_t kDomains = 19;
    auto rng = sae::make_stream(seed, 100, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    sae::PopulationSpec spec;
    spec.seed = seed;
    std::ostringstream areas;
    sae::write_csv_row(areas, {"domain_id", "name", "incidence", "valorization", "population_projection", "N_d"});
    std::vector<std::vector<std::string>> area_rows;
    for (std::size_t d = 0; d < kDomains; ++d) {
        const double log_ri = 0.4 + 2.6 * unif(rng);
        const double population = std::round(100000.0 + 1100000.0 * unif(rng));
        const double zeta = normal(rng);
        const double valorization = 100.0 + 4e-5 * population + 12.0 * zeta;
        const double area_effect = 0.08 * normal(rng);
        const double log_mean = 13.6 + 0.35 * log_ri + 0.12 * zeta + area_effect;

        sae::DomainPopulationSpec dom;
        char id[8];
        std::snprintf(id, sizeof id, "%zu", d + 1);
        dom.domain_id = id;
        for (double shift : {-0.30, 0.0, 0.35}) {
            sae::StratumSpec st;
            st.clusters = 30 + static_cast<std::size_t>(30.0 * unif(rng));
            st.segments = 6 + static_cast<std::size_t>(4.0 * unif(rng));
            st.log_income_mean = log_mean + shift;
            st.log_income_sd = 0.6;
            st.cluster_effect_sd = 0.3;
            dom.strata.push_back(st);
        }
        spec.domains.push_back(dom);
        char name[32];
        std::snprintf(name, sizeof name, "Locality %02zu", d + 1);
        area_rows.push_back({dom.domain_id, name, sae::format_general(std::exp(-log_ri), 8),
                             sae::format_general(valorization, 8), sae::format_fixed(population, 0)});
    }

    const auto pop = sae::generate_population(spec);
    for (std::size_t d = 0; d < kDomains; ++d) {
        area_rows[d].push_back(std::to_string(pop.household_count(d)));
        sae::write_csv_row(areas, area_rows[d]);
    }
    sae::write_text_file((dir / "areas.csv").string(), areas.str());

    auto sample_rng = sae::make_stream(seed, sae::stream::sample, 0);
    const auto sample = sae::draw_stratified_cluster_sample(pop, sample_rng);

    std::ostringstream micro;
    sae::write_csv_row(micro, {"person_id", "household_id", "domain_id", "weight", "perceptor_category", "K30",
                               "K39B", "K40", "K46", "K53", "K55"});
    std::size_t person = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const auto& s = sample[i];
        const auto& hh = pop.households[s.household];
        const double total = hh.per_capita_income * static_cast<double>(hh.members);
        const std::string household_id = "H" + std::to_string(s.household + 1);
        const bool independent = s.household % 3 == 0;
        for (std::size_t m = 0; m < hh.members; ++m) {
            std::vector<std::string> row{"P" + std::to_string(++person), household_id, pop.domain_ids[hh.domain],
                                         sae::format_fixed(s.weight, 6)};
            if (m == 0) {
                // Head: first activity (monthly), a yearly bonus and monthly rent.
                row.push_back(independent ? "independent" : "salaried");
                row.push_back(independent ? "NA" : money(0.6 * total));
                row.push_back(money(12.0 * 0.1 * total));
                row.push_back(independent ? money(0.6 * total) : "NA");
                row.push_back("0");
                row.push_back(money(0.2 * total));
                row.push_back("NA");
            } else if (m == 1) {
                // Second member: second activity and yearly transfers.
                row.push_back("unpaid_family");
                row.insert(row.end(), {"NA", "NA", "NA", money(0.05 * total), "NA", money(12.0 * 0.05 * total)});
            } else {
                row.push_back("unemployed_or_inactive");
                row.insert(row.end(), {"NA", "NA", "NA", "NA", "NA", "NA"});
            }
            sae::write_csv_row(micro, row);
        }
    }
    sae::write_text_file((dir / "microdata.csv").string(), micro.str());
    sae::write_text_file((dir / "item_map.json").string(),
                         sae::ItemMap::labour_force_default().to_json().dump(2) + "\n");

    nlohmann::ordered_json config;
    config["microdata"] = "microdata.csv";
    config["item_map"] = "item_map.json";
    config["areas"] = "areas.csv";
    config["unit"] = "household";
    config["annualization_divisor"] = 12;
    config["method"] = "reml";
    config["output_dir"] = "out";
    config["seed"] = seed;
    config["models"] = nlohmann::ordered_json::array();
    for (const auto& m : sae::standard_models()) {
        config["models"].push_back({{"name", m.name}, {"formula", m.formula}});
    }
    sae::write_text_file((dir / "pipeline.json").string(), config.dump(2) + "\n");
    std::cout << "wrote " << person << " person records in " << sample.size() << " households to " << dir.string()
              << '\n';
    return 0;
}
