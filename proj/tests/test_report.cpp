#include "sae/report.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace sae;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<ComparisonRow> two_rows() {
    auto a = make_comparison_row("North", 0.0621, 0.0512);
    a.y_bar_hat = 4700041.98;
    a.eblup = 4522691.09;
    a.n_sample = 774;
    auto b = make_comparison_row("South", 0.0585, 0.0582);
    return {a, b};
}

} // namespace

TEST(Delta, HandValues) {
    EXPECT_NEAR(relative_eer_reduction(0.0621, 0.0512), 1.09 / 6.21, 1e-15);
    EXPECT_DOUBLE_EQ(relative_eer_reduction(0.05, 0.05), 0.0);
    EXPECT_LT(relative_eer_reduction(0.04, 0.05), 0.0);
    EXPECT_THROW(relative_eer_reduction(0.0, 0.01), InputError);
}

TEST(Delta, InvariantToCommonScaling) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.001, 0.5), k(0.1, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double d = u(rng), e = u(rng), s = k(rng);
        EXPECT_NEAR(relative_eer_reduction(d, e), relative_eer_reduction(s * d, s * e), 1e-12);
        EXPECT_LE(relative_eer_reduction(d, e), 1.0);
    }
}

TEST(Render, MarkdownMatchesGoldenFile) {
    const auto rows = two_rows();
    EXPECT_EQ(render_report(rows, ReportFormat::markdown), slurp(SAE_TEST_GOLDEN_DIR "/comparison.md"));
}

TEST(Render, CsvAndJson) {
    const auto rows = two_rows();
    const auto csv = render_report(rows, ReportFormat::csv);
    EXPECT_EQ(csv, "domain_id,y_bar_hat,eer_direct_pct,eblup,eer_eblup_pct,delta_pct,n_sample\n"
                   "North,4700041.98,6.21,4522691.09,5.12,17.55,774\n"
                   "South,NA,5.85,NA,5.82,0.51,NA\n");
    const auto j = nlohmann::json::parse(render_report(rows, ReportFormat::json));
    ASSERT_EQ(j.size(), 2u);
    EXPECT_EQ(j[0]["domain_id"], "North");
    EXPECT_DOUBLE_EQ(j[0]["delta_pct"].get<double>(), 17.55);
    EXPECT_TRUE(j[1]["eblup"].is_null());
    EXPECT_THROW(render_report(std::vector<ComparisonRow>{}, ReportFormat::csv), InputError);
    EXPECT_EQ(parse_report_format("md"), ReportFormat::markdown);
    EXPECT_THROW(parse_report_format("xml"), InputError);
}

TEST(Render, NegativeZeroIsPrintedAsZero) {
    const std::vector<ComparisonRow> rows{make_comparison_row("x", 0.05, 0.0500001)};
    EXPECT_NE(render_report(rows, ReportFormat::csv).find(",0.00,"), std::string::npos);
}

TEST(SortByDelta, LargestFirstStableOnTies) {
    std::vector<ComparisonRow> rows{make_comparison_row("a", 0.1, 0.09), make_comparison_row("b", 0.1, 0.05),
                                    make_comparison_row("c", 0.2, 0.18)};
    sort_by_delta(rows);
    EXPECT_EQ(rows[0].domain_id, "b");
    EXPECT_EQ(rows[1].domain_id, "a");
    EXPECT_EQ(rows[2].domain_id, "c");
}

TEST(Compare, JoinsByDomainAndChecksCoverage) {
    std::vector<DomainDirectEstimate> direct(2);
    direct[0].domain_id = "1";
    direct[0].y_bar_hat = 100;
    direct[0].eer = 0.10;
    direct[0].n_sample = 5;
    direct[1].domain_id = "2";
    direct[1].y_bar_hat = 200;
    direct[1].eer = 0.05;
    EblupResult model;
    model.domains.resize(2);
    model.domains[0].domain_id = "2";
    model.domains[0].eblup = 190;
    model.domains[0].eer_eblup = 0.04;
    model.domains[1].domain_id = "1";
    model.domains[1].eblup = 105;
    model.domains[1].eer_eblup = 0.08;
    const auto rows = compare(direct, model);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].domain_id, "1");
    EXPECT_NEAR(rows[0].delta, 0.2, 1e-12);
    EXPECT_DOUBLE_EQ(*rows[1].eblup, 190.0);

    model.domains[1].domain_id = "3";
    EXPECT_THROW(compare(direct, model), InputError);
    model.domains.pop_back();
    EXPECT_THROW(compare(direct, model), InputError);
}

TEST(ParseComparisonTable, ReadsPercentInputs) {
    std::istringstream in("domain_id,eer_direct,eer_eblup,n_sample\nA,6.21,5.12,774\nB,4,x,1\n");
    const auto t = parse_csv(in);
    auto good = t;
    good.rows.pop_back();
    const auto rows = parse_comparison_table(good);
    EXPECT_NEAR(rows[0].eer_direct, 0.0621, 1e-15);
    EXPECT_EQ(*rows[0].n_sample, 774u);
    try {
        parse_comparison_table(t);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    }
}

TEST(Predictions, RoundTripThroughCsv) {
    EblupResult r;
    r.domains.resize(1);
    auto& p = r.domains[0];
    p.domain_id = "7";
    p.direct = 1234.5;
    p.eblup = 1200.25;
    p.mse = 17.0;
    p.eer_eblup = std::sqrt(17.0) / 1200.25;
    p.g1 = p.g2 = p.g3 = 1.0;
    std::istringstream in(render_predictions(r));
    const auto back = parse_predictions(parse_csv(in));
    ASSERT_EQ(back.domains.size(), 1u);
    EXPECT_DOUBLE_EQ(back.domains[0].eblup, 1200.25);
    EXPECT_NEAR(*back.domains[0].eer_eblup, *p.eer_eblup, 1e-14);
}
