#include "csoeval/evaluate.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "csoeval/error.hpp"
#include "csoeval/rng.hpp"
#include "csoeval/synth.hpp"

namespace csoeval {
namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no csoeval::Error thrown";
    return ErrorCode::io;
}

double sorted_q(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = double(v.size() - 1) * p;
    const auto lo = std::size_t(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

double iqr(const std::vector<double>& v) { return sorted_q(v, 0.75) - sorted_q(v, 0.25); }

EvalRecord clean(const std::string& model, std::size_t trial, double m, Mode mode = Mode::global) {
    EvalRecord r;
    r.model_type = model;
    r.mode = mode;
    r.trial = trial;
    r.seed = 100 + trial;
    r.mse = m;
    r.mse_peak = 2 * m;
    return r;
}

EvalRecord perturbed(const std::string& model, std::size_t trial, double m, double rate) {
    EvalRecord r = clean(model, trial, m);
    r.feature = "level";
    r.error_kind = "outlier";
    r.error_rate = rate;
    r.effective_rate = rate;
    return r;
}

TEST(Mse, IdentityOffsetAndOracle) {
    const std::vector<double> t{1, 2, 3, 4};
    EXPECT_EQ(mse(t, t), 0.0);
    std::vector<double> p = t;
    for (auto& v : p) v += 1;
    EXPECT_EQ(mse(p, t), 1.0);
    EXPECT_EQ(code_of([] { mse(std::vector<double>{}, std::vector<double>{}); }), ErrorCode::empty_evaluation_set);

    Rng rng(1);
    std::vector<double> a(1001), b(1001);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal(5, 3);
        b[i] = rng.normal(5, 3);
    }
    // Two passes: differences first, then their squares.
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    double s = 0;
    for (double v : d) s += v * v;
    EXPECT_NEAR(mse(a, b), s / double(a.size()), 1e-12);
}

TEST(Mse, MaskedCellsByTargetTime) {
    PeakMask mask;
    mask.selected = {0, 0, 0, 1, 1, 0, 0, 0};
    const std::vector<std::size_t> origins{1, 2};
    // Window 0 targets times 2,3; window 1 targets 3,4.
    const std::vector<double> truth{0, 0, 0, 0};
    const std::vector<double> pred{5, 1, 2, 3};
    EXPECT_DOUBLE_EQ(mse(pred, truth, origins, 2, mask), (1.0 + 4.0 + 9.0) / 3.0);
    mask.selected.assign(8, 0);
    EXPECT_EQ(code_of([&] { mse(pred, truth, origins, 2, mask); }), ErrorCode::empty_evaluation_set);
}

TEST(PeakMask, TwentyPercentWithinOneIndex) {
    Rng rng(3);
    std::vector<double> x(3001);
    double level = 0;
    for (auto& v : x) {
        level = 0.9 * level + rng.normal(0, 1) + (rng.uniform() < 0.01 ? 20 : 0);
        v = level;
    }
    const auto m = peak_mask(x);
    EXPECT_EQ(m.valid, 3000u);
    EXPECT_EQ(m.selected[0], 0);
    EXPECT_LE(std::abs(double(m.count()) - 0.2 * double(m.valid)), 1.0);
}

TEST(PeakMask, SingleSpikeGivesContiguousBlock) {
    std::vector<double> x(400, 1.0);
    x[200] = 10.0;
    const auto m = peak_mask(x, {48, 0.2, true});
    // Oracle: the two non-zero differences sit at t = 200 and 201; the
    // smoothed value is positive exactly where a window covers one of them.
    std::vector<std::size_t> sel;
    for (std::size_t t = 0; t < x.size(); ++t)
        if (m.selected[t]) sel.push_back(t);
    ASSERT_FALSE(sel.empty());
    EXPECT_EQ(sel.back() - sel.front() + 1, sel.size());
    EXPECT_LE(sel.front(), 200u);
    EXPECT_GE(sel.back(), 201u);
    EXPECT_NEAR(double(sel.size()), 49.0, 2.0);
}

TEST(PeakMask, FullSelectionAndDegenerateInputs) {
    std::vector<double> x(100);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.3 * double(i));
    const auto all = peak_mask(x, {10, 1.0, true});
    EXPECT_EQ(all.count(), 99u);
    std::vector<double> ramp(100);
    for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 2.0 * double(i);
    EXPECT_EQ(code_of([&] { peak_mask(ramp, {10, 0.2, true}); }), ErrorCode::no_peaks);
    EXPECT_EQ(code_of([&] { peak_mask(std::vector<double>(11, 0.0), {10, 0.2, true}); }),
              ErrorCode::insufficient_history);
}

TEST(RollingMean, ShrinksAtEdges) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const auto r = centered_rolling_mean(x, 3);
    EXPECT_DOUBLE_EQ(r[0], 1.5);
    EXPECT_DOUBLE_EQ(r[2], 3.0);
    EXPECT_DOUBLE_EQ(r[4], 4.5);
    const auto r4 = centered_rolling_mean(x, 4);
    EXPECT_DOUBLE_EQ(r4[0], 1.5);  // [0, 1]
    EXPECT_DOUBLE_EQ(r4[2], 2.5);  // [0, 3]
}

TEST(Consistency, OrderStatisticIqr) {
    std::vector<EvalRecord> recs;
    const double ms[] = {3, 1, 4, 2};
    for (std::size_t t = 0; t < 4; ++t) recs.push_back(clean("a", t, ms[t]));
    for (std::size_t t = 0; t < 3; ++t) recs.push_back(clean("p", t, 7.0));
    const auto c = consistency(recs);
    EXPECT_DOUBLE_EQ(c.at("a").iqr_mse, 1.5);
    EXPECT_DOUBLE_EQ(c.at("a").median_mse, 2.5);
    EXPECT_EQ(c.at("a").trials, 4u);
    EXPECT_EQ(c.at("p").iqr_mse, 0.0);
    const std::vector<EvalRecord> one{clean("a", 0, 1.0)};
    EXPECT_EQ(code_of([&] { consistency(one); }), ErrorCode::insufficient_trials);
}

TEST(LocalRobustness, DelegatesAndRejectsGlobal) {
    std::vector<EvalRecord> recs;
    for (std::size_t t = 0; t < 5; ++t) recs.push_back(clean("l", t, 1.0 + 0.37 * double(t * t), Mode::local));
    const auto lr = local_robustness(recs);
    EXPECT_EQ(lr.at("l"), consistency(recs).at("l").iqr_mse);
    recs.push_back(clean("g", 0, 1.0));
    EXPECT_EQ(code_of([&] { local_robustness(recs); }), ErrorCode::mode_mismatch);
}

TEST(Cci, ClosedForms) {
    EXPECT_EQ(cci(std::vector<CciInput>{{0.3, 1000}}), std::vector<double>{1.0});
    const auto two = cci(std::vector<CciInput>{{2.0, 800}, {1.0, 400}});
    EXPECT_DOUBLE_EQ(two[0], 1.0);
    EXPECT_DOUBLE_EQ(two[1], 0.5);
    const std::vector<CciInput> table{{0.02, 5000}, {0.5, 120}, {0.1, 90000}};
    const auto base = cci(table);
    for (std::size_t i = 0; i < 3; ++i) {
        const double oracle = 0.5 * (table[i].inference_seconds / 0.5 + table[i].size_bytes / 90000.0);
        EXPECT_NEAR(base[i], oracle, 1e-12);
    }
    auto scaled = table;
    for (auto& m : scaled) m.inference_seconds *= 10;
    const auto s = cci(scaled);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s[i], base[i], 1e-15);
    EXPECT_EQ(code_of([] { cci(std::vector<CciInput>{{0.0, 1}}); }), ErrorCode::invalid_measurement);
    EXPECT_EQ(code_of([] { cci(std::vector<CciInput>{{1.0, -1}}); }), ErrorCode::invalid_measurement);
}

TEST(Ri, ClosedFormsAndZeroColumns) {
    const std::vector<RiInput> table{{0.4, 2.0, 0.5}, {0.1, 3.0, 0.25}, {0.2, 0.5, 1.0}};
    const auto r = ri(table);
    for (std::size_t i = 0; i < 3; ++i) {
        const double oracle =
            (table[i].iqr_clean / 0.4 + table[i].mean_abs_increase / 3.0 + table[i].iqr_abs_increase / 1.0) / 3.0;
        EXPECT_NEAR(r[i], oracle, 1e-12);
    }
    EXPECT_EQ(ri(std::vector<RiInput>{{1, 1, 1}, {0.5, 0.5, 0.5}})[0], 1.0);
    const auto z = ri(std::vector<RiInput>{{0, 0, 0}, {0.2, 1.0, 0}});
    EXPECT_EQ(z[0], 0.0);
    EXPECT_DOUBLE_EQ(z[1], 2.0 / 3.0);
}

TEST(Tradeoff, HandBuiltThreeModelTable) {
    std::vector<EvalRecord> recs;
    const std::vector<std::vector<double>> clean_mse{{1.0, 1.4, 1.1}, {2.0, 2.0, 2.0}, {0.8, 1.6, 1.2}};
    const std::vector<std::vector<double>> pert_mse{{1.5, 1.2, 2.1}, {2.0, 2.0, 2.0}, {3.0, 0.5, 1.0}};
    const char* names[] = {"m0", "m1", "m2"};
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t t = 0; t < 3; ++t) {
            recs.push_back(clean(names[m], t, clean_mse[m][t]));
            recs.push_back(perturbed(names[m], t, pert_mse[m][t], 0.1));
            recs.push_back(perturbed(names[m], t, pert_mse[m][t] + 0.5, 0.2));
        }
    std::map<std::string, CciInput> cx{{"m0", {0.01, 400}}, {"m1", {0.04, 100}}, {"m2", {0.02, 800}}};
    const auto rows = tradeoff_indices(recs, cx);
    ASSERT_EQ(rows.size(), 3u);

    std::vector<double> iq(3), mean_inc(3), iq_inc(3);
    for (std::size_t m = 0; m < 3; ++m) {
        iq[m] = iqr(clean_mse[m]);
        std::vector<double> inc;
        for (std::size_t t = 0; t < 3; ++t) {
            inc.push_back(std::abs(pert_mse[m][t] - clean_mse[m][t]));
            inc.push_back(std::abs(pert_mse[m][t] + 0.5 - clean_mse[m][t]));
        }
        double s = 0;
        for (double v : inc) s += v;
        mean_inc[m] = s / double(inc.size());
        iq_inc[m] = iqr(inc);
    }
    const double mi = *std::max_element(iq.begin(), iq.end());
    const double mp = *std::max_element(mean_inc.begin(), mean_inc.end());
    const double mq = *std::max_element(iq_inc.begin(), iq_inc.end());
    for (std::size_t m = 0; m < 3; ++m) {
        EXPECT_EQ(rows[m].model_type, names[m]);
        EXPECT_NEAR(rows[m].median_mse, sorted_q(clean_mse[m], 0.5), 1e-12);
        EXPECT_NEAR(rows[m].iqr_mse, iq[m], 1e-12);
        EXPECT_NEAR(rows[m].median_mse_peak, 2 * sorted_q(clean_mse[m], 0.5), 1e-12);
        ASSERT_TRUE(rows[m].ri.has_value());
        EXPECT_NEAR(*rows[m].ri, (iq[m] / mi + mean_inc[m] / mp + iq_inc[m] / mq) / 3.0, 1e-12);
        const auto& c = cx.at(names[m]);
        ASSERT_TRUE(rows[m].cci.has_value());
        EXPECT_NEAR(*rows[m].cci, 0.5 * (c.inference_seconds / 0.04 + c.size_bytes / 800.0), 1e-12);
    }
    // m1 is perfectly consistent, so only the perturbation terms remain.
    EXPECT_EQ(rows[1].iqr_mse, 0.0);
    EXPECT_DOUBLE_EQ(rows[1].robustness.mean_abs_increase, 0.25);
}

TEST(Tradeoff, LocalModelsReportIqrOnly) {
    std::vector<EvalRecord> recs;
    for (std::size_t t = 0; t < 3; ++t) {
        recs.push_back(clean("g", t, 1.0 + double(t)));
        recs.push_back(perturbed("g", t, 3.0, 0.1));
        recs.push_back(clean("l", t, 2.0 + 0.5 * double(t), Mode::local));
    }
    const auto rows = tradeoff_indices(recs);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].ri.has_value());
    EXPECT_FALSE(rows[1].ri.has_value());
    EXPECT_DOUBLE_EQ(rows[1].iqr_mse, 0.5);
    EXPECT_FALSE(rows[0].cci.has_value());
}

TEST(Records, RoundTrip) {
    std::vector<EvalRecord> recs{clean("a", 0, 1.25), perturbed("a", 0, 2.5, 0.3)};
    recs[1].mode = Mode::local;
    EvalRecord failed = perturbed("b", 1, 0.0, 0.5);
    failed.ok = false;
    failed.mse = failed.mse_peak = std::numeric_limits<double>::quiet_NaN();
    failed.message = "degenerate distribution: iqr is zero";
    recs.push_back(failed);
    std::stringstream io;
    write_records(io, recs, "abc123");
    const std::string text = io.str();
    EXPECT_NE(text.find("\"config_hash\":\"abc123\""), std::string::npos);
    EXPECT_NE(text.find("\"feature\":null"), std::string::npos);
    EXPECT_NE(text.find("\"mse\":null"), std::string::npos);
    const auto back = read_records(io);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[0], recs[0]);
    EXPECT_EQ(back[1], recs[1]);
    EXPECT_FALSE(back[2].ok);
    EXPECT_TRUE(std::isnan(back[2].mse));
    EXPECT_EQ(back[2].message, failed.message);
    std::stringstream again;
    write_records(again, back, "abc123");
    EXPECT_EQ(again.str(), text);
}

struct SweepFixture : ::testing::Test {
    static void SetUpTestSuite() {
        SynthConfig sc;
        sc.length = 1600;
        sc.seed = 3;
        const auto f = generate(sc);
        train_ = new TimeSeriesFrame(f.rows(0, 1000));
        test_ = new TimeSeriesFrame(f.rows(1000, 1600));
    }
    static void TearDownTestSuite() {
        delete train_;
        delete test_;
    }

    static std::vector<ModelTrials> models(const ForecastTask& task) {
        const auto tw = build_windows(*train_, task);
        std::vector<ModelTrials> out(3);
        out[0].model_type = "persistence";
        out[1].model_type = "linear_direct";
        out[2].model_type = "linear_recursive";
        for (std::uint64_t s = 0; s < 2; ++s) {
            TrainConfig cfg;
            cfg.seed = s;
            cfg.ridge_lambda = 1e-3 * double(s + 1);
            out[0].trials.push_back(fit(Family::persistence, tw, {}, cfg));
            out[1].trials.push_back(fit(Family::linear_direct, tw, {}, cfg));
            out[2].trials.push_back(fit(Family::linear_recursive, tw, {}, cfg));
        }
        return out;
    }

    static inline TimeSeriesFrame* train_ = nullptr;
    static inline TimeSeriesFrame* test_ = nullptr;
};

TEST_F(SweepFixture, CountsOrderAndDeterminism) {
    const ForecastTask task{24, 6, Mode::global, 64};
    const auto ms = models(task);
    SweepConfig cfg;
    cfg.features = {"level", "rain"};
    cfg.kinds = default_error_kinds();
    cfg.rates = {0.1, 0.3};
    cfg.seed_base = 11;
    cfg.jobs = 1;
    const auto a = robustness_sweep(ms, *test_, task, cfg);
    cfg.jobs = 4;
    const auto b = robustness_sweep(ms, *test_, task, cfg);
    std::ostringstream sa, sb;
    write_records(sa, a);
    write_records(sb, b);
    EXPECT_EQ(sa.str(), sb.str());

    const std::size_t perturbed_count = 3 * 2 * 2 * 3 * 2;
    EXPECT_EQ(a.size(), perturbed_count + 3 * 2);
    EXPECT_EQ(std::count_if(a.begin(), a.end(), [](const EvalRecord& r) { return r.clean(); }), 6);
    // Model type -> trial -> feature -> kind -> rate, clean record first.
    EXPECT_TRUE(a[0].clean());
    EXPECT_EQ(a[0].model_type, "persistence");
    EXPECT_EQ(a[1].feature, "level");
    EXPECT_EQ(a[1].error_kind, "outlier");
    EXPECT_EQ(a[1].error_rate, 0.1);
    EXPECT_EQ(a[2].error_rate, 0.3);
    EXPECT_EQ(a[3].error_kind, "missing");
    EXPECT_EQ(a[7].feature, "rain");
    EXPECT_EQ(a[13].trial, 1u);
    EXPECT_TRUE(a[13].clean());
    EXPECT_EQ(a[26].model_type, "linear_direct");
    for (const auto& r : a) {
        EXPECT_TRUE(r.ok) << r.message;
        EXPECT_GE(r.mse, 0.0);
        EXPECT_LE(r.effective_rate, r.error_rate + 1e-12);
    }

    // Every model type sees the same corruption in a cell, so persistence
    // (which reads only the target) is unaffected by rain corruption.
    for (std::size_t i = 0; i < 26; ++i)
        if (a[i].feature == "rain") {
            EXPECT_EQ(a[i].mse, a[a[i].trial * 13].mse);
        }
    // A different seed base changes the corruption.
    cfg.seed_base = 12;
    const auto c = robustness_sweep(ms, *test_, task, cfg);
    EXPECT_NE(c[1].mse, a[1].mse);
}

TEST_F(SweepFixture, ZeroRateLeavesMseUnchanged) {
    const ForecastTask task{24, 6, Mode::global, 64};
    const auto ms = models(task);
    SweepConfig cfg;
    cfg.features = {"level", "rain", "pump_energy"};
    cfg.kinds = default_error_kinds();
    cfg.rates = {0.0};
    cfg.jobs = 2;
    const auto recs = robustness_sweep(ms, *test_, task, cfg);
    std::size_t clean_at = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].clean()) {
            clean_at = i;
            continue;
        }
        EXPECT_EQ(recs[i].mse, recs[clean_at].mse);
        EXPECT_EQ(recs[i].mse_peak, recs[clean_at].mse_peak);
        EXPECT_EQ(recs[i].effective_rate, 0.0);
    }
    for (const auto& [model, comp] : ri_components(recs)) EXPECT_EQ(comp.mean_abs_increase, 0.0) << model;
}

TEST_F(SweepFixture, LocalModelsIgnoreCovariateCorruption) {
    ForecastTask local{24, 6, Mode::local, 64};
    const auto tw = build_windows(*train_, local);
    std::vector<ModelTrials> ms(1);
    ms[0].model_type = "linear_direct@local";
    ms[0].trials = {fit(Family::linear_direct, tw, {}, TrainConfig{}), fit(Family::linear_direct, tw, {}, TrainConfig{})};
    SweepConfig cfg;
    cfg.features = {"rain", "aux_1"};
    cfg.kinds = {MissingError{}, OutlierError{}};
    cfg.rates = {0.5};
    const auto recs = robustness_sweep(ms, *test_, ForecastTask{24, 6, Mode::global, 64}, cfg);
    for (const auto& r : recs) {
        EXPECT_EQ(r.mode, Mode::local);
        EXPECT_EQ(r.mse, recs[r.trial * 5].mse);
    }
}

TEST_F(SweepFixture, FailedCellsAreRecordedNotThrown) {
    const ForecastTask task{24, 6, Mode::global, 64};
    auto ms = models(task);
    ms.resize(1);
    auto test = *test_;
    test = test.with_column(test.index_of("aux_1"), std::vector<double>(test.length(), 4.0));
    SweepConfig cfg;
    cfg.features = {"aux_1"};
    cfg.kinds = {OutlierError{}, MissingError{}};
    cfg.rates = {0.2};
    const auto recs = robustness_sweep(ms, test, task, cfg);
    ASSERT_EQ(recs.size(), 6u);
    EXPECT_FALSE(recs[1].ok);
    EXPECT_TRUE(std::isnan(recs[1].mse));
    EXPECT_NE(recs[1].message.find("degenerate distribution"), std::string::npos);
    EXPECT_TRUE(recs[2].ok);
    cfg.features = {"level__imputed"};
    EXPECT_THROW(robustness_sweep(ms, test.with_appended({"level__imputed", Role::imputation_indicator, {}, "level"},
                                                         std::vector<double>(test.length(), 0.0)),
                                  task, cfg),
                 Error);
}

}  // namespace
}  // namespace csoeval
