#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tscx/error.hpp"
#include "tscx/features.hpp"
#include "tscx/harness.hpp"
#include "tscx/synthetic.hpp"
#include "tscx/timeutil.hpp"

using namespace tscx;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::IoError;
}

// Small corpora shared across cases; built once.
const std::vector<AlignedSeries>& sep_corpus() {
  // one smooth crypto vs one rough stock, 60 days -> 60 daily samples/class
  static const auto data = synthetic_corpus(1, 1, synthetic_calendar(60), 0.99, 0.0, 7);
  return data;
}

const std::vector<AlignedSeries>& skew_corpus() {
  // 1 crypto vs 3 stocks -> 20 vs 60 daily samples
  static const auto data = synthetic_corpus(1, 3, synthetic_calendar(20), 0.99, 0.0, 11);
  return data;
}

const std::vector<AlignedSeries>& xchg_corpus() {
  // six exchangeable crypto assets, 25 days each
  static const auto data =
      synthetic_exchangeable(6, AssetClass::Crypto, synthetic_calendar(25), 0.9, 19);
  return data;
}

ExperimentConfig quick_mlp() {
  ExperimentConfig c;
  c.track = Track::Neural;
  c.model = "MLP";
  c.train.epochs = 30;
  c.train.batch_size = 16;
  c.train.learning_rate = 0.003f;
  c.repeats = 2;
  c.seed = 5;
  return c;
}

ExperimentConfig quick_rf() {
  ExperimentConfig c;
  c.track = Track::Classical;
  c.classifier = ClassifierKind::RF;
  c.features = FeatureSetting::NP;
  c.classical.n_trees = 50;
  c.repeats = 2;
  c.seed = 5;
  return c;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) out.push_back(line);
  return out;
}

struct TempPath {
  std::string path;
  explicit TempPath(const std::string& name) : path(name) {}
  ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("metrics: hand-checked confusion cases") {
  // TP=2 FP=1 FN=1 TN=6
  std::vector<int> labels = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  std::vector<int> pred = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
  MetricsReport r = metrics(pred, labels);
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 6);
  CHECK(r.accuracy == 0.8);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.repeat_accuracy.size() == 1);
  CHECK(r.accuracy_mean == r.accuracy);
  CHECK(r.accuracy_sd == 0.0);

  SUBCASE("all correct") {
    MetricsReport ok = metrics(labels, labels);
    CHECK(ok.accuracy == 1.0);
    CHECK(ok.f1 == 1.0);
    CHECK(ok.fp == 0);
    CHECK(ok.fn == 0);
  }
  SUBCASE("no positive predictions and no positive labels") {
    std::vector<int> zeros(4, 0);
    MetricsReport z = metrics(zeros, zeros);
    CHECK(z.accuracy == 1.0);
    CHECK(z.f1 == 0.0);  // P + R = 0 convention
    CHECK(z.tn == 4);
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { metrics({1, 0}, {1}); }) == Errc::LengthMismatch);
    CHECK(code_of([&] { metrics({}, {}); }) == Errc::LengthMismatch);
  }
}

TEST_CASE("config validation and manifest JSON") {
  ExperimentConfig c;
  CHECK_NOTHROW(validate(c));

  SUBCASE("contradictions") {
    ExperimentConfig bad = c;
    bad.repeats = 0;
    CHECK(code_of([&] { validate(bad); }) == Errc::InvalidConfig);
    bad = c;
    bad.granularity = Granularity::Weekly;
    bad.representation = Representation::Return;
    CHECK(code_of([&] { validate(bad); }) == Errc::InvalidConfig);
    bad = c;
    bad.channels = ChannelMode::AllFour;
    bad.representation = Representation::Return;
    CHECK(code_of([&] { validate(bad); }) == Errc::InvalidConfig);
    bad = c;
    bad.track = Track::Classical;
    bad.channels = ChannelMode::AllFour;
    CHECK(code_of([&] { validate(bad); }) == Errc::InvalidConfig);
    bad = c;
    bad.track = Track::Classical;
    bad.representation = Representation::Return;
    CHECK(code_of([&] { validate(bad); }) == Errc::InvalidConfig);
    bad = c;
    bad.model = "perceptron9000";
    CHECK_THROWS_AS(validate(bad), Error);
    bad = c;
    bad.arch = "FC(";
    CHECK_THROWS_AS(validate(bad), Error);
  }

  SUBCASE("manifest carries the resolved config") {
    auto j = nlohmann::json::parse(config_json(c));
    CHECK(j["granularity"] == "daily");
    CHECK(j["channels"] == "close");
    CHECK(j["balance"] == "balanced");
    CHECK(j["representation"] == "price");
    CHECK(j["track"] == "neural");
    CHECK(j["model"] == "CNN");
    CHECK(j["arch"] == "CONV(32)-CONV(64)-CONV(64)-CONV(128)-FC(1)");
    CHECK(j["train"]["learning_rate"] == 0.001);
    CHECK(j["train"]["loss"] == "bce");
    CHECK(j["repeats"] == 5);

    ExperimentConfig cl = quick_rf();
    auto jc = nlohmann::json::parse(config_json(cl));
    CHECK(jc["classifier"] == "RF");
    CHECK(jc["features"] == "NP");
    CHECK(jc["classical"]["n_trees"] == 50);
    CHECK(jc.find("model") == jc.end());  // track-specific sections only
  }

  SUBCASE("config json round trip") {
    ExperimentConfig c2;
    c2.granularity = Granularity::Weekly;
    c2.channels = ChannelMode::AllFour;
    c2.balance = Balance::Unbalanced;
    c2.model = "GRU";
    c2.width_divisor = 2;
    c2.repeats = 3;
    c2.seed = 99;
    c2.train.epochs = 7;
    c2.train.loss = Loss::Focal;
    ExperimentConfig back = config_from_json(config_json(c2));
    CHECK(config_json(back) == config_json(c2));
    // a full manifest unwraps to its config
    std::string manifest = "{\"command\":\"experiment\",\"config\":" + config_json(c2) + "}";
    CHECK(config_json(config_from_json(manifest)) == config_json(c2));
    // typos and type errors surface
    CHECK(code_of([&] { config_from_json("{\"granularty\":\"daily\"}"); }) ==
          Errc::InvalidConfig);
    CHECK(code_of([&] { config_from_json("not json"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { config_from_json("{\"repeats\":\"five\"}"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { config_from_json("{\"train\":{\"turbo\":1}}"); }) == Errc::InvalidConfig);
  }

  SUBCASE("string round trips") {
    CHECK(balance_from(to_string(Balance::Unbalanced)) == Balance::Unbalanced);
    CHECK(representation_from(to_string(Representation::Return)) == Representation::Return);
    CHECK(track_from(to_string(Track::Classical)) == Track::Classical);
    CHECK(code_of([&] { balance_from("tilted"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { representation_from("level"); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { track_from("quantum"); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("synthetic: calendar, alignment, and class texture") {
  TradingCalendar cal = synthetic_calendar(10);
  CHECK(cal.trading_days.size() == 10);
  CHECK(cal.timezone == "UTC");
  CHECK(cal.trading_days.front() == days_from_civil({2023, 6, 5}));  // Monday
  for (int32_t d : cal.trading_days) CHECK_FALSE(is_weekend(d));
  // consecutive weekdays: 10 days = exactly two Mon..Fri runs
  CHECK(cal.trading_days.back() == days_from_civil({2023, 6, 16}));

  AlignedSeries smooth = synthetic_asset("C0", AssetClass::Crypto, cal, 0.99, 3);
  AlignedSeries rough = synthetic_asset("S0", AssetClass::Stock, cal, 0.0, 4);
  CHECK(smooth.rows() == 10 * 391);
  CHECK(smooth.days == 10);
  CHECK(smooth.day_dates.size() == 10);
  CHECK(smooth.asset_class == AssetClass::Crypto);
  for (float v : smooth.values) CHECK(v > 0.0f);

  // weekly segmentation sees both full weeks
  auto weeks = segment(smooth, Granularity::Weekly, ChannelMode::CloseOnly);
  CHECK(weeks.size() == 2);
  CHECK(weeks[0].length == 5 * 391);

  // texture: the phi=0.99 class has visibly fewer local peaks per day
  auto daily_s = segment(smooth, Granularity::Daily, ChannelMode::CloseOnly);
  auto daily_r = segment(rough, Granularity::Daily, ChannelMode::CloseOnly);
  double peaks_s = 0, peaks_r = 0;
  for (const auto& s : daily_s) peaks_s += count_peaks(s.values).first;
  for (const auto& s : daily_r) peaks_r += count_peaks(s.values).first;
  peaks_s /= daily_s.size();
  peaks_r /= daily_r.size();
  CHECK(peaks_s < peaks_r - 10.0);

  // matched marginal variance: sd of log(p/100)/scale near 1 for both
  auto marginal_sd = [](const AlignedSeries& a) {
    double sum = 0, sum2 = 0;
    size_t n = a.days * 391ull;
    for (size_t i = 0; i < n; ++i) {
      double x = std::log(a.values[i * 4 + 3] / 100.0) / 0.05;
      sum += x;
      sum2 += x * x;
    }
    double mean = sum / n;
    return std::sqrt(sum2 / n - mean * mean);
  };
  CHECK(marginal_sd(rough) == doctest::Approx(1.0).epsilon(0.1));
  CHECK(marginal_sd(smooth) == doctest::Approx(1.0).epsilon(0.5));  // slow mixing, wide CI

  SUBCASE("corpus ids and classes") {
    auto corpus = synthetic_corpus(2, 3, cal, 0.9, 0.3, 1);
    REQUIRE(corpus.size() == 5);
    CHECK(corpus[0].asset_id == "C0");
    CHECK(corpus[1].asset_id == "C1");
    CHECK(corpus[4].asset_id == "S2");
    CHECK(corpus[0].asset_class == AssetClass::Crypto);
    CHECK(corpus[2].asset_class == AssetClass::Stock);
    auto xc = synthetic_exchangeable(4, AssetClass::Crypto, cal, 0.9, 2);
    REQUIRE(xc.size() == 4);
    for (const auto& a : xc) CHECK(a.asset_class == AssetClass::Crypto);
    CHECK(xc[3].asset_id == "C3");
  }
  SUBCASE("bad parameters") {
    CHECK(code_of([&] { synthetic_calendar(0); }) == Errc::InvalidConfig);
    CHECK(code_of([&] { synthetic_asset("A", AssetClass::Stock, cal, 1.0, 1); }) ==
          Errc::InvalidConfig);
    CHECK(code_of([&] { synthetic_corpus(0, 1, cal, 0.9, 0.3, 1); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("run_experiment: separable classes, records, determinism") {
  RunRecords rec;
  ExperimentConfig c;
  c.model = "CNN";
  c.width_divisor = 4;
  c.train.epochs = 10;
  c.train.batch_size = 16;
  c.train.learning_rate = 0.003f;
  c.repeats = 2;
  c.seed = 5;
  MetricsReport rep = run_experiment(c, sep_corpus(), &rec);

  CHECK(rep.repeat_accuracy.size() == 2);
  CHECK(rep.repeat_f1.size() == 2);
  MESSAGE("cnn separable accuracy mean " << rep.accuracy_mean);
  CHECK(rep.accuracy_mean >= 0.95);
  CHECK(rep.tp + rep.fp + rep.tn + rep.fn == 2 * 24);  // 24 test samples per repeat

  // one JSONL record per repeat plus a summary
  REQUIRE(rec.lines.size() == 3);
  auto first = nlohmann::json::parse(rec.lines[0]);
  CHECK(first["record"] == "repeat");
  CHECK(first["repeat"] == 0);
  CHECK(first["seed"] == 5);
  CHECK(first["accuracy"].is_number());
  auto last = nlohmann::json::parse(rec.lines.back());
  CHECK(last["record"] == "summary");
  CHECK(last["config"]["model"] == "CNN");
  CHECK(last["repeats"] == 2);

  // records round-trip through a JSONL file
  TempPath tmp("harness_records.jsonl");
  rec.save(tmp.path);
  auto lines = read_lines(tmp.path);
  REQUIRE(lines.size() == rec.lines.size());
  CHECK(lines[0] == rec.lines[0]);

  SUBCASE("bit-identical re-run") {
    RunRecords rec2;
    MetricsReport rep2 = run_experiment(c, sep_corpus(), &rec2);
    CHECK(rep2.accuracy == rep.accuracy);
    CHECK(rep2.f1 == rep.f1);
    REQUIRE(rec2.lines.size() == rec.lines.size());
    for (size_t i = 0; i < rec.lines.size(); ++i) CHECK(rec2.lines[i] == rec.lines[i]);
  }
}

TEST_CASE("run_experiment: classical track and repeat counts") {
  ExperimentConfig c = quick_rf();
  c.repeats = 3;
  MetricsReport rep = run_experiment(c, sep_corpus());
  CHECK(rep.repeat_accuracy.size() == 3);
  MESSAGE("rf separable accuracy mean " << rep.accuracy_mean);
  CHECK(rep.accuracy_mean >= 0.9);
}

TEST_CASE("run_experiment: balanced split property and unbalanced reporting") {
  // 20 crypto vs 60 stock daily samples
  SUBCASE("balanced config equalizes the test set") {
    ExperimentConfig c = quick_rf();
    c.balance = Balance::Balanced;
    MetricsReport rep = run_experiment(c, skew_corpus());
    long long pos = rep.tp + rep.fn, neg = rep.fp + rep.tn;
    CHECK(std::llabs(pos - neg) <= 1 * c.repeats);  // +-1 per repeat
    CHECK(pos + neg == 2 * 8);  // 40 balanced samples -> 4+4 test rows per repeat
  }
  SUBCASE("unbalanced config keeps the skew and still reports f1") {
    ExperimentConfig c = quick_rf();
    c.balance = Balance::Unbalanced;
    MetricsReport rep = run_experiment(c, skew_corpus());
    long long pos = rep.tp + rep.fn, neg = rep.fp + rep.tn;
    CHECK(neg == 3 * pos);  // 4 vs 12 test rows per repeat
    CHECK(rep.f1 >= 0.0);
    CHECK(rep.f1 <= 1.0);
    CHECK(rep.f1_mean >= 0.0);
  }
}

TEST_CASE("run_experiment: return representation and error paths") {
  SUBCASE("returns run end to end on daily close") {
    ExperimentConfig c = quick_rf();
    c.track = Track::Neural;
    c.model = "MLP";
    c.representation = Representation::Return;
    c.train.epochs = 2;
    c.repeats = 1;
    MetricsReport rep = run_experiment(c, sep_corpus());
    CHECK(rep.accuracy >= 0.0);
    CHECK(rep.accuracy <= 1.0);
  }
  SUBCASE("single-class corpus is rejected") {
    ExperimentConfig c = quick_rf();
    CHECK(code_of([&] { run_experiment(c, xchg_corpus()); }) == Errc::InvalidConfig);
  }
  SUBCASE("empty corpus is rejected") {
    ExperimentConfig c = quick_rf();
    CHECK(code_of([&] { run_experiment(c, {}); }) == Errc::TooFewSamples);
  }
}

TEST_CASE("run_control: chance level, pseudo-label audit, errors") {
  ExperimentConfig c = quick_rf();
  c.repeats = 5;
  c.seed = 3;
  RunRecords rec;
  MetricsReport rep = run_control(AssetClass::Crypto, c, xchg_corpus(), &rec);

  MESSAGE("control accuracy mean " << rep.accuracy_mean << " train " << rep.train_accuracy_mean);
  CHECK(rep.accuracy_mean > 0.3);
  CHECK(rep.accuracy_mean < 0.7);
  CHECK(rep.repeat_accuracy.size() == 5);
  CHECK(rep.repeat_train_accuracy.size() == 5);
  CHECK(rep.train_accuracy_mean > 0.0);  // train accuracy recorded alongside test

  // audit trail: every repeat lists each asset exactly once, half per label
  REQUIRE(rec.lines.size() == 6);
  for (size_t i = 0; i + 1 < rec.lines.size(); ++i) {
    auto j = nlohmann::json::parse(rec.lines[i]);
    REQUIRE(j.contains("pseudo_labels"));
    auto labels = j["pseudo_labels"];
    CHECK(labels.size() == 6);
    int ones = 0;
    for (auto it = labels.begin(); it != labels.end(); ++it) {
      int v = it.value();
      CHECK((v == 0 || v == 1));
      ones += v;
    }
    CHECK(ones == 3);  // even split of 6 assets
    CHECK(j["train_accuracy"].is_number());
  }
  auto last = nlohmann::json::parse(rec.lines.back());
  CHECK(last["record"] == "summary");
  CHECK(last["train_accuracy_mean"].is_number());

  SUBCASE("class filter and TooFewAssets") {
    // xchg_corpus is all crypto: no stock assets to control on
    CHECK(code_of([&] { run_control(AssetClass::Stock, c, xchg_corpus()); }) ==
          Errc::TooFewAssets);
    std::vector<AlignedSeries> three(xchg_corpus().begin(), xchg_corpus().begin() + 3);
    CHECK(code_of([&] { run_control(AssetClass::Crypto, c, three); }) == Errc::TooFewAssets);
  }

  SUBCASE("neural control runs and stays away from the extremes") {
    ExperimentConfig n = quick_mlp();
    n.train.epochs = 3;
    n.repeats = 2;
    MetricsReport nr = run_control(AssetClass::Crypto, n, xchg_corpus());
    MESSAGE("neural control accuracy mean " << nr.accuracy_mean);
    CHECK(nr.accuracy_mean > 0.2);
    CHECK(nr.accuracy_mean < 0.8);
    CHECK(nr.repeat_train_accuracy.size() == 2);
  }
}

TEST_CASE("run_robustness: fixed split, variant forms, determinism") {
  ExperimentConfig c = quick_mlp();
  c.train.epochs = 4;
  std::vector<std::string> variants = {"32-32-64", "32-32-64", "FC(8)-FC(8)-FC(1)"};
  std::vector<RobustnessRow> rows = run_robustness(c, variants, sep_corpus());

  REQUIRE(rows.size() == 4);
  CHECK(rows[0].variant == "baseline");
  CHECK(rows[0].arch == "FC(32)-FC(64)-FC(64)-FC(128)-FC(1)");
  CHECK(rows[1].arch == "FC(32)-FC(32)-FC(64)-FC(1)");  // width list expanded per family
  CHECK(rows[3].arch == "FC(8)-FC(8)-FC(1)");           // arch strings pass through

  // identical variants under the one fixed split give identical metrics
  CHECK(rows[1].report.accuracy == rows[2].report.accuracy);
  CHECK(rows[1].report.f1 == rows[2].report.f1);
  CHECK(rows[1].report.tp == rows[2].report.tp);
  CHECK(rows[1].report.fn == rows[2].report.fn);

  for (const auto& r : rows) {
    MESSAGE(r.variant << " -> " << r.report.accuracy);
    CHECK(r.report.accuracy >= 0.0);
    CHECK(r.report.accuracy <= 1.0);
  }

  SUBCASE("variant parse errors surface before training") {
    CHECK(code_of([&] { run_robustness(c, {"32-x-64"}, sep_corpus()); }) == Errc::SyntaxError);
    CHECK(code_of([&] { run_robustness(c, {"32-"}, sep_corpus()); }) == Errc::SyntaxError);
    ExperimentConfig cl = quick_rf();
    CHECK(code_of([&] { run_robustness(cl, {"32-64"}, sep_corpus()); }) == Errc::InvalidConfig);
  }
}

TEST_CASE("export_cdf: ordinates, ordering, errors") {
  TempPath tmp("harness_cdf.csv");
  std::map<std::string, std::vector<double>> per_class;
  per_class["crypto"] = {3.0, 1.0, 2.0};  // unsorted on purpose
  per_class["stock"] = {5.0, 4.0};
  export_cdf(tmp.path, "mean", per_class);

  auto lines = read_lines(tmp.path);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "# feature: mean");
  CHECK(lines[1] == "class,value,cdf");

  struct Row {
    std::string cls;
    double value, cdf;
  };
  std::vector<Row> rows;
  for (size_t i = 2; i < lines.size(); ++i) {
    std::istringstream ss(lines[i]);
    Row r;
    std::string v, c;
    std::getline(ss, r.cls, ',');
    std::getline(ss, v, ',');
    std::getline(ss, c, ',');
    r.value = std::stod(v);
    r.cdf = std::stod(c);
    rows.push_back(r);
  }
  // crypto first (name order), values ascending, ordinates k/n
  CHECK(rows[0].cls == "crypto");
  CHECK(rows[0].value == 1.0);
  CHECK(rows[0].cdf == doctest::Approx(1.0 / 3.0));
  CHECK(rows[1].value == 2.0);
  CHECK(rows[1].cdf == doctest::Approx(2.0 / 3.0));
  CHECK(rows[2].value == 3.0);
  CHECK(rows[2].cdf == doctest::Approx(1.0));
  CHECK(rows[3].cls == "stock");
  CHECK(rows[3].value == 4.0);
  CHECK(rows[3].cdf == doctest::Approx(0.5));
  CHECK(rows[4].cdf == doctest::Approx(1.0));
  // monotone within each class
  for (size_t i = 1; i < rows.size(); ++i)
    if (rows[i].cls == rows[i - 1].cls) {
      CHECK(rows[i].value >= rows[i - 1].value);
      CHECK(rows[i].cdf >= rows[i - 1].cdf);
    }

  SUBCASE("empty classes rejected") {
    CHECK(code_of([&] { export_cdf(tmp.path, "mean", {}); }) == Errc::EmptyClass);
    std::map<std::string, std::vector<double>> has_empty;
    has_empty["crypto"] = {};
    CHECK(code_of([&] { export_cdf(tmp.path, "mean", has_empty); }) == Errc::EmptyClass);
  }
}
