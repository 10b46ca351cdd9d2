#include "tscx/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "tscx/classical.hpp"
#include "tscx/dataset.hpp"
#include "tscx/error.hpp"
#include "tscx/features.hpp"
#include "tscx/harness.hpp"
#include "tscx/ingest.hpp"
#include "tscx/klines.hpp"
#include "tscx/synthetic.hpp"
#include "tscx/timeutil.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace tscx {
namespace {

constexpr const char* kVersion = "0.1.0";

// ---- small file helpers -----------------------------------------------------

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) fail(Errc::IoError, "cannot create directory " + path + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  f << content;
  if (!f) fail(Errc::IoError, "short write to " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out.empty() ? std::string("asset") : out;
}

// ---- aligned-series storage -------------------------------------------------
// Aligned output is plain bar CSV; re-ingesting it through the same calendar
// reproduces the series exactly (every slot is present, so fills are no-ops).

void save_aligned_csv(const AlignedSeries& a, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  f << "timestamp,open,high,low,close\n";
  char buf[160];
  for (size_t i = 0; i < a.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g,%.9g\n", a.values[i * 4 + 0],
                  a.values[i * 4 + 1], a.values[i * 4 + 2], a.values[i * 4 + 3]);
    f << format_iso_minutes(a.ts[i]) << buf;
  }
  if (!f) fail(Errc::IoError, "short write to " + path);
}

std::vector<AlignedSeries> load_assets_tsv(const std::string& tsv_path,
                                           const TradingCalendar& cal) {
  std::ifstream f(tsv_path);
  if (!f) fail(Errc::IoError, "cannot read " + tsv_path);
  fs::path base = fs::path(tsv_path).parent_path();
  std::vector<AlignedSeries> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string id, cls, file;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, cls, '\t') ||
        !std::getline(ss, file, '\t'))
      fail(Errc::MalformedHeader, tsv_path + ": need id<TAB>class<TAB>csv per line");
    fs::path p = fs::path(file).is_absolute() ? fs::path(file) : base / file;
    OhlcvSeries raw = load_csv(p.string(), id, asset_class_from(cls));
    out.push_back(fill_missing(session_filter(raw, cal)));
  }
  if (out.empty()) fail(Errc::EmptyFile, tsv_path + ": no assets listed");
  return out;
}

// ---- shared option bundles --------------------------------------------------

struct GlobalOpts {
  std::string out_dir = "tscx-out";
  uint64_t seed = 0;
  std::string config_path;
};

struct DataOpts {
  bool synthetic = false;
  int days = 60;
  int n_crypto = 3;
  int n_stock = 7;
  double phi_crypto = 0.99;
  double phi_stock = 0.6;
  uint64_t data_seed = 7;
  std::string assets;
  std::string calendar;
};

void add_data_flags(CLI::App* sub, DataOpts& d) {
  sub->add_flag("--synthetic", d.synthetic, "use the built-in synthetic corpus");
  sub->add_option("--days", d.days, "synthetic: trading days per asset")->capture_default_str();
  sub->add_option("--crypto", d.n_crypto, "synthetic: crypto asset count")->capture_default_str();
  sub->add_option("--stocks", d.n_stock, "synthetic: stock asset count")->capture_default_str();
  sub->add_option("--phi-crypto", d.phi_crypto, "synthetic: crypto AR(1) coefficient")
      ->capture_default_str();
  sub->add_option("--phi-stock", d.phi_stock, "synthetic: stock AR(1) coefficient")
      ->capture_default_str();
  sub->add_option("--data-seed", d.data_seed, "synthetic: corpus seed")->capture_default_str();
  sub->add_option("--assets", d.assets, "assets.tsv written by `tscx ingest`");
  sub->add_option("--calendar", d.calendar, "calendar file for --assets");
}

void data_opts_from_json(const ordered_json& j, DataOpts* d) {
  if (j.value("source", "") == "assets") {
    d->assets = j.value("assets", "");
    d->calendar = j.value("calendar", "");
    return;
  }
  d->synthetic = true;
  d->days = j.value("days", d->days);
  d->n_crypto = j.value("crypto", d->n_crypto);
  d->n_stock = j.value("stocks", d->n_stock);
  d->phi_crypto = j.value("phi_crypto", d->phi_crypto);
  d->phi_stock = j.value("phi_stock", d->phi_stock);
  d->data_seed = j.value("data_seed", d->data_seed);
}

enum class CorpusKind { TwoClass, SingleClass };

// Resolves the input corpus: explicit flags win, then a "data" section from
// a manifest given via --config, then the synthetic default.
std::pair<std::vector<AlignedSeries>, ordered_json> resolve_corpus(
    CLI::App* sub, DataOpts d, const ordered_json* manifest_data, CorpusKind kind,
    AssetClass cls = AssetClass::Crypto) {
  bool explicit_flags = sub->count("--synthetic") > 0 || sub->count("--assets") > 0 ||
                        sub->count("--days") > 0 || sub->count("--crypto") > 0 ||
                        sub->count("--stocks") > 0;
  if (!explicit_flags && manifest_data && manifest_data->is_object())
    data_opts_from_json(*manifest_data, &d);

  if (!d.assets.empty()) {
    if (d.calendar.empty()) fail(Errc::InvalidConfig, "--assets needs --calendar");
    TradingCalendar cal = load_calendar(d.calendar);
    ordered_json desc;
    desc["source"] = "assets";
    desc["assets"] = d.assets;
    desc["calendar"] = d.calendar;
    return {load_assets_tsv(d.assets, cal), desc};
  }

  TradingCalendar cal = synthetic_calendar(d.days);
  ordered_json desc;
  desc["source"] = "synthetic";
  desc["days"] = d.days;
  desc["crypto"] = d.n_crypto;
  desc["stocks"] = d.n_stock;
  desc["phi_crypto"] = d.phi_crypto;
  desc["phi_stock"] = d.phi_stock;
  desc["data_seed"] = d.data_seed;
  if (kind == CorpusKind::SingleClass) {
    int n = cls == AssetClass::Crypto ? d.n_crypto : d.n_stock;
    double phi = cls == AssetClass::Crypto ? d.phi_crypto : d.phi_stock;
    desc["exchangeable_class"] = to_string(cls);
    return {synthetic_exchangeable(n, cls, cal, phi, d.data_seed), desc};
  }
  return {synthetic_corpus(d.n_crypto, d.n_stock, cal, d.phi_crypto, d.phi_stock, d.data_seed),
          desc};
}

// ---- experiment-config flags -------------------------------------------------

struct CfgFlags {
  std::string granularity, channels, balance, representation, track, model, arch;
  std::string classifier, features, loss;
  int width_divisor = 1, repeats = 5, epochs = 500, batch_size = 128, patience = 0;
  int n_trees = 100, k = 5, gb_rounds = 200;
  double learning_rate = 0.001, dropout = 0.2, focal_alpha = 0.25, focal_gamma = 2.0, l2 = 1e-3;
};

void add_config_flags(CLI::App* sub, CfgFlags& f) {
  sub->add_option("--granularity", f.granularity, "daily|weekly");
  sub->add_option("--channels", f.channels, "close|ohlc");
  sub->add_option("--balance", f.balance, "balanced|unbalanced");
  sub->add_option("--representation", f.representation, "price|return");
  sub->add_option("--track", f.track, "neural|classical");
  sub->add_option("--model", f.model, "neural model name (MLP, CNN, ResNet, ...)");
  sub->add_option("--arch", f.arch, "architecture override string");
  sub->add_option("--width-divisor", f.width_divisor, "scale hidden widths down");
  sub->add_option("--classifier", f.classifier, "classical kind (LR, RF, SVM, KNN, GB)");
  sub->add_option("--features", f.features, "feature setting (P, R, NP, NR, P+R, NP+NR)");
  sub->add_option("--repeats", f.repeats, "independent repeats");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--batch-size", f.batch_size, "mini-batch size");
  sub->add_option("--learning-rate,--lr", f.learning_rate, "Adam learning rate");
  sub->add_option("--loss", f.loss, "bce|mse|focal");
  sub->add_option("--dropout", f.dropout, "dropout rate");
  sub->add_option("--focal-alpha", f.focal_alpha, "focal loss alpha");
  sub->add_option("--focal-gamma", f.focal_gamma, "focal loss gamma");
  sub->add_option("--patience", f.patience, "early-stop patience (0 = off)");
  sub->add_option("--n-trees", f.n_trees, "random forest size");
  sub->add_option("--k", f.k, "KNN neighbor count");
  sub->add_option("--gb-rounds", f.gb_rounds, "gradient boosting rounds");
  sub->add_option("--l2", f.l2, "LR/SVM weight decay");
}

ExperimentConfig build_config(CLI::App* sub, const CLI::App& app, const CfgFlags& f,
                              const std::string& config_text, uint64_t seed) {
  ExperimentConfig c =
      config_text.empty() ? ExperimentConfig{} : config_from_json(config_text);
  if (sub->count("--granularity")) c.granularity = granularity_from(f.granularity);
  if (sub->count("--channels")) c.channels = channel_mode_from(f.channels);
  if (sub->count("--balance")) c.balance = balance_from(f.balance);
  if (sub->count("--representation")) c.representation = representation_from(f.representation);
  if (sub->count("--track")) c.track = track_from(f.track);
  if (sub->count("--model")) c.model = f.model;
  if (sub->count("--arch")) c.arch = f.arch;
  if (sub->count("--width-divisor")) c.width_divisor = f.width_divisor;
  if (sub->count("--classifier")) c.classifier = classifier_from(f.classifier);
  if (sub->count("--features")) c.features = feature_setting_from(f.features);
  if (sub->count("--repeats")) c.repeats = f.repeats;
  if (sub->count("--epochs")) c.train.epochs = f.epochs;
  if (sub->count("--batch-size")) c.train.batch_size = f.batch_size;
  if (sub->count("--learning-rate")) c.train.learning_rate = static_cast<float>(f.learning_rate);
  if (sub->count("--loss")) c.train.loss = loss_from(f.loss);
  if (sub->count("--dropout")) c.train.dropout = static_cast<float>(f.dropout);
  if (sub->count("--focal-alpha")) c.train.focal_alpha = static_cast<float>(f.focal_alpha);
  if (sub->count("--focal-gamma")) c.train.focal_gamma = static_cast<float>(f.focal_gamma);
  if (sub->count("--patience")) c.train.patience = f.patience;
  if (sub->count("--n-trees")) c.classical.n_trees = f.n_trees;
  if (sub->count("--k")) c.classical.k = f.k;
  if (sub->count("--gb-rounds")) c.classical.gb_rounds = f.gb_rounds;
  if (sub->count("--l2")) c.classical.l2 = f.l2;
  if (app.count("--seed")) c.seed = seed;
  validate(c);
  return c;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const ordered_json& config, const ordered_json& data, uint64_t seed) {
  ordered_json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  if (!data.is_null()) m["data"] = data;
  m["config"] = config;
  write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
}

void print_report_line(std::ostream& out, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "accuracy %.4f +- %.4f  f1 %.4f +- %.4f  (tp %lld fp %lld tn %lld fn %lld)",
                r.accuracy_mean, r.accuracy_sd, r.f1_mean, r.f1_sd, r.tp, r.fp, r.tn, r.fn);
  out << buf << "\n";
}

// ---- subcommand handlers ----------------------------------------------------

struct IngestOpts {
  std::vector<std::string> series;  // ID:CLASS:PATH
  std::string calendar_path;        // empty = bundled NYSE 2023-2024
  std::string klines_url;
  std::vector<std::string> klines_symbols;  // SYMBOL or SYMBOL:CLASS
  std::string start, end;                   // ISO instants for kline fetches
};

void do_ingest(const GlobalOpts& g, const IngestOpts& o, std::ostream& out) {
  if (o.series.empty() && o.klines_symbols.empty())
    fail(Errc::InvalidConfig, "ingest: give --series and/or --klines-symbols");
  if (!o.klines_symbols.empty() && o.klines_url.empty())
    fail(Errc::InvalidConfig, "ingest: --klines-symbols needs --klines-url");

  TradingCalendar cal =
      o.calendar_path.empty() ? nyse_calendar_2023_2024() : load_calendar(o.calendar_path);
  ensure_dir(g.out_dir);

  std::vector<OhlcvSeries> raw;
  for (const std::string& spec : o.series) {
    size_t a = spec.find(':');
    size_t b = a == std::string::npos ? a : spec.find(':', a + 1);
    if (b == std::string::npos)
      fail(Errc::InvalidConfig, "ingest: --series wants ID:CLASS:PATH, got '" + spec + "'");
    std::string id = spec.substr(0, a);
    AssetClass cls = asset_class_from(spec.substr(a + 1, b - a - 1));
    raw.push_back(load_csv(spec.substr(b + 1), id, cls));
  }
  if (!o.klines_symbols.empty()) {
    int64_t start_min = 0, end_min = 0;
    if (!parse_iso_minutes(o.start, &start_min) || !parse_iso_minutes(o.end, &end_min))
      fail(Errc::InvalidConfig, "ingest: kline fetches need ISO --start and --end");
    for (const std::string& spec : o.klines_symbols) {
      size_t a = spec.find(':');
      std::string sym = spec.substr(0, a);
      AssetClass cls =
          a == std::string::npos ? AssetClass::Crypto : asset_class_from(spec.substr(a + 1));
      raw.push_back(fetch_klines(o.klines_url, sym, "1m", start_min * 60000, end_min * 60000,
                                 cls));
    }
  }

  std::ostringstream tsv;
  tsv << "# asset_id\tclass\tcsv\n";
  ordered_json assets = ordered_json::array();
  for (const OhlcvSeries& series : raw) {
    AlignedSeries aligned = fill_missing(session_filter(series, cal));
    std::string file = "aligned_" + sanitize(series.asset_id) + ".csv";
    save_aligned_csv(aligned, g.out_dir + "/" + file);
    tsv << series.asset_id << '\t' << to_string(series.asset_class) << '\t' << file << '\n';
    ordered_json a;
    a["asset_id"] = series.asset_id;
    a["class"] = to_string(series.asset_class);
    a["file"] = file;
    a["days"] = aligned.days;
    a["rows"] = aligned.rows();
    assets.push_back(a);
    out << series.asset_id << ": " << aligned.days << " days, " << aligned.rows() << " rows -> "
        << file << "\n";
  }
  write_text(g.out_dir + "/assets.tsv", tsv.str());
  save_calendar(cal, g.out_dir + "/calendar.txt");

  ordered_json cfg;
  cfg["calendar"] = o.calendar_path.empty() ? "bundled-nyse-2023-2024" : o.calendar_path;
  cfg["assets"] = assets;
  write_manifest(g.out_dir, "ingest", cfg, ordered_json(), g.seed);
  out << "wrote " << g.out_dir << "/assets.tsv and calendar.txt\n";
}

struct DatasetOpts {
  std::string granularity = "daily";
  std::string channels = "close";
  std::string balance = "balanced";
  double test_frac = 0.2, val_frac = 0.2;
};

void do_dataset(const GlobalOpts& g, CLI::App* sub, const DataOpts& d, const DatasetOpts& o,
                std::ostream& out) {
  auto [corpus, desc] = resolve_corpus(sub, d, nullptr, CorpusKind::TwoClass);
  Granularity gran = granularity_from(o.granularity);
  ChannelMode mode = channel_mode_from(o.channels);
  std::vector<Sample> pool;
  for (const auto& series : corpus) {
    auto cut = segment(series, gran, mode);
    pool.insert(pool.end(), cut.begin(), cut.end());
  }
  if (balance_from(o.balance) == Balance::Balanced) {
    Dataset unbal;
    unbal.samples = std::move(pool);
    pool = balance(unbal, g.seed).samples;
  }
  Dataset ds = stratified_split(std::move(pool), g.seed, o.test_frac, o.val_frac);

  ensure_dir(g.out_dir);
  save_dataset(ds, g.out_dir + "/dataset");

  int by_label[2] = {0, 0}, by_split[3] = {0, 0, 0};
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    by_label[ds.samples[i].label == 1 ? 1 : 0]++;
    by_split[static_cast<int>(ds.split_assignment[i])]++;
  }
  ordered_json cfg;
  cfg["granularity"] = o.granularity;
  cfg["channels"] = o.channels;
  cfg["balance"] = o.balance;
  cfg["test_frac"] = o.test_frac;
  cfg["val_frac"] = o.val_frac;
  cfg["samples"] = ds.samples.size();
  cfg["stock"] = by_label[0];
  cfg["crypto"] = by_label[1];
  cfg["train"] = by_split[0];
  cfg["val"] = by_split[1];
  cfg["test"] = by_split[2];
  write_manifest(g.out_dir, "dataset", cfg, desc, g.seed);
  out << ds.samples.size() << " samples (" << by_label[1] << " crypto / " << by_label[0]
      << " stock), split " << by_split[0] << "/" << by_split[1] << "/" << by_split[2] << " -> "
      << g.out_dir << "/dataset.manifest\n";
}

struct TrainOpts {
  std::string dataset;
  std::string representation = "price";
};

void do_train(const GlobalOpts& g, CLI::App* sub, const CLI::App& app, const CfgFlags& f,
              const TrainOpts& o, std::ostream& out) {
  ExperimentConfig cfg = build_config(sub, app, f, "", g.seed);
  if (sub->count("--representation")) cfg.representation = representation_from(o.representation);
  if (cfg.track != Track::Neural)
    fail(Errc::InvalidConfig, "train: neural models only; use `experiment --track classical`");

  Dataset ds = load_dataset(o.dataset);
  if (ds.split_assignment.size() != ds.samples.size())
    fail(Errc::InvalidConfig, "train: dataset has no split; rebuild it with `tscx dataset`");

  std::vector<Sample> tr, va, te;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    Sample s = ds.samples[i];
    if (cfg.representation == Representation::Return) s = to_returns(s);
    s = normalize(s);
    switch (ds.split_assignment[i]) {
      case Split::Train: tr.push_back(std::move(s)); break;
      case Split::Val: va.push_back(std::move(s)); break;
      case Split::Test: te.push_back(std::move(s)); break;
    }
  }
  LabeledSet train = pack_samples(tr), val = pack_samples(va), test = pack_samples(te);

  ModelName name = model_name_from(cfg.model);
  BuildOptions bopt;
  bopt.arch = cfg.arch;
  bopt.width_divisor = cfg.width_divisor;
  Model model = build_model(name, train.len, train.ch, cfg.seed, bopt);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  ensure_dir(g.out_dir);
  ensure_dir(g.out_dir + "/history");
  ensure_dir(g.out_dir + "/checkpoints");
  History hist = fit(model, train, val, tc);
  hist.save_csv(g.out_dir + "/history/train_history.csv");
  model.save(g.out_dir + "/checkpoints/model.json");

  std::vector<int> pred = predict_labels(model, test, tc.batch_size);
  std::vector<int> labels(test.n);
  for (int i = 0; i < test.n; ++i) labels[i] = test.y[i] >= 0.5f ? 1 : 0;
  MetricsReport rep = metrics(pred, labels);

  RunRecords rec;
  ordered_json j;
  j["record"] = "repeat";
  j["repeat"] = 0;
  j["seed"] = cfg.seed;
  j["accuracy"] = rep.accuracy;
  j["f1"] = rep.f1;
  j["tp"] = rep.tp;
  j["fp"] = rep.fp;
  j["tn"] = rep.tn;
  j["fn"] = rep.fn;
  rec.lines.push_back(j.dump());
  ordered_json s;
  s["record"] = "summary";
  s["repeats"] = 1;
  s["accuracy_mean"] = rep.accuracy;
  s["accuracy_sd"] = 0.0;
  s["f1_mean"] = rep.f1;
  s["f1_sd"] = 0.0;
  s["accuracy"] = rep.accuracy;
  s["f1"] = rep.f1;
  s["tp"] = rep.tp;
  s["fp"] = rep.fp;
  s["tn"] = rep.tn;
  s["fn"] = rep.fn;
  s["config"] = ordered_json::parse(config_json(cfg));
  rec.lines.push_back(s.dump());
  rec.save(g.out_dir + "/metrics.jsonl");

  ordered_json data;
  data["source"] = "dataset";
  data["dataset"] = o.dataset;
  write_manifest(g.out_dir, "train", ordered_json::parse(config_json(cfg)), data, cfg.seed);

  int best = hist.best_epoch;
  out << "trained " << to_string(name) << " (" << model.param_count() << " params, "
      << hist.epochs.size() << " epochs, best " << best + 1 << ")\n";
  print_report_line(out, rep);
}

void do_features(const GlobalOpts& g, const std::string& dataset, const std::string& setting,
                 std::ostream& out) {
  Dataset ds = load_dataset(dataset);
  FeatureSetting fset = feature_setting_from(setting);
  FeatureMatrix m = feature_matrix(fset, ds.samples);
  ensure_dir(g.out_dir);
  save_feature_csv(m, g.out_dir + "/features.csv");

  ordered_json cfg;
  cfg["setting"] = setting;
  cfg["rows"] = m.rows.size();
  cfg["columns"] = m.columns.size();
  ordered_json data;
  data["source"] = "dataset";
  data["dataset"] = dataset;
  write_manifest(g.out_dir, "features", cfg, data, g.seed);
  out << m.rows.size() << " rows x " << m.columns.size() << " features -> " << g.out_dir
      << "/features.csv\n";
}

void do_cdf(const GlobalOpts& g, const std::string& dataset,
            std::vector<std::string> requested, std::ostream& out) {
  Dataset ds = load_dataset(dataset);
  const auto& names = FeatureVector::names();
  if (requested.empty()) requested.assign(names.begin(), names.end());
  std::vector<int> index;
  for (const std::string& want : requested) {
    auto it = std::find_if(names.begin(), names.end(),
                           [&](const char* n) { return want == n; });
    if (it == names.end()) fail(Errc::InvalidConfig, "cdf: unknown feature '" + want + "'");
    index.push_back(static_cast<int>(it - names.begin()));
  }

  // one pass over the samples, then one file per requested feature
  std::vector<std::array<double, 17>> rows;
  std::vector<int> labels;
  for (const Sample& s : ds.samples) {
    if (s.channels != 1)
      fail(Errc::InvalidConfig, "cdf: need close-channel samples (channels=1)");
    rows.push_back(extract_features(s.values).to_array());
    labels.push_back(s.label);
  }
  ensure_dir(g.out_dir);
  ensure_dir(g.out_dir + "/cdf");
  for (size_t i = 0; i < requested.size(); ++i) {
    std::map<std::string, std::vector<double>> per_class;
    for (size_t r = 0; r < rows.size(); ++r)
      per_class[labels[r] == 1 ? "crypto" : "stock"].push_back(rows[r][index[i]]);
    export_cdf(g.out_dir + "/cdf/" + requested[i] + ".csv", requested[i], per_class);
  }

  ordered_json cfg;
  cfg["features"] = requested;
  cfg["samples"] = ds.samples.size();
  ordered_json data;
  data["source"] = "dataset";
  data["dataset"] = dataset;
  write_manifest(g.out_dir, "cdf", cfg, data, g.seed);
  out << "wrote " << requested.size() << " CDF files under " << g.out_dir << "/cdf/\n";
}

void do_experiment(const GlobalOpts& g, CLI::App* sub, const CLI::App& app, const CfgFlags& f,
                   const DataOpts& d, std::ostream& out) {
  std::string config_text = g.config_path.empty() ? "" : read_text(g.config_path);
  ExperimentConfig cfg = build_config(sub, app, f, config_text, g.seed);

  ordered_json manifest_data;
  if (!config_text.empty()) {
    auto j = ordered_json::parse(config_text, nullptr, false);
    if (j.is_object() && j.contains("data")) manifest_data = j["data"];
  }
  auto [corpus, desc] = resolve_corpus(sub, d, manifest_data.is_null() ? nullptr : &manifest_data,
                                       CorpusKind::TwoClass);

  ensure_dir(g.out_dir);
  RunRecords rec;
  MetricsReport rep = run_experiment(cfg, corpus, &rec);
  rec.save(g.out_dir + "/metrics.jsonl");
  write_manifest(g.out_dir, "experiment", ordered_json::parse(config_json(cfg)), desc, cfg.seed);
  out << "experiment: " << cfg.repeats << " repeats of " << to_string(cfg.track) << " "
      << (cfg.track == Track::Neural ? cfg.model : to_string(cfg.classifier)) << "\n";
  print_report_line(out, rep);
}

void do_control(const GlobalOpts& g, CLI::App* sub, const CLI::App& app, const CfgFlags& f,
                const DataOpts& d, const std::string& cls_name, std::ostream& out) {
  std::string config_text = g.config_path.empty() ? "" : read_text(g.config_path);
  ExperimentConfig cfg = build_config(sub, app, f, config_text, g.seed);
  AssetClass cls = asset_class_from(cls_name);

  ordered_json manifest_data;
  if (!config_text.empty()) {
    auto j = ordered_json::parse(config_text, nullptr, false);
    if (j.is_object() && j.contains("data")) manifest_data = j["data"];
  }
  auto [corpus, desc] = resolve_corpus(sub, d, manifest_data.is_null() ? nullptr : &manifest_data,
                                       CorpusKind::SingleClass, cls);

  ensure_dir(g.out_dir);
  RunRecords rec;
  MetricsReport rep = run_control(cls, cfg, corpus, &rec);
  rec.save(g.out_dir + "/metrics.jsonl");
  ordered_json cj = ordered_json::parse(config_json(cfg));
  cj["control_class"] = to_string(cls);
  write_manifest(g.out_dir, "control", cj, desc, cfg.seed);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "control (%s pseudo-labels): train accuracy %.4f\n",
                to_string(cls).c_str(), rep.train_accuracy_mean);
  out << buf;
  print_report_line(out, rep);
}

void do_robustness(const GlobalOpts& g, CLI::App* sub, const CLI::App& app, const CfgFlags& f,
                   const DataOpts& d, const std::vector<std::string>& variants,
                   std::ostream& out) {
  std::string config_text = g.config_path.empty() ? "" : read_text(g.config_path);
  ExperimentConfig cfg = build_config(sub, app, f, config_text, g.seed);

  ordered_json manifest_data;
  if (!config_text.empty()) {
    auto j = ordered_json::parse(config_text, nullptr, false);
    if (j.is_object() && j.contains("data")) manifest_data = j["data"];
  }
  auto [corpus, desc] = resolve_corpus(sub, d, manifest_data.is_null() ? nullptr : &manifest_data,
                                       CorpusKind::TwoClass);

  ensure_dir(g.out_dir);
  RunRecords rec;
  std::vector<RobustnessRow> rows = run_robustness(cfg, variants, corpus, &rec);
  rec.save(g.out_dir + "/metrics.jsonl");
  ordered_json cj = ordered_json::parse(config_json(cfg));
  cj["variants"] = variants;
  write_manifest(g.out_dir, "robustness", cj, desc, cfg.seed);
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-24s accuracy %.4f  f1 %.4f  [%s]\n", r.variant.c_str(),
                  r.report.accuracy, r.report.f1, r.arch.c_str());
    out << buf;
  }
}

void do_report(const GlobalOpts& g, std::ostream& out) {
  ordered_json manifest = ordered_json::parse(read_text(g.out_dir + "/manifest.json"));
  std::string jsonl = read_text(g.out_dir + "/metrics.jsonl");

  std::ostringstream rep;
  rep << "run: " << manifest.value("command", "?") << "  version "
      << manifest.value("version", "?") << "  seed " << manifest.value("seed", 0) << "\n";
  if (manifest.contains("data")) rep << "data: " << manifest["data"].dump() << "\n";
  rep << "config: " << manifest["config"].dump() << "\n\n";

  char buf[256];
  std::istringstream lines(jsonl);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    std::string kind = j.value("record", "?");
    if (kind == "repeat") {
      std::snprintf(buf, sizeof(buf),
                    "repeat %d  seed %llu  accuracy %.4f  f1 %.4f  tp %lld fp %lld tn %lld fn %lld",
                    j.value("repeat", 0),
                    static_cast<unsigned long long>(j.value("seed", 0ull)),
                    j.value("accuracy", 0.0), j.value("f1", 0.0),
                    static_cast<long long>(j.value("tp", 0)),
                    static_cast<long long>(j.value("fp", 0)),
                    static_cast<long long>(j.value("tn", 0)),
                    static_cast<long long>(j.value("fn", 0)));
      rep << buf;
      if (j.contains("train_accuracy")) {
        std::snprintf(buf, sizeof(buf), "  train %.4f", j["train_accuracy"].get<double>());
        rep << buf;
      }
      rep << "\n";
    } else if (kind == "variant") {
      std::snprintf(buf, sizeof(buf), "variant %-24s accuracy %.4f  f1 %.4f",
                    j.value("variant", "?").c_str(), j.value("accuracy", 0.0),
                    j.value("f1", 0.0));
      rep << buf << "\n";
    } else if (kind == "summary") {
      std::snprintf(buf, sizeof(buf), "\nsummary over %d repeats: accuracy %.4f +- %.4f  f1 %.4f +- %.4f",
                    j.value("repeats", j.value("variants", 0)), j.value("accuracy_mean", 0.0),
                    j.value("accuracy_sd", 0.0), j.value("f1_mean", 0.0), j.value("f1_sd", 0.0));
      rep << buf << "\n";
      if (j.contains("train_accuracy_mean")) {
        std::snprintf(buf, sizeof(buf), "mean train accuracy %.4f",
                      j["train_accuracy_mean"].get<double>());
        rep << buf << "\n";
      }
    }
  }
  write_text(g.out_dir + "/report.txt", rep.str());
  out << rep.str();
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"minute-bar time-series classification toolkit"};
  app.name("tscx");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "master seed for every random choice")->capture_default_str();
  app.add_option("--config", g.config_path,
                 "JSON config file (or a previous run's manifest.json); flags win");

  // ingest
  IngestOpts ing;
  auto* sub_ingest = app.add_subcommand("ingest", "align raw bars to the trading session");
  sub_ingest->fallthrough();
  sub_ingest->add_option("--series", ing.series, "input bars as ID:CLASS:PATH (repeatable)");
  sub_ingest->add_option("--calendar", ing.calendar_path,
                         "calendar file (default: bundled NYSE 2023-2024)");
  sub_ingest->add_option("--klines-url", ing.klines_url, "kline endpoint base URL");
  sub_ingest->add_option("--klines-symbols", ing.klines_symbols,
                         "symbols to fetch, SYMBOL[:CLASS] (repeatable)");
  sub_ingest->add_option("--start", ing.start, "fetch range start (ISO instant)");
  sub_ingest->add_option("--end", ing.end, "fetch range end (ISO instant)");

  // dataset
  DataOpts d_dataset;
  DatasetOpts dso;
  auto* sub_dataset = app.add_subcommand("dataset", "segment, balance, and split samples");
  sub_dataset->fallthrough();
  add_data_flags(sub_dataset, d_dataset);
  sub_dataset->add_option("--granularity", dso.granularity, "daily|weekly")
      ->capture_default_str();
  sub_dataset->add_option("--channels", dso.channels, "close|ohlc")->capture_default_str();
  sub_dataset->add_option("--balance", dso.balance, "balanced|unbalanced")
      ->capture_default_str();
  sub_dataset->add_option("--test-frac", dso.test_frac, "test fraction")->capture_default_str();
  sub_dataset->add_option("--val-frac", dso.val_frac, "validation fraction")
      ->capture_default_str();

  // train
  CfgFlags f_train;
  TrainOpts tro;
  auto* sub_train = app.add_subcommand("train", "train one model on a saved dataset");
  sub_train->fallthrough();
  sub_train->add_option("--dataset", tro.dataset, "dataset prefix from `tscx dataset`")
      ->required();
  add_config_flags(sub_train, f_train);

  // features
  std::string feat_dataset, feat_setting = "NP";
  auto* sub_features = app.add_subcommand("features", "extract the 17-feature matrix");
  sub_features->fallthrough();
  sub_features->add_option("--dataset", feat_dataset, "dataset prefix")->required();
  sub_features->add_option("--setting", feat_setting, "P, R, NP, NR, P+R, NP+NR")
      ->capture_default_str();

  // experiment
  CfgFlags f_exp;
  DataOpts d_exp;
  auto* sub_experiment =
      app.add_subcommand("experiment", "run a full classification experiment");
  sub_experiment->fallthrough();
  add_config_flags(sub_experiment, f_exp);
  add_data_flags(sub_experiment, d_exp);

  // control
  CfgFlags f_ctl;
  DataOpts d_ctl;
  d_ctl.n_crypto = 8;
  d_ctl.n_stock = 8;
  std::string ctl_class = "crypto";
  auto* sub_control = app.add_subcommand("control", "random-label control experiment");
  sub_control->fallthrough();
  sub_control->add_option("--class", ctl_class, "asset class to pseudo-label (crypto|stock)")
      ->capture_default_str();
  add_config_flags(sub_control, f_ctl);
  add_data_flags(sub_control, d_ctl);

  // robustness
  CfgFlags f_rob;
  DataOpts d_rob;
  std::vector<std::string> rob_variants;
  auto* sub_robustness =
      app.add_subcommand("robustness", "baseline vs architecture variants on one split");
  sub_robustness->fallthrough();
  sub_robustness->add_option("--variants", rob_variants,
                             "width lists (32-32-64) or arch strings (repeatable)");
  add_config_flags(sub_robustness, f_rob);
  add_data_flags(sub_robustness, d_rob);

  // cdf
  std::string cdf_dataset;
  std::vector<std::string> cdf_features;
  auto* sub_cdf = app.add_subcommand("cdf", "per-class feature CDF plot data");
  sub_cdf->fallthrough();
  sub_cdf->add_option("--dataset", cdf_dataset, "dataset prefix")->required();
  sub_cdf->add_option("--feature", cdf_features, "feature name (repeatable; default: all)");

  // report
  auto* sub_report = app.add_subcommand("report", "summarize a run directory");
  sub_report->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help / --version
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (sub_ingest->parsed()) do_ingest(g, ing, out);
    else if (sub_dataset->parsed()) do_dataset(g, sub_dataset, d_dataset, dso, out);
    else if (sub_train->parsed()) do_train(g, sub_train, app, f_train, tro, out);
    else if (sub_features->parsed()) do_features(g, feat_dataset, feat_setting, out);
    else if (sub_experiment->parsed()) do_experiment(g, sub_experiment, app, f_exp, d_exp, out);
    else if (sub_control->parsed()) do_control(g, sub_control, app, f_ctl, d_ctl, ctl_class, out);
    else if (sub_robustness->parsed())
      do_robustness(g, sub_robustness, app, f_rob, d_rob, rob_variants, out);
    else if (sub_cdf->parsed()) do_cdf(g, cdf_dataset, cdf_features, out);
    else if (sub_report->parsed()) do_report(g, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::DivergedLoss ? 3 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace tscx
