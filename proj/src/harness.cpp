#include "tscx/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "tscx/error.hpp"
#include "tscx/rng.hpp"
#include "tscx/tensor.hpp"

namespace tscx {

using nlohmann::ordered_json;

std::string to_string(Balance b) { return b == Balance::Balanced ? "balanced" : "unbalanced"; }
std::string to_string(Representation r) {
  return r == Representation::Price ? "price" : "return";
}
std::string to_string(Track t) { return t == Track::Neural ? "neural" : "classical"; }

Balance balance_from(const std::string& s) {
  if (s == "balanced") return Balance::Balanced;
  if (s == "unbalanced") return Balance::Unbalanced;
  fail(Errc::InvalidConfig, "unknown balance '" + s + "'");
}

Representation representation_from(const std::string& s) {
  if (s == "price") return Representation::Price;
  if (s == "return" || s == "returns") return Representation::Return;
  fail(Errc::InvalidConfig, "unknown representation '" + s + "'");
}

Track track_from(const std::string& s) {
  if (s == "neural") return Track::Neural;
  if (s == "classical") return Track::Classical;
  fail(Errc::InvalidConfig, "unknown track '" + s + "'");
}

void validate(const ExperimentConfig& config) {
  if (config.repeats < 1) fail(Errc::InvalidConfig, "repeats must be >= 1");
  if (config.width_divisor < 1) fail(Errc::InvalidConfig, "width_divisor must be >= 1");
  if (config.representation == Representation::Return) {
    if (config.granularity == Granularity::Weekly)
      fail(Errc::InvalidConfig, "the return representation applies to daily series only");
    if (config.channels == ChannelMode::AllFour)
      fail(Errc::InvalidConfig, "the return representation applies to the close channel only");
  }
  if (config.track == Track::Classical) {
    if (config.channels != ChannelMode::CloseOnly)
      fail(Errc::InvalidConfig, "the classical track takes close-channel samples");
    if (config.representation != Representation::Price)
      fail(Errc::InvalidConfig,
           "the classical track derives returns from its feature setting; leave "
           "representation at price");
  } else {
    model_name_from(config.model);                     // throws on unknown names
    if (!config.arch.empty()) parse_arch(config.arch); // throws on bad overrides
  }
}

namespace {

// Float fields go through shortest-decimal text so manifests read
// "0.001", not the double expansion of the float bit pattern.
double f2d(float v) {
  char buf[40];
  for (int prec = 1; prec <= 9; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, static_cast<double>(v));
    if (std::strtof(buf, nullptr) == v) break;
  }
  return std::atof(buf);
}

ordered_json config_obj(const ExperimentConfig& config) {
  ordered_json j;
  j["granularity"] = to_string(config.granularity);
  j["channels"] = to_string(config.channels);
  j["balance"] = to_string(config.balance);
  j["representation"] = to_string(config.representation);
  j["track"] = to_string(config.track);
  if (config.track == Track::Neural) {
    ModelName name = model_name_from(config.model);
    j["model"] = to_string(name);
    j["arch"] = config.arch.empty() ? default_arch(name) : config.arch;
    j["width_divisor"] = config.width_divisor;
    ordered_json t;
    t["learning_rate"] = f2d(config.train.learning_rate);
    t["loss"] = to_string(config.train.loss);
    t["batch_size"] = config.train.batch_size;
    t["epochs"] = config.train.epochs;
    t["dropout"] = f2d(config.train.dropout);
    t["focal_alpha"] = f2d(config.train.focal_alpha);
    t["focal_gamma"] = f2d(config.train.focal_gamma);
    t["patience"] = config.train.patience;
    j["train"] = t;
  } else {
    j["classifier"] = to_string(config.classifier);
    j["features"] = to_string(config.features);
    ordered_json c;
    c["l2"] = config.classical.l2;
    c["epochs"] = config.classical.epochs;
    c["lr"] = config.classical.lr;
    c["n_trees"] = config.classical.n_trees;
    c["max_depth"] = config.classical.max_depth;
    c["gb_rounds"] = config.classical.gb_rounds;
    c["gb_depth"] = config.classical.gb_depth;
    c["gb_lr"] = config.classical.gb_lr;
    c["k"] = config.classical.k;
    j["classical"] = c;
  }
  j["repeats"] = config.repeats;
  j["seed"] = config.seed;
  return j;
}

}  // namespace

std::string config_json(const ExperimentConfig& config) {
  validate(config);
  return config_obj(config).dump();
}

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(Errc::InvalidConfig, "config must be a JSON object");
  if (j.contains("config")) j = j["config"];  // full manifest handed in

  ExperimentConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "granularity") c.granularity = granularity_from(v.get<std::string>());
      else if (k == "channels") c.channels = channel_mode_from(v.get<std::string>());
      else if (k == "balance") c.balance = balance_from(v.get<std::string>());
      else if (k == "representation") c.representation = representation_from(v.get<std::string>());
      else if (k == "track") c.track = track_from(v.get<std::string>());
      else if (k == "model") c.model = v.get<std::string>();
      else if (k == "arch") c.arch = v.get<std::string>();
      else if (k == "width_divisor") c.width_divisor = v.get<int>();
      else if (k == "classifier") c.classifier = classifier_from(v.get<std::string>());
      else if (k == "features") c.features = feature_setting_from(v.get<std::string>());
      else if (k == "repeats") c.repeats = v.get<int>();
      else if (k == "seed") c.seed = v.get<uint64_t>();
      else if (k == "train") {
        for (auto t = v.begin(); t != v.end(); ++t) {
          const std::string& tk = t.key();
          if (tk == "learning_rate") c.train.learning_rate = t.value().get<float>();
          else if (tk == "loss") c.train.loss = loss_from(t.value().get<std::string>());
          else if (tk == "batch_size") c.train.batch_size = t.value().get<int>();
          else if (tk == "epochs") c.train.epochs = t.value().get<int>();
          else if (tk == "dropout") c.train.dropout = t.value().get<float>();
          else if (tk == "focal_alpha") c.train.focal_alpha = t.value().get<float>();
          else if (tk == "focal_gamma") c.train.focal_gamma = t.value().get<float>();
          else if (tk == "patience") c.train.patience = t.value().get<int>();
          else fail(Errc::InvalidConfig, "unknown train key '" + tk + "'");
        }
      } else if (k == "classical") {
        for (auto t = v.begin(); t != v.end(); ++t) {
          const std::string& tk = t.key();
          if (tk == "l2") c.classical.l2 = t.value().get<double>();
          else if (tk == "epochs") c.classical.epochs = t.value().get<int>();
          else if (tk == "lr") c.classical.lr = t.value().get<double>();
          else if (tk == "n_trees") c.classical.n_trees = t.value().get<int>();
          else if (tk == "max_depth") c.classical.max_depth = t.value().get<int>();
          else if (tk == "gb_rounds") c.classical.gb_rounds = t.value().get<int>();
          else if (tk == "gb_depth") c.classical.gb_depth = t.value().get<int>();
          else if (tk == "gb_lr") c.classical.gb_lr = t.value().get<double>();
          else if (tk == "k") c.classical.k = t.value().get<int>();
          else fail(Errc::InvalidConfig, "unknown classical key '" + tk + "'");
        }
      } else {
        fail(Errc::InvalidConfig, "unknown config key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidConfig, std::string("config field has the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

MetricsReport metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    fail(Errc::LengthMismatch, "metrics: predictions and labels disagree in length");
  if (predictions.empty()) fail(Errc::LengthMismatch, "metrics: empty prediction vector");
  MetricsReport r;
  for (size_t i = 0; i < predictions.size(); ++i) {
    bool p = predictions[i] == 1;
    bool y = labels[i] == 1;
    if (p && y) ++r.tp;
    else if (p && !y) ++r.fp;
    else if (!p && y) ++r.fn;
    else ++r.tn;
  }
  double total = static_cast<double>(predictions.size());
  r.accuracy = (r.tp + r.tn) / total;
  double prec = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  double rec = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  r.repeat_accuracy = {r.accuracy};
  r.repeat_f1 = {r.f1};
  r.accuracy_mean = r.accuracy;
  r.f1_mean = r.f1;
  return r;
}

void RunRecords::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  for (const auto& line : lines) f << line << '\n';
  if (!f) fail(Errc::IoError, "short write to " + path);
}

namespace {

// ---- shared pipeline pieces ------------------------------------------------

void mean_sd(const std::vector<double>& v, double* mean, double* sd) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  *mean = m;
  *sd = std::sqrt(s2 / static_cast<double>(v.size()));
}

MetricsReport aggregate(const std::vector<MetricsReport>& runs) {
  MetricsReport agg;
  for (const auto& r : runs) {
    agg.tp += r.tp;
    agg.fp += r.fp;
    agg.tn += r.tn;
    agg.fn += r.fn;
    agg.repeat_accuracy.push_back(r.accuracy);
    agg.repeat_f1.push_back(r.f1);
    if (!r.repeat_train_accuracy.empty())
      agg.repeat_train_accuracy.push_back(r.repeat_train_accuracy.front());
  }
  double total = static_cast<double>(agg.tp + agg.fp + agg.tn + agg.fn);
  agg.accuracy = (agg.tp + agg.tn) / total;
  double prec = agg.tp + agg.fp > 0 ? static_cast<double>(agg.tp) / (agg.tp + agg.fp) : 0.0;
  double rec = agg.tp + agg.fn > 0 ? static_cast<double>(agg.tp) / (agg.tp + agg.fn) : 0.0;
  agg.f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  mean_sd(agg.repeat_accuracy, &agg.accuracy_mean, &agg.accuracy_sd);
  mean_sd(agg.repeat_f1, &agg.f1_mean, &agg.f1_sd);
  if (!agg.repeat_train_accuracy.empty()) {
    double sd;
    mean_sd(agg.repeat_train_accuracy, &agg.train_accuracy_mean, &sd);
  }
  return agg;
}

struct Prepared {
  LabeledSet train, val, test;  // neural splits, channel-major rows
  FeatureMatrix ftrain, ftest;  // classical matrices (train + val pooled)
  std::vector<int> test_labels;
};

void pack_into(LabeledSet& set, const Sample& s) {
  set.ch = s.channels;
  set.len = s.length;
  for (int c = 0; c < s.channels; ++c)
    for (int t = 0; t < s.length; ++t)
      set.x.push_back(static_cast<float>(s.values[static_cast<size_t>(t) * s.channels + c]));
  set.y.push_back(static_cast<float>(s.label));
  set.n += 1;
}

}  // namespace

LabeledSet pack_samples(const std::vector<Sample>& samples) {
  LabeledSet set;
  for (const Sample& s : samples) pack_into(set, s);
  return set;
}

std::vector<int> predict_labels(const Model& model, const LabeledSet& data, int batch_size) {
  std::vector<int> out;
  out.reserve(data.n);
  const size_t row = static_cast<size_t>(data.ch) * data.len;
  for (int lo = 0; lo < data.n; lo += batch_size) {
    int hi = std::min(data.n, lo + batch_size);
    std::vector<float> xb(data.x.begin() + lo * row, data.x.begin() + hi * row);
    Tape t;
    Tensor x = constant(std::move(xb), {hi - lo, data.ch, data.len});
    Tensor p = model.forward(t, x);
    for (int i = 0; i < hi - lo; ++i) out.push_back((*p.data)[i] >= 0.5f ? 1 : 0);
  }
  return out;
}

namespace {

Prepared prepare(const ExperimentConfig& config, std::vector<Sample> pool, uint64_t seed_r) {
  if (config.representation == Representation::Return)
    for (auto& s : pool) s = to_returns(s);
  if (config.balance == Balance::Balanced) {
    Dataset unbal;
    unbal.samples = std::move(pool);
    pool = balance(unbal, seed_r).samples;
  }
  Dataset split = stratified_split(std::move(pool), seed_r);

  Prepared prep;
  if (config.track == Track::Neural) {
    for (size_t i = 0; i < split.samples.size(); ++i) {
      Sample z = normalize(split.samples[i]);
      switch (split.split_assignment[i]) {
        case Split::Train: pack_into(prep.train, z); break;
        case Split::Val: pack_into(prep.val, z); break;
        case Split::Test:
          pack_into(prep.test, z);
          prep.test_labels.push_back(z.label);
          break;
      }
    }
  } else {
    std::vector<Sample> tr, te;
    for (size_t i = 0; i < split.samples.size(); ++i) {
      if (split.split_assignment[i] == Split::Test)
        te.push_back(split.samples[i]);
      else
        tr.push_back(split.samples[i]);  // classical models take no val set
    }
    prep.ftrain = feature_matrix(config.features, tr);
    prep.ftest = feature_matrix(config.features, te);
    prep.test_labels = prep.ftest.labels;
  }
  return prep;
}

struct RepeatOutcome {
  std::vector<int> pred;
  double train_acc = 0.0;
};

RepeatOutcome run_repeat(const ExperimentConfig& config, const Prepared& prep, uint64_t seed_r,
                         bool want_train_acc) {
  RepeatOutcome out;
  if (config.track == Track::Neural) {
    ModelName name = model_name_from(config.model);
    BuildOptions bopt;
    bopt.arch = config.arch;
    bopt.width_divisor = config.width_divisor;
    Model model = build_model(name, prep.train.len, prep.train.ch, seed_r, bopt);
    TrainConfig tc = config.train;
    tc.seed = seed_r;
    fit(model, prep.train, prep.val, tc);
    out.pred = predict_labels(model, prep.test, tc.batch_size);
    if (want_train_acc)
      out.train_acc = evaluate(model, prep.train, tc.loss, tc.batch_size, tc.focal_alpha,
                               tc.focal_gamma)
                          .acc;
  } else {
    ClassicalModel model = fit(config.classifier, prep.ftrain, config.classical, seed_r);
    out.pred = model.predict(prep.ftest);
    if (want_train_acc) {
      std::vector<int> tp = model.predict(prep.ftrain);
      long ok = 0;
      for (size_t i = 0; i < tp.size(); ++i) ok += tp[i] == prep.ftrain.labels[i] ? 1 : 0;
      out.train_acc = tp.empty() ? 0.0 : static_cast<double>(ok) / tp.size();
    }
  }
  return out;
}

ordered_json repeat_record(int repeat, uint64_t seed_r, const MetricsReport& rep) {
  ordered_json j;
  j["record"] = "repeat";
  j["repeat"] = repeat;
  j["seed"] = seed_r;
  j["accuracy"] = rep.accuracy;
  j["f1"] = rep.f1;
  j["tp"] = rep.tp;
  j["fp"] = rep.fp;
  j["tn"] = rep.tn;
  j["fn"] = rep.fn;
  return j;
}

void push_summary(RunRecords* records, const ExperimentConfig& config, const MetricsReport& agg,
                  bool with_train_acc) {
  if (!records) return;
  ordered_json j;
  j["record"] = "summary";
  j["repeats"] = static_cast<int>(agg.repeat_accuracy.size());
  j["accuracy_mean"] = agg.accuracy_mean;
  j["accuracy_sd"] = agg.accuracy_sd;
  j["f1_mean"] = agg.f1_mean;
  j["f1_sd"] = agg.f1_sd;
  j["accuracy"] = agg.accuracy;
  j["f1"] = agg.f1;
  j["tp"] = agg.tp;
  j["fp"] = agg.fp;
  j["tn"] = agg.tn;
  j["fn"] = agg.fn;
  if (with_train_acc) j["train_accuracy_mean"] = agg.train_accuracy_mean;
  j["config"] = config_obj(config);
  records->lines.push_back(j.dump());
}

std::vector<Sample> segment_all(const std::vector<AlignedSeries>& data,
                                const ExperimentConfig& config) {
  std::vector<Sample> pool;
  for (const auto& series : data) {
    std::vector<Sample> cut = segment(series, config.granularity, config.channels);
    pool.insert(pool.end(), std::make_move_iterator(cut.begin()),
                std::make_move_iterator(cut.end()));
  }
  return pool;
}

}  // namespace

MetricsReport run_experiment(const ExperimentConfig& config, const std::vector<AlignedSeries>& data,
                             RunRecords* records) {
  validate(config);
  if (data.empty()) fail(Errc::TooFewSamples, "run_experiment: no input series");
  std::vector<Sample> pool = segment_all(data, config);
  bool has0 = false, has1 = false;
  for (const auto& s : pool) (s.label == 1 ? has1 : has0) = true;
  if (!has0 || !has1)
    fail(Errc::InvalidConfig, "run_experiment: need samples of both classes");

  std::vector<MetricsReport> runs;
  for (int r = 0; r < config.repeats; ++r) {
    uint64_t seed_r = config.seed + static_cast<uint64_t>(r);
    Prepared prep = prepare(config, pool, seed_r);
    RepeatOutcome outcome = run_repeat(config, prep, seed_r, false);
    MetricsReport rep = metrics(outcome.pred, prep.test_labels);
    if (records) records->lines.push_back(repeat_record(r, seed_r, rep).dump());
    runs.push_back(std::move(rep));
  }
  MetricsReport agg = aggregate(runs);
  push_summary(records, config, agg, false);
  return agg;
}

MetricsReport run_control(AssetClass cls, const ExperimentConfig& config,
                          const std::vector<AlignedSeries>& data, RunRecords* records) {
  validate(config);
  std::vector<const AlignedSeries*> assets;
  for (const auto& s : data)
    if (s.asset_class == cls) assets.push_back(&s);
  if (assets.size() < 4)
    fail(Errc::TooFewAssets, "run_control: need at least 4 assets of class " + to_string(cls));

  std::vector<std::vector<Sample>> per_asset;
  per_asset.reserve(assets.size());
  for (const AlignedSeries* s : assets)
    per_asset.push_back(segment(*s, config.granularity, config.channels));

  std::vector<MetricsReport> runs;
  for (int r = 0; r < config.repeats; ++r) {
    uint64_t seed_r = config.seed + static_cast<uint64_t>(r);
    Rng rng(seed_r);
    std::vector<size_t> order(assets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> pseudo(assets.size());
    for (size_t pos = 0; pos < order.size(); ++pos)
      pseudo[order[pos]] = pos < order.size() / 2 ? 0 : 1;

    std::vector<Sample> pool;
    for (size_t a = 0; a < per_asset.size(); ++a)
      for (Sample s : per_asset[a]) {
        s.label = pseudo[a];
        pool.push_back(std::move(s));
      }

    Prepared prep = prepare(config, std::move(pool), seed_r);
    RepeatOutcome outcome = run_repeat(config, prep, seed_r, true);
    MetricsReport rep = metrics(outcome.pred, prep.test_labels);
    rep.repeat_train_accuracy = {outcome.train_acc};
    if (records) {
      ordered_json j = repeat_record(r, seed_r, rep);
      j["train_accuracy"] = outcome.train_acc;
      ordered_json labels;  // asset-level pseudo-labels, audit trail
      for (size_t a = 0; a < assets.size(); ++a) labels[assets[a]->asset_id] = pseudo[a];
      j["pseudo_labels"] = labels;
      records->lines.push_back(j.dump());
    }
    runs.push_back(std::move(rep));
  }
  MetricsReport agg = aggregate(runs);
  push_summary(records, config, agg, true);
  return agg;
}

namespace {

std::string resolve_variant(ModelName name, const std::string& text) {
  if (text.find('(') != std::string::npos) {
    parse_arch(text);  // validate; keep the author's spelling
    return text;
  }
  std::vector<int> widths;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t dash = text.find('-', pos);
    std::string tok = text.substr(pos, dash == std::string::npos ? dash : dash - pos);
    if (tok.empty() || tok.size() > 9 || tok.find_first_not_of("0123456789") != std::string::npos)
      fail(Errc::SyntaxError,
           "variant '" + text + "' is neither a width list nor an architecture string");
    widths.push_back(std::stoi(tok));
    if (dash == std::string::npos) break;
    pos = dash + 1;
  }
  return arch_from_widths(name, widths);
}

}  // namespace

std::vector<RobustnessRow> run_robustness(const ExperimentConfig& config,
                                          const std::vector<std::string>& variants,
                                          const std::vector<AlignedSeries>& data,
                                          RunRecords* records) {
  validate(config);
  if (config.track != Track::Neural)
    fail(Errc::InvalidConfig, "run_robustness: robustness sweeps are neural-track");
  ModelName name = model_name_from(config.model);

  std::vector<RobustnessRow> rows;
  rows.push_back({"baseline", config.arch.empty() ? default_arch(name) : config.arch, {}});
  for (const auto& v : variants) rows.push_back({v, resolve_variant(name, v), {}});

  if (data.empty()) fail(Errc::TooFewSamples, "run_robustness: no input series");
  std::vector<Sample> pool = segment_all(data, config);
  Prepared prep = prepare(config, std::move(pool), config.seed);  // one fixed split

  for (size_t i = 0; i < rows.size(); ++i) {
    ExperimentConfig cell = config;
    cell.arch = rows[i].arch;
    RepeatOutcome outcome = run_repeat(cell, prep, config.seed, false);
    rows[i].report = metrics(outcome.pred, prep.test_labels);
    if (records) {
      ordered_json j = repeat_record(static_cast<int>(i), config.seed, rows[i].report);
      j["record"] = "variant";
      j["variant"] = rows[i].variant;
      j["arch"] = rows[i].arch;
      records->lines.push_back(j.dump());
    }
  }
  if (records) {
    ordered_json j;
    j["record"] = "summary";
    j["variants"] = static_cast<int>(rows.size());
    j["config"] = config_obj(config);
    records->lines.push_back(j.dump());
  }
  return rows;
}

void export_cdf(const std::string& path, const std::string& feature_name,
                const std::map<std::string, std::vector<double>>& per_class) {
  if (per_class.empty()) fail(Errc::EmptyClass, "export_cdf: no classes given");
  for (const auto& [cls, vals] : per_class)
    if (vals.empty()) fail(Errc::EmptyClass, "export_cdf: class '" + cls + "' has no values");
  std::ofstream f(path);
  if (!f) fail(Errc::IoError, "cannot write " + path);
  f << "# feature: " << feature_name << "\n";
  f << "class,value,cdf\n";
  char buf[128];
  for (const auto& [cls, vals] : per_class) {
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    for (size_t k = 0; k < sorted.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", sorted[k], (k + 1) / n);
      f << cls << ',' << buf;
    }
  }
  if (!f) fail(Errc::IoError, "short write to " + path);
}

}  // namespace tscx
