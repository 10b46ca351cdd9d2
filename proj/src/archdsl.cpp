#include "tscx/archdsl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tscx/error.hpp"

namespace tscx {

// ---------------------------------------------------------------------------
// parsing
// ---------------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct Parser {
  const std::string& s;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool eof() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  [[noreturn]] void err(const std::string& what, size_t at) {
    fail(Errc::SyntaxError, "arch: " + what + " at byte " + std::to_string(at));
  }

  std::string ident() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) err("expected a layer name", start);
    return s.substr(start, pos - start);
  }

  int integer(const char* what) {
    skip_ws();
    size_t start = pos;
    bool neg = false;
    if (pos < s.size() && s[pos] == '-') {
      neg = true;
      ++pos;
    }
    long long v = 0;
    size_t digits = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + (s[pos] - '0');
      if (v > 1000000000LL) err("integer out of range", start);
      ++pos;
      ++digits;
    }
    if (digits == 0) err(std::string("expected ") + what, start);
    return static_cast<int>(neg ? -v : v);
  }

  void expect(char c) {
    skip_ws();
    if (pos >= s.size() || s[pos] != c)
      err(std::string("expected '") + c + "'", pos);
    ++pos;
  }

  std::vector<LayerSpec> spec(const char* stops);
  LayerSpec unit();
};

LayerSpec Parser::unit() {
  skip_ws();
  if (peek() == '(') {
    // (concatenate a, b, c) — EOF tolerated in place of the closing paren.
    size_t open = pos;
    ++pos;
    std::string head = ident();
    if (lower(head) != "concatenate") err("expected 'concatenate'", open + 1);
    LayerSpec out;
    out.kind = LayerKind::Concat;
    for (;;) {
      out.branches.push_back(spec(",)"));
      if (eof()) break;  // unterminated group: published table omits the ')'
      char c = peek();
      if (c == ',') {
        ++pos;
        continue;
      }
      if (c == ')') {
        ++pos;
        break;
      }
      err("expected ',' or ')'", pos);
    }
    return out;
  }

  skip_ws();
  size_t at = pos;
  std::string name = ident();
  std::string lo = lower(name);

  if (lo == "resblock") {
    expect('(');
    LayerSpec out;
    out.kind = LayerKind::ResBlock;
    out.branches.push_back(spec("*)"));
    char c = peek();
    if (c == ')') {
      ++pos;
      expect('*');
    } else if (c == '*') {
      ++pos;  // published ResNet row drops the ')' before '*'
    } else {
      err("expected ')' or '*' after a Resblock body", pos);
    }
    out.repeat = integer("a repeat count");
    if (out.repeat < 1) fail(Errc::NonPositiveWidth, "Resblock repeat must be >= 1");
    return out;
  }

  LayerKind kind;
  if (lo == "fc") kind = LayerKind::FC;
  else if (lo == "conv" || lo == "cnn") kind = LayerKind::Conv;
  else if (lo == "rnn") kind = LayerKind::RnnCell;
  else if (lo == "gru") kind = LayerKind::GruCell;
  else if (lo == "lstm") kind = LayerKind::LstmCell;
  else fail(Errc::UnknownLayerKind, "unknown layer kind '" + name + "' at byte " + std::to_string(at));

  expect('(');
  int w = integer("a width");
  expect(')');
  if (w < 1) fail(Errc::NonPositiveWidth, "layer width must be >= 1, got " + std::to_string(w));
  LayerSpec out;
  out.kind = kind;
  out.width = w;
  return out;
}

std::vector<LayerSpec> Parser::spec(const char* stops) {
  std::vector<LayerSpec> units;
  for (;;) {
    units.push_back(unit());
    if (eof()) break;
    char c = peek();
    if (std::strchr(stops, c)) break;
    if (c != '-') err("expected '-'", pos);
    ++pos;
  }
  return units;
}

}  // namespace

std::vector<LayerSpec> parse_arch(const std::string& text) {
  Parser p{text};
  if (p.eof()) fail(Errc::SyntaxError, "arch: empty specification at byte 0");
  auto units = p.spec("");
  if (!p.eof()) p.err("trailing input", p.pos);
  return units;
}

std::string render(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) out += "-";
    const auto& u = layers[i];
    switch (u.kind) {
      case LayerKind::FC: out += "FC(" + std::to_string(u.width) + ")"; break;
      case LayerKind::Conv: out += "CONV(" + std::to_string(u.width) + ")"; break;
      case LayerKind::RnnCell: out += "RNN(" + std::to_string(u.width) + ")"; break;
      case LayerKind::GruCell: out += "GRU(" + std::to_string(u.width) + ")"; break;
      case LayerKind::LstmCell: out += "LSTM(" + std::to_string(u.width) + ")"; break;
      case LayerKind::ResBlock:
        out += "Resblock(" + render(u.branches[0]) + ")*" + std::to_string(u.repeat);
        break;
      case LayerKind::Concat: {
        out += "(concatenate ";
        for (size_t b = 0; b < u.branches.size(); ++b) {
          if (b) out += ", ";
          out += render(u.branches[b]);
        }
        out += ")";
        break;
      }
      default: fail(Errc::UnknownLayerKind, "render: kind has no surface syntax");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// named models
// ---------------------------------------------------------------------------

std::string to_string(ModelName name) {
  switch (name) {
    case ModelName::MLP: return "MLP";
    case ModelName::CNN: return "CNN";
    case ModelName::ResNet: return "ResNet";
    case ModelName::RNN: return "RNN";
    case ModelName::GRU: return "GRU";
    case ModelName::LSTM: return "LSTM";
    case ModelName::Autoencoder: return "Autoencoder";
    case ModelName::TimeCNN: return "TimeCNN";
    case ModelName::MCNN: return "MCNN";
  }
  return "?";
}

ModelName model_name_from(const std::string& s) {
  std::string lo = lower(s);
  if (lo == "mlp") return ModelName::MLP;
  if (lo == "cnn") return ModelName::CNN;
  if (lo == "resnet") return ModelName::ResNet;
  if (lo == "rnn") return ModelName::RNN;
  if (lo == "gru") return ModelName::GRU;
  if (lo == "lstm") return ModelName::LSTM;
  if (lo == "autoencoder" || lo == "ae") return ModelName::Autoencoder;
  if (lo == "timecnn" || lo == "time-cnn" || lo == "time_cnn") return ModelName::TimeCNN;
  if (lo == "mcnn" || lo == "m-cnn" || lo == "multichannelcnn") return ModelName::MCNN;
  fail(Errc::InvalidConfig, "unknown model name '" + s + "'");
}

std::string default_arch(ModelName name) {
  switch (name) {
    case ModelName::MLP: return "FC(32)-FC(64)-FC(64)-FC(128)-FC(1)";
    case ModelName::CNN: return "CONV(32)-CONV(64)-CONV(64)-CONV(128)-FC(1)";
    case ModelName::ResNet: return "CONV(64)-Resblock(CONV(64)-CONV(64))*6-FC(1)";
    case ModelName::RNN: return "RNN(32)-RNN(32)-FC(1)";
    case ModelName::GRU: return "GRU(32)-GRU(32)-FC(1)";
    case ModelName::LSTM: return "LSTM(32)-LSTM(32)-FC(1)";
    case ModelName::Autoencoder:
      return "CONV(64)-CONV(128)-CONV(256)-FC(256)-CONV(256)-CONV(128)-CONV(64)-FC(1)";
    case ModelName::TimeCNN: return "CONV(6)-CONV(12)-FC(1)";
    case ModelName::MCNN: return "(concatenate CONV(32), CONV(64), CONV(128))-FC(64)-FC(1)";
  }
  fail(Errc::InvalidConfig, "unknown model");
}

std::string arch_from_widths(ModelName name, const std::vector<int>& widths) {
  if (widths.empty()) fail(Errc::InvalidConfig, "arch_from_widths: empty width list");
  auto chain = [&](const char* kind) {
    std::string out;
    for (int w : widths) out += std::string(kind) + "(" + std::to_string(w) + ")-";
    return out + "FC(1)";
  };
  switch (name) {
    case ModelName::MLP: return chain("FC");
    case ModelName::CNN:
    case ModelName::TimeCNN:
    case ModelName::Autoencoder: return chain("CONV");
    case ModelName::RNN: return chain("RNN");
    case ModelName::GRU: return chain("GRU");
    case ModelName::LSTM: return chain("LSTM");
    case ModelName::ResNet: {
      // Each width is one two-conv residual block; equal-width runs collapse
      // into a repeat, a width change inserts a transition conv.
      std::string out = "CONV(" + std::to_string(widths[0]) + ")";
      size_t i = 0;
      while (i < widths.size()) {
        size_t j = i;
        while (j < widths.size() && widths[j] == widths[i]) ++j;
        std::string w = std::to_string(widths[i]);
        if (i > 0) out += "-CONV(" + w + ")";
        out += "-Resblock(CONV(" + w + ")-CONV(" + w + "))*" + std::to_string(j - i);
        i = j;
      }
      return out + "-FC(1)";
    }
    case ModelName::MCNN: fail(Errc::InvalidConfig, "arch_from_widths: no MCNN width sweep");
  }
  fail(Errc::InvalidConfig, "unknown model");
}

// ---------------------------------------------------------------------------
// lowering
// ---------------------------------------------------------------------------

namespace detail {

enum class StepK { Dense, Conv, Pool, Residual, Scan, Concat, Flatten, AsSeq, Drop };

struct CellRef {
  LayerKind kind;
  int width;
  int p0;
};

struct PlanStep {
  PlanStep() = default;
  PlanStep(StepK kk) : k(kk) {}
  StepK k = StepK::Drop;
  int p0 = -1;
  Act act = Act::ReLU;
  int padding = 0;
  int pool_size = 0;
  PoolKind pool = PoolKind::Avg;
  std::vector<CellRef> cells;
  std::vector<std::vector<PlanStep>> branches;
};

}  // namespace detail

namespace {

using detail::CellRef;
using detail::PlanStep;
using detail::StepK;

struct Family {
  int kernel = 3;
  bool same_pad = true;
  int pool_size = 0;
  PoolKind pool_kind = PoolKind::Avg;
  std::vector<int> branch_kernels;
};

Family family_for(ModelName name, int kernel_override) {
  Family f;
  switch (name) {
    case ModelName::TimeCNN:
      f.kernel = 7;
      f.same_pad = false;
      f.pool_size = 3;
      f.pool_kind = PoolKind::Avg;
      break;
    case ModelName::MCNN:
      f.branch_kernels = {5, 7, 9};
      f.pool_size = 2;
      f.pool_kind = PoolKind::Max;
      break;
    default: break;  // kernel 3, same padding, no pooling
  }
  if (kernel_override > 0) {
    f.kernel = kernel_override;
    f.branch_kernels.clear();
  }
  return f;
}

// Shape threaded through lowering: a [*, c, l] sequence or an [*, n] vector.
struct Sh {
  bool seq;
  int c = 0, l = 0, n = 0;
};

struct Lowerer {
  Family fam;
  int divisor;
  Rng rng;
  std::vector<ParamBlob>& blobs;
  bool any_params = false;
  StepK last_param = StepK::Drop;  // sentinel: nothing yet

  int scaled(int w) const { return std::max(1, w / divisor); }

  int blob(const std::string& name, Shape shape, int fan_in, float bias_fill,
           bool is_bias) {
    std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
    if (is_bias) {
      std::fill(v.begin(), v.end(), bias_fill);
    } else {
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
    }
    blobs.push_back({name, std::move(shape), std::make_shared<std::vector<float>>(std::move(v))});
    return static_cast<int>(blobs.size() - 1);
  }

  int conv_blobs(const std::string& prefix, int cin, int cout, int k) {
    int p0 = blob(prefix + ".w", {cout, cin, k}, cin * k, 0.0f, false);
    blob(prefix + ".b", {cout}, 0, 0.0f, true);
    return p0;
  }

  void lower_conv(std::vector<PlanStep>& plan, Sh& sh, int width, int kernel,
                  const std::string& prefix) {
    if (!sh.seq) {
      plan.push_back({StepK::AsSeq});
      sh = {true, 1, sh.n, 0};
    }
    int pad = fam.same_pad ? (kernel - 1) / 2 : 0;
    if (sh.l + 2 * pad < kernel)
      fail(Errc::ShapeComposeError, prefix + ": kernel " + std::to_string(kernel) +
                                        " exceeds length " + std::to_string(sh.l));
    PlanStep st{StepK::Conv};
    st.p0 = conv_blobs(prefix, sh.c, width, kernel);
    st.padding = pad;
    plan.push_back(st);
    sh.c = width;
    sh.l = (sh.l + 2 * pad - kernel) + 1;
    if (fam.pool_size > 0) {
      if (sh.l < fam.pool_size)
        fail(Errc::ShapeComposeError, prefix + ": pool window exceeds length");
      PlanStep ps{StepK::Pool};
      ps.pool_size = fam.pool_size;
      ps.pool = fam.pool_kind;
      plan.push_back(ps);
      sh.l = (sh.l - fam.pool_size) / fam.pool_size + 1;
    }
    any_params = true;
    last_param = StepK::Conv;
  }

  void lower_units(std::vector<PlanStep>& plan, Sh& sh, const std::vector<LayerSpec>& units,
                   bool top_level, const std::string& prefix, int branch_kernel);
};

void Lowerer::lower_units(std::vector<PlanStep>& plan, Sh& sh,
                          const std::vector<LayerSpec>& units, bool top_level,
                          const std::string& prefix, int branch_kernel) {
  int kernel = branch_kernel > 0 ? branch_kernel : fam.kernel;
  for (size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    bool final_unit = top_level && i + 1 == units.size();
    std::string tag = prefix + std::to_string(i);
    switch (u.kind) {
      case LayerKind::FC: {
        int w = final_unit ? 1 : scaled(u.width);
        if (sh.seq) {
          plan.push_back({StepK::Flatten});
          sh = {false, 0, 0, sh.c * sh.l};
          if (any_params && !final_unit) plan.push_back({StepK::Drop});
        }
        if (final_unit && any_params && last_param != StepK::Dense)
          plan.push_back({StepK::Drop});
        PlanStep st{StepK::Dense};
        st.p0 = blob(tag + ".fc.w", {w, sh.n}, sh.n, 0.0f, false);
        blob(tag + ".fc.b", {w}, 0, 0.0f, true);
        st.act = final_unit ? Act::Sigmoid : Act::ReLU;
        plan.push_back(st);
        sh.n = w;
        any_params = true;
        last_param = StepK::Dense;
        if (!final_unit) plan.push_back({StepK::Drop});
        break;
      }
      case LayerKind::Conv:
        lower_conv(plan, sh, scaled(u.width), kernel, tag + ".conv");
        break;
      case LayerKind::ResBlock: {
        if (!sh.seq)
          fail(Errc::ShapeComposeError, tag + ": residual block needs a sequence input");
        const auto& body = u.branches[0];
        if (body.size() != 2 || body[0].kind != LayerKind::Conv || body[1].kind != LayerKind::Conv)
          fail(Errc::ShapeComposeError, tag + ": residual block body must be two convs");
        int w1 = scaled(body[0].width), w2 = scaled(body[1].width);
        if (w2 != sh.c)
          fail(Errc::ShapeComposeError,
               tag + ": residual add needs " + std::to_string(sh.c) + " output channels, body ends with " +
                   std::to_string(w2));
        int pad = (kernel - 1) / 2;
        for (int r = 0; r < u.repeat; ++r) {
          std::string rt = tag + ".res" + std::to_string(r);
          PlanStep st{StepK::Residual};
          st.p0 = conv_blobs(rt + ".c1", sh.c, w1, kernel);
          conv_blobs(rt + ".c2", w1, w2, kernel);
          st.padding = pad;
          plan.push_back(st);
        }
        any_params = true;
        last_param = StepK::Residual;
        break;
      }
      case LayerKind::RnnCell:
      case LayerKind::GruCell:
      case LayerKind::LstmCell: {
        if (!sh.seq || any_params)
          fail(Errc::ShapeComposeError,
               tag + ": a recurrent stack must read the input sequence directly");
        PlanStep st{StepK::Scan};
        int in = sh.c;
        size_t j = i;
        for (; j < units.size(); ++j) {
          LayerKind k = units[j].kind;
          if (k != LayerKind::RnnCell && k != LayerKind::GruCell && k != LayerKind::LstmCell)
            break;
          int w = scaled(units[j].width);
          std::string ct = prefix + std::to_string(j) + ".cell";
          CellRef ref{k, w, static_cast<int>(blobs.size())};
          auto gate = [&](const char* g, float bias_fill) {
            blob(ct + "." + g + "x", {w, in}, in, 0.0f, false);
            blob(ct + "." + g + "h", {w, w}, w, 0.0f, false);
            blob(ct + "." + g + "b", {w}, 0, bias_fill, true);
          };
          if (k == LayerKind::RnnCell) {
            gate("", 0.0f);
          } else if (k == LayerKind::GruCell) {
            gate("z", 0.0f);
            gate("r", 0.0f);
            gate("n", 0.0f);
          } else {
            gate("f", 1.0f);  // forget-gate bias 1
            gate("i", 0.0f);
            gate("o", 0.0f);
            gate("c", 0.0f);
          }
          st.cells.push_back(ref);
          in = w;
        }
        plan.push_back(st);
        sh = {false, 0, 0, in};
        any_params = true;
        last_param = StepK::Scan;
        i = j - 1;
        break;
      }
      case LayerKind::Concat: {
        if (!sh.seq) fail(Errc::ShapeComposeError, tag + ": concatenate needs a sequence input");
        PlanStep st{StepK::Concat};
        int total_c = 0, out_l = -1;
        for (size_t b = 0; b < u.branches.size(); ++b) {
          Sh bsh = sh;
          std::vector<PlanStep> bplan;
          int bk = fam.branch_kernels.empty()
                       ? kernel
                       : fam.branch_kernels[std::min(b, fam.branch_kernels.size() - 1)];
          lower_units(bplan, bsh, u.branches[b], false, tag + ".b" + std::to_string(b) + ".", bk);
          if (!bsh.seq)
            fail(Errc::ShapeComposeError, tag + ": concatenate branches must stay sequences");
          if (out_l < 0) out_l = bsh.l;
          if (bsh.l != out_l)
            fail(Errc::ShapeComposeError, tag + ": branch lengths disagree (" +
                                              std::to_string(bsh.l) + " vs " + std::to_string(out_l) + ")");
          total_c += bsh.c;
          st.branches.push_back(std::move(bplan));
        }
        plan.push_back(st);
        sh = {true, total_c, out_l, 0};
        any_params = true;
        last_param = StepK::Concat;
        break;
      }
      default:
        fail(Errc::UnknownLayerKind, tag + ": kind cannot appear in an architecture string");
    }
  }
}

}  // namespace

Model build_model(ModelName name, int input_len, int input_ch, uint64_t seed,
                  const BuildOptions& opt) {
  if (input_len < 1 || input_ch < 1)
    fail(Errc::InvalidConfig, "build_model: input shape must be positive");
  std::string arch = opt.arch.empty() ? default_arch(name) : opt.arch;
  auto units = parse_arch(arch);
  if (units.back().kind != LayerKind::FC || units.back().width != 1)
    fail(Errc::ShapeComposeError, "model must end in FC(1)");

  Model m;
  m.name_ = name;
  m.arch_ = render(units);
  m.input_len_ = input_len;
  m.input_ch_ = input_ch;
  m.seed_ = seed;
  m.kernel_opt_ = opt.kernel;
  m.width_div_ = opt.width_divisor < 1 ? 1 : opt.width_divisor;

  auto plan = std::make_shared<std::vector<PlanStep>>();
  Lowerer lw{family_for(name, opt.kernel), m.width_div_, Rng(seed), m.params_};
  Sh sh{true, input_ch, input_len, 0};
  lw.lower_units(*plan, sh, units, true, "", 0);
  m.plan_ = std::move(plan);
  return m;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace {

struct RunCtx {
  Tape& t;
  const std::vector<Tensor>& bound;
  bool train;
  Rng* rng;
  float rate;
};

Tensor run_plan(const std::vector<PlanStep>& plan, Tensor h, RunCtx& ctx) {
  Tape& t = ctx.t;
  for (const auto& st : plan) {
    switch (st.k) {
      case StepK::Dense:
        h = dense(t, h, ctx.bound[st.p0], ctx.bound[st.p0 + 1], st.act);
        break;
      case StepK::Conv:
        h = t.activation(t.conv1d(h, ctx.bound[st.p0], ctx.bound[st.p0 + 1], 1, st.padding),
                         Act::ReLU);
        break;
      case StepK::Pool:
        h = t.pool1d(h, st.pool, st.pool_size);
        break;
      case StepK::Residual:
        h = residual_block(t, h, {ctx.bound[st.p0], ctx.bound[st.p0 + 1]},
                           {ctx.bound[st.p0 + 2], ctx.bound[st.p0 + 3]}, st.padding);
        break;
      case StepK::Scan: {
        auto steps = split_steps(h);
        std::vector<RecurrentState> states;
        states.reserve(st.cells.size());
        int batch = h.shape[0];
        for (const auto& c : st.cells)
          states.push_back(initial_state(batch, c.width, c.kind == LayerKind::LstmCell));
        for (const auto& x_t : steps) {
          Tensor in = x_t;
          for (size_t ci = 0; ci < st.cells.size(); ++ci) {
            const auto& c = st.cells[ci];
            const auto& B = ctx.bound;
            int p = c.p0;
            if (c.kind == LayerKind::RnnCell) {
              states[ci] = rnn_step(t, in, states[ci], {B[p], B[p + 1], B[p + 2]});
            } else if (c.kind == LayerKind::GruCell) {
              states[ci] = gru_step(t, in, states[ci],
                                    {B[p], B[p + 1], B[p + 2], B[p + 3], B[p + 4], B[p + 5],
                                     B[p + 6], B[p + 7], B[p + 8]});
            } else {
              states[ci] = lstm_step(t, in, states[ci],
                                     {B[p], B[p + 1], B[p + 2], B[p + 3], B[p + 4], B[p + 5],
                                      B[p + 6], B[p + 7], B[p + 8], B[p + 9], B[p + 10],
                                      B[p + 11]});
            }
            in = states[ci].hidden;
          }
        }
        h = states.back().hidden;
        break;
      }
      case StepK::Concat: {
        std::vector<Tensor> outs;
        outs.reserve(st.branches.size());
        for (const auto& bp : st.branches) outs.push_back(run_plan(bp, h, ctx));
        h = t.concat_channels(outs);
        break;
      }
      case StepK::Flatten:
        h = t.flatten(h);
        break;
      case StepK::AsSeq:
        h = t.reshape(h, {h.shape[0], 1, h.shape[1]});
        break;
      case StepK::Drop:
        if (ctx.train && ctx.rate > 0.0f && ctx.rng) h = t.dropout(h, ctx.rate, true, *ctx.rng);
        break;
    }
  }
  return h;
}

}  // namespace

Tensor Model::forward(Tape& t, const Tensor& x, bool train, Rng* rng, float dropout_rate,
                      std::vector<Tensor>* bound_out) const {
  Tensor in = x;
  if (in.shape.size() == 2 && input_ch_ == 1 && in.shape[1] == input_len_) {
    in = t.reshape(in, {in.shape[0], 1, input_len_});
  }
  if (in.shape.size() != 3 || in.shape[1] != input_ch_ || in.shape[2] != input_len_)
    fail(Errc::ShapeMismatch, "forward: input must be [batch, " + std::to_string(input_ch_) +
                                  ", " + std::to_string(input_len_) + "], got " +
                                  shape_str(x.shape));
  std::vector<Tensor> bound;
  bound.reserve(params_.size());
  for (const auto& pb : params_) bound.push_back(t.leaf(pb.data, pb.shape));
  RunCtx ctx{t, bound, train, rng, dropout_rate};
  Tensor out = run_plan(*plan_, in, ctx);
  if (bound_out) *bound_out = std::move(bound);
  return out;
}

size_t Model::param_count() const {
  size_t n = 0;
  for (const auto& pb : params_) n += pb.data->size();
  return n;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string bin_path_for(const std::string& json_path) {
  auto dot = json_path.rfind('.');
  auto slash = json_path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return json_path + ".bin";
  return json_path.substr(0, dot) + ".bin";
}

std::string basename_of(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

std::string dirname_of(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash + 1);
}

}  // namespace

void Model::save(const std::string& json_path) const {
  nlohmann::ordered_json j;
  j["format"] = "tscx-model";
  j["version"] = 1;
  j["name"] = to_string(name_);
  j["arch"] = arch_;
  j["input_len"] = input_len_;
  j["input_ch"] = input_ch_;
  j["seed"] = seed_;
  j["kernel"] = kernel_opt_;
  j["width_divisor"] = width_div_;
  std::string bin = bin_path_for(json_path);
  j["blob"] = basename_of(bin);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& pb : params_) {
    nlohmann::ordered_json e;
    e["name"] = pb.name;
    e["shape"] = pb.shape;
    arr.push_back(std::move(e));
  }
  j["params"] = std::move(arr);

  std::ofstream jf(json_path);
  if (!jf) fail(Errc::IoError, "cannot write " + json_path);
  jf << j.dump(2) << "\n";
  jf.close();

  std::ofstream bf(bin, std::ios::binary);
  if (!bf) fail(Errc::IoError, "cannot write " + bin);
  for (const auto& pb : params_)
    bf.write(reinterpret_cast<const char*>(pb.data->data()),
             static_cast<std::streamsize>(pb.data->size() * sizeof(float)));
  if (!bf) fail(Errc::IoError, "short write to " + bin);
}

Model Model::load(const std::string& json_path) {
  std::ifstream jf(json_path);
  if (!jf) fail(Errc::IoError, "cannot read " + json_path);
  nlohmann::json j;
  try {
    jf >> j;
  } catch (const std::exception& e) {
    fail(Errc::IoError, std::string("bad model manifest: ") + e.what());
  }
  if (j.value("format", "") != "tscx-model" || j.value("version", 0) != 1)
    fail(Errc::IoError, "unsupported model manifest " + json_path);

  BuildOptions opt;
  opt.arch = j.at("arch").get<std::string>();
  opt.kernel = j.value("kernel", 0);
  opt.width_divisor = j.value("width_divisor", 1);
  Model m = build_model(model_name_from(j.at("name").get<std::string>()),
                        j.at("input_len").get<int>(), j.at("input_ch").get<int>(),
                        j.at("seed").get<uint64_t>(), opt);

  const auto& arr = j.at("params");
  if (arr.size() != m.params_.size())
    fail(Errc::IoError, "manifest parameter list does not match the architecture");
  for (size_t i = 0; i < m.params_.size(); ++i) {
    auto shape = arr[i].at("shape").get<Shape>();
    if (shape != m.params_[i].shape)
      fail(Errc::IoError, "manifest shape mismatch for " + m.params_[i].name);
  }

  std::string bin = dirname_of(json_path) + j.at("blob").get<std::string>();
  std::ifstream bf(bin, std::ios::binary);
  if (!bf) fail(Errc::IoError, "cannot read " + bin);
  for (auto& pb : m.params_) {
    bf.read(reinterpret_cast<char*>(pb.data->data()),
            static_cast<std::streamsize>(pb.data->size() * sizeof(float)));
    if (bf.gcount() != static_cast<std::streamsize>(pb.data->size() * sizeof(float)))
      fail(Errc::IoError, "parameter blob truncated: " + bin);
  }
  char extra;
  if (bf.read(&extra, 1)) fail(Errc::IoError, "parameter blob has trailing bytes: " + bin);
  return m;
}

}  // namespace tscx
