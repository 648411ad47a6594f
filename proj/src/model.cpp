#include "gate/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gate/error.hpp"
#include "gate/rng.hpp"
#include "gate/threads.hpp"

namespace gate {

// ---- enums ------------------------------------------------------------------------

std::string to_string(AttentionMode m) { return m == AttentionMode::kMultiDim ? "multi_dim" : "vanilla"; }

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kAeOnly: return "ae_only";
    case Ablation::kAeWordGate: return "ae_word_gate";
    case Ablation::kFull: return "full";
  }
  return "full";
}

std::string to_string(NeighborGrad g) { return g == NeighborGrad::kFlow ? "flow" : "stop"; }
std::string to_string(OutputActivation a) { return a == OutputActivation::kTanh ? "tanh" : "sigmoid"; }

AttentionMode parse_attention_mode(const std::string& s) {
  if (s == "multi_dim") return AttentionMode::kMultiDim;
  if (s == "vanilla") return AttentionMode::kVanilla;
  throw ConfigError("attention must be multi_dim or vanilla, got '" + s + "'");
}

Ablation parse_ablation(const std::string& s) {
  if (s == "ae_only") return Ablation::kAeOnly;
  if (s == "ae_word_gate") return Ablation::kAeWordGate;
  if (s == "full") return Ablation::kFull;
  throw ConfigError("ablation must be ae_only, ae_word_gate or full, got '" + s + "'");
}

NeighborGrad parse_neighbor_grad(const std::string& s) {
  if (s == "flow") return NeighborGrad::kFlow;
  if (s == "stop") return NeighborGrad::kStop;
  throw ConfigError("neighbor_grad must be flow or stop, got '" + s + "'");
}

OutputActivation parse_output_activation(const std::string& s) {
  if (s == "tanh") return OutputActivation::kTanh;
  if (s == "sigmoid") return OutputActivation::kSigmoid;
  throw ConfigError("output activation must be tanh or sigmoid, got '" + s + "'");
}

void ModelHyper::validate() const {
  if (!(rho > 1.0)) throw ConfigError("rho must be > 1 (got " + std::to_string(rho) + ")");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (h1 == 0 || h == 0) throw ConfigError("hidden widths h1 and h must be >= 1");
  if (d_a == 0) throw ConfigError("d_a must be >= 1");
  if (max_len == 0) throw ConfigError("max_len must be >= 1");
  if (num_users == 0 || num_items == 0) throw ConfigError("model needs at least one user and one item");
  if (uses_content() && vocab_size <= kFirstWordToken) throw ConfigError("content branch needs a non-empty vocabulary");
}

// ---- parameters -------------------------------------------------------------------

std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(const ModelHyper& hp) {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out = {
      {slot::W1, {hp.h1, hp.num_users}}, {slot::b1, {hp.h1, 1}},
      {slot::W2, {hp.h, hp.h1}},         {slot::b2, {hp.h, 1}},
      {slot::W3, {hp.h1, hp.h}},         {slot::b3, {hp.h1, 1}},
      {slot::W4, {hp.num_users, hp.h1}}, {slot::b4, {hp.num_users, 1}},
  };
  if (hp.uses_content()) {
    out.push_back({slot::E, {hp.h, hp.vocab_size}});
    out.push_back({slot::Wa2, {hp.h, hp.h}});
    out.push_back({slot::ba2, {hp.h, 1}});
    if (hp.attention == AttentionMode::kMultiDim) {
      out.push_back({slot::Wa1, {hp.d_a, hp.h}});
      out.push_back({slot::ba1, {hp.d_a, 1}});
      out.push_back({slot::wt, {hp.d_a, 1}});
    } else {
      out.push_back({slot::wa1, {hp.h, 1}});
    }
    out.push_back({slot::Wg1, {hp.h, hp.h}});
    out.push_back({slot::Wg2, {hp.h, hp.h}});
    out.push_back({slot::bg, {hp.h, 1}});
  }
  if (hp.uses_neighbors()) out.push_back({slot::Wn, {hp.h, hp.h}});
  std::sort(out.begin(), out.end());
  return out;
}

bool is_regularized(const std::string& s) {
  return s == slot::W1 || s == slot::W2 || s == slot::W3 || s == slot::W4 || s == slot::Wa1 ||
         s == slot::Wa2 || s == slot::Wg1 || s == slot::Wg2 || s == slot::Wn || s == slot::wt ||
         s == slot::wa1;
}

namespace {

bool is_bias(const std::string& s) {
  return s == slot::b1 || s == slot::b2 || s == slot::b3 || s == slot::b4 || s == slot::ba1 ||
         s == slot::ba2 || s == slot::bg;
}

}  // namespace

ParameterSet init_parameters(const ModelHyper& hp, std::uint64_t seed) {
  hp.validate();
  ParameterSet params;
  Rng rng(mix_seed(seed, 0x1417));
  for (const auto& [name, shape] : parameter_layout(hp)) {
    Matrix m(shape.first, shape.second);
    if (!is_bias(name)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape.first + shape.second));
      for (double& x : m.data()) x = rng.uniform(-limit, limit);
    }
    params.add(name, std::move(m));
  }
  return params;
}

void check_parameters(const ModelHyper& hp, const ParameterSet& params) {
  const auto layout = parameter_layout(hp);
  if (layout.size() != params.slots().size()) {
    throw ConfigError("parameter set has " + std::to_string(params.slots().size()) +
                      " slots; configuration expects " + std::to_string(layout.size()));
  }
  for (const auto& [name, shape] : layout) {
    if (!params.contains(name)) throw ConfigError("parameter set lacks slot '" + name + "'");
    const auto& v = params.value(name);
    if (v.rows() != shape.first || v.cols() != shape.second) {
      throw ConfigError("slot '" + name + "' has shape " + v.shape_string() + "; configuration expects (" +
                        std::to_string(shape.first) + "x" + std::to_string(shape.second) + ")");
    }
  }
}

// ---- single-item ops --------------------------------------------------------------

namespace {

void tanh_inplace(std::span<double> v) {
  for (double& x : v) x = std::tanh(x);
}

Vector embedding(const Matrix& e, Id token) {
  if (token >= e.cols()) {
    throw ShapeError("token id " + std::to_string(token) + " outside vocabulary of size " + std::to_string(e.cols()));
  }
  Vector col(e.rows());
  for (std::size_t r = 0; r < e.rows(); ++r) col[r] = e(r, token);
  return col;
}

void add_to_column(Matrix& e, Id token, std::span<const double> v, double alpha = 1.0) {
  for (std::size_t r = 0; r < e.rows(); ++r) e(r, token) += alpha * v[r];
}

Vector to_vec(std::span<const double> s) { return Vector(s.begin(), s.end()); }

double act_out(double x, OutputActivation a) { return a == OutputActivation::kTanh ? std::tanh(x) : sigmoid(x); }

// Derivative of the output activation expressed through its output.
double act_out_grad(double y, OutputActivation a) {
  return a == OutputActivation::kTanh ? 1.0 - y * y : y * (1.0 - y);
}

RatingEncoding finish_encoding(Vector p1, const ParameterSet& params) {
  RatingEncoding enc;
  tanh_inplace(p1);
  enc.z1 = std::move(p1);
  enc.zr = to_vec(params.value(slot::b2).data());
  gemv(params.value(slot::W2), enc.z1, enc.zr, true);
  tanh_inplace(enc.zr);
  return enc;
}

}  // namespace

RatingEncoding encode_ratings(std::span<const double> r, const ParameterSet& params) {
  const auto& w1 = params.value(slot::W1);
  if (r.size() != w1.cols()) {
    throw ShapeError("encode_ratings: rating vector has length " + std::to_string(r.size()) + ", expected " +
                     std::to_string(w1.cols()));
  }
  Vector p1 = to_vec(params.value(slot::b1).data());
  gemv(w1, r, p1, true);
  return finish_encoding(std::move(p1), params);
}

RatingEncoding encode_rating_ids(std::span<const Id> raters, const ParameterSet& params) {
  const auto& w1 = params.value(slot::W1);
  Vector p1 = to_vec(params.value(slot::b1).data());
  for (std::size_t k = 0; k < w1.rows(); ++k) {
    const auto row = w1.row(k);
    double s = 0.0;
    for (Id u : raters) s += row[u];
    p1[k] += s;
  }
  return finish_encoding(std::move(p1), params);
}

namespace {

// Shared body of both attention variants; `multi` selects d_a-row scoring.
WordAttention attend(std::span<const Id> tokens, const ParameterSet& params, bool multi) {
  const auto& e = params.value(slot::E);
  const auto& wa2 = params.value(slot::Wa2);
  const auto ba2 = params.value(slot::ba2).data();
  const std::size_t h = e.rows();
  const std::size_t rows = multi ? params.value(slot::Wa1).rows() : 1;
  const std::size_t l = tokens.size();

  std::vector<std::size_t> valid;
  for (std::size_t j = 0; j < l; ++j)
    if (tokens[j] != kPadToken) valid.push_back(j);
  if (valid.empty()) throw DataError("word attention: document has no non-padding tokens");

  // Pre-softmax scores; padded positions stay at -inf.
  Matrix pre(rows, l, -std::numeric_limits<double>::infinity());
  std::vector<Vector> emb(l);
  for (std::size_t j : valid) {
    emb[j] = embedding(e, tokens[j]);
    Vector t = to_vec(ba2);
    gemv(wa2, emb[j], t, true);
    tanh_inplace(t);
    if (multi) {
      Vector s = to_vec(params.value(slot::ba1).data());
      gemv(params.value(slot::Wa1), t, s, true);
      for (std::size_t k = 0; k < rows; ++k) pre(k, j) = s[k];
    } else {
      pre(0, j) = dot(params.value(slot::wa1).data(), t);
    }
  }

  WordAttention out;
  out.attention = Matrix(rows, l);
  for (std::size_t k = 0; k < rows; ++k) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j : valid) mx = std::max(mx, pre(k, j));
    double sum = 0.0;
    for (std::size_t j : valid) sum += (out.attention(k, j) = std::exp(pre(k, j) - mx));
    for (std::size_t j : valid) out.attention(k, j) /= sum;
  }

  out.pooled = Matrix(rows, h);
  for (std::size_t k = 0; k < rows; ++k)
    for (std::size_t j : valid) axpy(out.attention(k, j), emb[j], out.pooled.row(k));

  if (multi) {
    out.zc.assign(h, 0.0);
    gemv_t(out.pooled, params.value(slot::wt).data(), out.zc);
    tanh_inplace(out.zc);
  } else {
    out.zc = to_vec(out.pooled.row(0));
  }
  return out;
}

}  // namespace

WordAttention word_attention_multi(std::span<const Id> tokens, const ParameterSet& params) {
  return attend(tokens, params, true);
}

WordAttention word_attention_vanilla(std::span<const Id> tokens, const ParameterSet& params) {
  return attend(tokens, params, false);
}

GateFusion gate_fuse(std::span<const double> zr, std::span<const double> zc, const ParameterSet& params) {
  const auto& wg1 = params.value(slot::Wg1);
  if (zr.size() != wg1.cols() || zc.size() != wg1.cols()) {
    throw ShapeError("gate_fuse: zr[" + std::to_string(zr.size()) + "] / zc[" + std::to_string(zc.size()) +
                     "] do not match gate width " + std::to_string(wg1.cols()));
  }
  GateFusion g;
  g.gate = to_vec(params.value(slot::bg).data());
  gemv(wg1, zr, g.gate, true);
  gemv(params.value(slot::Wg2), zc, g.gate, true);
  g.zg.resize(zr.size());
  for (std::size_t c = 0; c < zr.size(); ++c) {
    g.gate[c] = sigmoid(g.gate[c]);
    g.zg[c] = g.gate[c] * zr[c] + (1.0 - g.gate[c]) * zc[c];
  }
  return g;
}

NeighborAttention neighbor_attention(std::span<const double> zg_target,
                                     const std::vector<std::span<const double>>& zg_neighbors,
                                     const ParameterSet& params) {
  NeighborAttention out;
  out.zn.assign(zg_target.size(), 0.0);
  if (zg_neighbors.empty()) return out;
  // s_j = tanh(zi^T Wn zj) = tanh((Wn^T zi) . zj)
  Vector proj(zg_target.size());
  gemv_t(params.value(slot::Wn), zg_target, proj);
  out.scores.resize(zg_neighbors.size());
  for (std::size_t j = 0; j < zg_neighbors.size(); ++j) out.scores[j] = std::tanh(dot(proj, zg_neighbors[j]));
  out.weights = softmax(out.scores);
  for (std::size_t j = 0; j < zg_neighbors.size(); ++j) axpy(out.weights[j], zg_neighbors[j], out.zn);
  return out;
}

Decoded decode(std::span<const double> z, std::span<const double> zn, const ParameterSet& params,
               Ablation ablation, OutputActivation output) {
  const auto& w3 = params.value(slot::W3);
  const auto& w4 = params.value(slot::W4);
  if (z.size() != w3.cols()) throw ShapeError("decode: input width " + std::to_string(z.size()) + " != " + std::to_string(w3.cols()));
  Decoded d;
  d.z3g = to_vec(params.value(slot::b3).data());
  gemv(w3, z, d.z3g, true);
  tanh_inplace(d.z3g);
  Vector hidden = d.z3g;
  if (ablation == Ablation::kFull) {
    if (zn.size() != w3.cols()) throw ShapeError("decode: neighbor width " + std::to_string(zn.size()) + " != " + std::to_string(w3.cols()));
    d.z3n = to_vec(params.value(slot::b3).data());
    gemv(w3, zn, d.z3n, true);
    tanh_inplace(d.z3n);
    axpy(1.0, d.z3n, hidden);
  }
  // W4 z3g + W4 z3n = W4 (z3g + z3n)
  d.r_hat = to_vec(params.value(slot::b4).data());
  gemv(w4, hidden, d.r_hat, true);
  for (double& x : d.r_hat) x = act_out(x, output);
  return d;
}

double weighted_loss(std::span<const double> r_hat, std::span<const double> r, double rho) {
  if (r_hat.size() != r.size()) throw ShapeError("weighted_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t u = 0; u < r.size(); ++u) {
    const double c = r[u] == 1.0 ? rho : 1.0;
    const double d = c * (r[u] - r_hat[u]);
    loss += d * d;
  }
  if (!std::isfinite(loss)) throw NumericError("weighted_loss: non-finite loss");
  return loss;
}

double regularizer(const ParameterSet& params, double lambda) {
  double s = 0.0;
  for (const auto& [name, sl] : params.slots())
    if (is_regularized(name)) s += dot(sl.value.data(), sl.value.data());
  return lambda * s;
}

double weighted_loss(std::span<const double> r_hat, std::span<const double> r, double rho,
                     const ParameterSet& params, double lambda) {
  return weighted_loss(r_hat, r, rho) + regularizer(params, lambda);
}

// ---- batched --------------------------------------------------------------------

TokenScores compute_token_scores(const ModelHyper& hp, const ParameterSet& params) {
  const auto& e = params.value(slot::E);
  const auto& wa2 = params.value(slot::Wa2);
  const auto ba2 = params.value(slot::ba2).data();
  const bool multi = hp.attention == AttentionMode::kMultiDim;
  const std::size_t v = e.cols(), h = e.rows();
  TokenScores ts;
  ts.tanh_act = Matrix(v, h);
  ts.scores = Matrix(v, multi ? hp.d_a : 1);
  parallel_for(v, [&](std::size_t t) {
    auto act = ts.tanh_act.row(t);
    std::copy(ba2.begin(), ba2.end(), act.begin());
    const Vector emb = embedding(e, static_cast<Id>(t));
    gemv(wa2, emb, act, true);
    tanh_inplace(act);
    auto s = ts.scores.row(t);
    if (multi) {
      const auto ba1 = params.value(slot::ba1).data();
      std::copy(ba1.begin(), ba1.end(), s.begin());
      gemv(params.value(slot::Wa1), act, s, true);
    } else {
      s[0] = dot(params.value(slot::wa1).data(), act);
    }
  });
  return ts;
}

namespace {

// Attention pooling of one document from cached token scores.
struct Pooled {
  Matrix attention;  // rows x l
  Vector agg;        // per-position weight on the embedding: sum_k wt_k A_kj (or a_j)
  Vector zc;
};

Pooled pool_content(const ModelHyper& hp, const ParameterSet& params, const TokenScores& ts,
                    std::span<const Id> doc) {
  const bool multi = hp.attention == AttentionMode::kMultiDim;
  const std::size_t rows = ts.scores.cols(), l = doc.size();
  const auto& e = params.value(slot::E);
  Pooled p;
  p.attention = Matrix(rows, l);
  for (std::size_t k = 0; k < rows; ++k) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Id t : doc) mx = std::max(mx, ts.scores(t, k));
    double sum = 0.0;
    for (std::size_t j = 0; j < l; ++j) sum += (p.attention(k, j) = std::exp(ts.scores(doc[j], k) - mx));
    for (std::size_t j = 0; j < l; ++j) p.attention(k, j) /= sum;
  }
  p.agg.assign(l, 0.0);
  if (multi) {
    const auto wt = params.value(slot::wt).data();
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t j = 0; j < l; ++j) p.agg[j] += wt[k] * p.attention(k, j);
  } else {
    for (std::size_t j = 0; j < l; ++j) p.agg[j] = p.attention(0, j);
  }
  p.zc.assign(e.rows(), 0.0);
  for (std::size_t j = 0; j < l; ++j)
    for (std::size_t r = 0; r < e.rows(); ++r) p.zc[r] += p.agg[j] * e(r, doc[j]);
  if (multi) tanh_inplace(p.zc);
  return p;
}

ItemEncoding encode_item(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                         const TokenScores* ts, Id item) {
  ItemEncoding enc;
  enc.item = item;
  auto r = encode_rating_ids(data.ratings->users_of(item), params);
  enc.z1 = std::move(r.z1);
  enc.zr = std::move(r.zr);
  if (hp.uses_content()) {
    enc.zc = pool_content(hp, params, *ts, data.corpus->doc(item)).zc;
    auto g = gate_fuse(enc.zr, enc.zc, params);
    enc.gate = std::move(g.gate);
    enc.zg = std::move(g.zg);
  } else {
    enc.zg = enc.zr;
  }
  return enc;
}

void check_data(const ModelHyper& hp, const ModelData& data) {
  if (!data.ratings) throw std::invalid_argument("model data lacks ratings");
  if (data.ratings->num_users() != hp.num_users || data.ratings->num_items() != hp.num_items) {
    throw ConfigError("ratings are " + std::to_string(data.ratings->num_users()) + "x" +
                      std::to_string(data.ratings->num_items()) + " but model expects " +
                      std::to_string(hp.num_users) + "x" + std::to_string(hp.num_items));
  }
  if (hp.uses_content()) {
    if (!data.corpus) throw std::invalid_argument("model data lacks a corpus");
    if (data.corpus->num_items() != hp.num_items || data.corpus->vocab_size() != hp.vocab_size) {
      throw ConfigError("corpus size does not match model configuration");
    }
  }
  if (hp.uses_neighbors()) {
    if (!data.graph) throw std::invalid_argument("full model needs a neighbor graph");
    if (data.graph->num_items() != hp.num_items) throw ConfigError("neighbor graph size does not match item count");
  }
}

}  // namespace

ForwardTrace forward(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                     std::span<const Id> batch, const ForwardOptions& opts) {
  check_data(hp, data);
  ForwardTrace tr;
  tr.batch.assign(batch.begin(), batch.end());
  tr.closure = tr.batch;
  if (hp.uses_neighbors()) {
    for (Id i : batch)
      for (Id j : data.graph->of(i)) tr.closure.push_back(j);
  }
  std::sort(tr.closure.begin(), tr.closure.end());
  tr.closure.erase(std::unique(tr.closure.begin(), tr.closure.end()), tr.closure.end());
  for (std::size_t k = 0; k < tr.closure.size(); ++k) {
    if (tr.closure[k] >= hp.num_items) throw ShapeError("item id " + std::to_string(tr.closure[k]) + " out of range");
    tr.closure_index.emplace(tr.closure[k], k);
  }

  if (hp.uses_content()) tr.tokens = compute_token_scores(hp, params);
  tr.encodings.resize(tr.closure.size());
  parallel_for(tr.closure.size(), [&](std::size_t k) {
    tr.encodings[k] = encode_item(hp, params, data, &tr.tokens, tr.closure[k]);
  });

  std::vector<ItemEncoding> frozen;
  const bool use_frozen = opts.neighbor_params != nullptr && hp.uses_neighbors();
  if (use_frozen) {
    TokenScores fts;
    if (hp.uses_content()) fts = compute_token_scores(hp, *opts.neighbor_params);
    frozen.resize(tr.closure.size());
    parallel_for(tr.closure.size(), [&](std::size_t k) {
      frozen[k] = encode_item(hp, *opts.neighbor_params, data, &fts, tr.closure[k]);
    });
  }
  const auto& neighbor_role = use_frozen ? frozen : tr.encodings;

  tr.outputs.resize(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    auto& out = tr.outputs[b];
    out.item = batch[b];
    const auto& self = tr.encodings[tr.closure_index.at(batch[b])];
    if (hp.uses_neighbors()) {
      const auto nb = data.graph->of(batch[b]);
      out.neighbors.assign(nb.begin(), nb.end());
      std::vector<std::span<const double>> zs;
      zs.reserve(nb.size());
      for (Id j : nb) zs.emplace_back(neighbor_role[tr.closure_index.at(j)].zg);
      out.neighbor = neighbor_attention(self.zg, zs, params);
    }
    out.decoded = decode(self.zg, out.neighbor.zn, params, hp.ablation, hp.output);
  });
  return tr;
}

double batch_objective(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                       const ForwardTrace& trace) {
  double loss = 0.0;
  for (const auto& out : trace.outputs) {
    const auto r = data.ratings->item_column(out.item);
    loss += weighted_loss(out.decoded.r_hat, r, hp.rho);
  }
  loss += regularizer(params, hp.lambda);
  if (!std::isfinite(loss)) throw NumericError("batch objective is not finite");
  return loss;
}

double objective(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                 std::span<const Id> batch, const ParameterSet* frozen) {
  ForwardOptions opts;
  if (hp.neighbor_grad == NeighborGrad::kStop) opts.neighbor_params = frozen;
  const auto trace = forward(hp, params, data, batch, opts);
  return batch_objective(hp, params, data, trace);
}

Gradients backward(const ModelHyper& hp, const ParameterSet& params, const ModelData& data,
                   const ForwardTrace& tr) {
  Gradients g = params.zero_gradients();
  const bool flow = hp.neighbor_grad == NeighborGrad::kFlow;
  const std::size_t h = hp.h;

  const auto& w3 = params.value(slot::W3);
  const auto& w4 = params.value(slot::W4);
  auto& gW3 = g.at(slot::W3);
  auto& gW4 = g.at(slot::W4);
  auto gb3 = g.at(slot::b3).data();
  auto gb4 = g.at(slot::b4).data();

  // dL/dzg per closure item.
  std::vector<Vector> dz(tr.closure.size(), Vector(h, 0.0));

  Vector dp4(hp.num_users), dz3(hp.h1), dp3(hp.h1), dzn(h), hidden(hp.h1);
  for (const auto& out : tr.outputs) {
    const std::size_t self = tr.closure_index.at(out.item);
    const auto& enc = tr.encodings[self];
    const auto& d = out.decoded;
    const auto r = data.ratings->item_column(out.item);
    for (std::size_t u = 0; u < hp.num_users; ++u) {
      const double c = r[u] == 1.0 ? hp.rho : 1.0;
      const double dr = -2.0 * c * c * (r[u] - d.r_hat[u]);
      dp4[u] = dr * act_out_grad(d.r_hat[u], hp.output);
    }
    hidden = d.z3g;
    if (hp.uses_neighbors()) axpy(1.0, d.z3n, hidden);
    add_outer(gW4, dp4, hidden);
    axpy(1.0, dp4, gb4);
    gemv_t(w4, dp4, dz3);

    for (std::size_t k = 0; k < hp.h1; ++k) dp3[k] = dz3[k] * (1.0 - d.z3g[k] * d.z3g[k]);
    add_outer(gW3, dp3, enc.zg);
    axpy(1.0, dp3, gb3);
    gemv_t(w3, dp3, dz[self], true);

    if (!hp.uses_neighbors()) continue;
    for (std::size_t k = 0; k < hp.h1; ++k) dp3[k] = dz3[k] * (1.0 - d.z3n[k] * d.z3n[k]);
    add_outer(gW3, dp3, out.neighbor.zn);
    axpy(1.0, dp3, gb3);
    if (out.neighbors.empty()) continue;
    gemv_t(w3, dp3, dzn);

    const auto& a = out.neighbor.weights;
    const auto& s = out.neighbor.scores;
    const std::size_t nn = out.neighbors.size();
    Vector da(nn);
    double mean = 0.0;
    for (std::size_t j = 0; j < nn; ++j) {
      const auto& zj = tr.encodings[tr.closure_index.at(out.neighbors[j])].zg;
      da[j] = dot(zj, dzn);
      mean += a[j] * da[j];
    }
    const auto& wn = params.value(slot::Wn);
    auto& gWn = g.at(slot::Wn);
    Vector tmp(h);
    for (std::size_t j = 0; j < nn; ++j) {
      const std::size_t jx = tr.closure_index.at(out.neighbors[j]);
      const auto& zj = tr.encodings[jx].zg;
      if (flow) axpy(a[j], dzn, dz[jx]);
      const double dt = a[j] * (da[j] - mean) * (1.0 - s[j] * s[j]);
      if (dt == 0.0) continue;
      gemv(wn, zj, tmp);
      axpy(dt, tmp, dz[self]);
      if (flow) {
        gemv_t(wn, enc.zg, tmp);
        axpy(dt, tmp, dz[jx]);
      }
      add_outer(gWn, enc.zg, zj, dt);
    }
  }

  // Encoder side, in closure (item id) order.
  const auto& w2 = params.value(slot::W2);
  auto& gW1 = g.at(slot::W1);
  auto& gW2 = g.at(slot::W2);
  auto gb1 = g.at(slot::b1).data();
  auto gb2 = g.at(slot::b2).data();
  Matrix dscores;
  if (hp.uses_content()) dscores = Matrix(tr.tokens.scores.rows(), tr.tokens.scores.cols());
  Vector dzr(h), dzc(h), dpg(h), dp2(h), dz1(hp.h1), dq(h);

  for (std::size_t k = 0; k < tr.closure.size(); ++k) {
    const auto& enc = tr.encodings[k];
    const auto& dzg = dz[k];
    if (std::all_of(dzg.begin(), dzg.end(), [](double x) { return x == 0.0; })) continue;

    if (hp.uses_content()) {
      const auto& G = enc.gate;
      for (std::size_t c = 0; c < h; ++c) {
        const double dG = dzg[c] * (enc.zr[c] - enc.zc[c]);
        dpg[c] = dG * G[c] * (1.0 - G[c]);
        dzr[c] = dzg[c] * G[c];
        dzc[c] = dzg[c] * (1.0 - G[c]);
      }
      add_outer(g.at(slot::Wg1), dpg, enc.zr);
      add_outer(g.at(slot::Wg2), dpg, enc.zc);
      axpy(1.0, dpg, g.at(slot::bg).data());
      gemv_t(params.value(slot::Wg1), dpg, dzr, true);
      gemv_t(params.value(slot::Wg2), dpg, dzc, true);

      // Content branch, recomputed from the token cache.
      const auto doc = data.corpus->doc(enc.item);
      const auto pooled = pool_content(hp, params, tr.tokens, doc);
      const bool multi = hp.attention == AttentionMode::kMultiDim;
      for (std::size_t c = 0; c < h; ++c) dq[c] = multi ? dzc[c] * (1.0 - enc.zc[c] * enc.zc[c]) : dzc[c];
      const auto& e = params.value(slot::E);
      auto& gE = g.at(slot::E);
      const std::size_t l = doc.size();
      Vector proj(l);  // e_j . dq
      for (std::size_t j = 0; j < l; ++j) {
        double sacc = 0.0;
        for (std::size_t r = 0; r < h; ++r) sacc += e(r, doc[j]) * dq[r];
        proj[j] = sacc;
        add_to_column(gE, doc[j], dq, pooled.agg[j]);
      }
      const std::size_t rows = pooled.attention.rows();
      for (std::size_t a = 0; a < rows; ++a) {
        const double wk = multi ? params.value(slot::wt).data()[a] : 1.0;
        double mean = 0.0;
        for (std::size_t j = 0; j < l; ++j) mean += pooled.attention(a, j) * proj[j];
        if (multi) g.at(slot::wt).data()[a] += mean;
        for (std::size_t j = 0; j < l; ++j) {
          dscores(doc[j], a) += pooled.attention(a, j) * wk * (proj[j] - mean);
        }
      }
    } else {
      dzr = dzg;
    }

    for (std::size_t c = 0; c < h; ++c) dp2[c] = dzr[c] * (1.0 - enc.zr[c] * enc.zr[c]);
    add_outer(gW2, dp2, enc.z1);
    axpy(1.0, dp2, gb2);
    gemv_t(w2, dp2, dz1);
    for (std::size_t c = 0; c < hp.h1; ++c) dz1[c] *= 1.0 - enc.z1[c] * enc.z1[c];
    axpy(1.0, dz1, gb1);
    for (Id u : data.ratings->users_of(enc.item))
      for (std::size_t c = 0; c < hp.h1; ++c) gW1(c, u) += dz1[c];
  }

  // Token-level attention parameters.
  if (hp.uses_content()) {
    const bool multi = hp.attention == AttentionMode::kMultiDim;
    const auto& e = params.value(slot::E);
    const auto& wa2 = params.value(slot::Wa2);
    auto& gE = g.at(slot::E);
    auto& gWa2 = g.at(slot::Wa2);
    auto gba2 = g.at(slot::ba2).data();
    Vector dT(h), demb(h), emb(h);
    for (std::size_t t = 0; t < dscores.rows(); ++t) {
      const auto ds = dscores.row(t);
      if (std::all_of(ds.begin(), ds.end(), [](double x) { return x == 0.0; })) continue;
      const auto act = tr.tokens.tanh_act.row(t);
      if (multi) {
        add_outer(g.at(slot::Wa1), ds, act);
        axpy(1.0, ds, g.at(slot::ba1).data());
        gemv_t(params.value(slot::Wa1), ds, dT);
      } else {
        axpy(ds[0], act, g.at(slot::wa1).data());
        dT = to_vec(params.value(slot::wa1).data());
        for (double& x : dT) x *= ds[0];
      }
      for (std::size_t c = 0; c < h; ++c) dT[c] *= 1.0 - act[c] * act[c];
      for (std::size_t r = 0; r < h; ++r) emb[r] = e(r, t);
      add_outer(gWa2, dT, emb);
      axpy(1.0, dT, gba2);
      gemv_t(wa2, dT, demb);
      add_to_column(gE, static_cast<Id>(t), demb);
    }
  }

  for (auto& [name, grad] : g) {
    if (is_regularized(name)) axpy(2.0 * hp.lambda, params.value(name).data(), grad.data());
  }
  return g;
}

}  // namespace gate
