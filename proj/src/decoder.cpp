#include "finrag/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "finrag/autodiff.hpp"

namespace finrag::decoder {

using ad::Tape;
using NodeId = Tape::NodeId;

// ---------------------------------------------------------------------------
// parameters

DecoderParams DecoderParams::zeros(size_t dim) {
  DecoderParams p;
  p.dim = dim;
  p.op_emb = Matrix(dsl::kOpTokenCount, dim);
  p.const_emb = Matrix(dsl::kConstTokenCount, dim);
  p.step_emb = Matrix(dsl::kMaxStepRef + 1, dim);
  p.lstm_w = Matrix(4 * dim, dim);
  p.lstm_u = Matrix(4 * dim, dim);
  p.lstm_b.assign(4 * dim, 0.0);
  p.ctx_proj = Matrix(dim, 3 * dim);
  p.cand_proj = Matrix(dim, 2 * dim);
  p.att_input = Matrix(dim, dim);
  p.att_history = Matrix(dim, dim);
  p.att_reason = Matrix(dim, dim);
  return p;
}

DecoderParams DecoderParams::init(size_t dim, uint64_t seed) {
  DecoderParams p = zeros(dim);
  Rng rng(seed);
  auto fill = [&](std::vector<double>& v, double stddev) {
    for (double& x : v) x = rng.normal(0.0, stddev);
  };
  fill(p.op_emb.a, 0.3);
  fill(p.const_emb.a, 0.3);
  fill(p.step_emb.a, 0.3);
  double s = 1.0 / std::sqrt(static_cast<double>(dim));
  fill(p.lstm_w.a, s);
  fill(p.lstm_u.a, s);
  // forget-gate bias starts open
  for (size_t i = dim; i < 2 * dim; ++i) p.lstm_b[i] = 1.0;
  fill(p.ctx_proj.a, 1.0 / std::sqrt(3.0 * dim));
  fill(p.cand_proj.a, 1.0 / std::sqrt(2.0 * dim));
  fill(p.att_input.a, s);
  fill(p.att_history.a, s);
  fill(p.att_reason.a, s);
  return p;
}

std::vector<ParamView> param_blocks(DecoderParams& p) {
  return {
      {"op_emb", &p.op_emb.a},       {"const_emb", &p.const_emb.a},
      {"step_emb", &p.step_emb.a},   {"lstm_w", &p.lstm_w.a},
      {"lstm_u", &p.lstm_u.a},       {"lstm_b", &p.lstm_b},
      {"ctx_proj", &p.ctx_proj.a},   {"cand_proj", &p.cand_proj.a},
      {"att_input", &p.att_input.a}, {"att_history", &p.att_history.a},
      {"att_reason", &p.att_reason.a},
  };
}

// ---------------------------------------------------------------------------
// attention (standalone form)

AttentionResult attend(const std::vector<double>& query,
                       const std::vector<std::vector<double>>& keys, const Matrix& weights) {
  if (keys.empty()) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch, "attend needs at least one key");
  }
  if (query.size() != weights.rows) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch,
                       "query size does not match attention weights");
  }
  std::vector<double> scores(keys.size());
  for (size_t j = 0; j < keys.size(); ++j) {
    if (keys[j].size() != weights.cols) {
      throw DecoderError(DecoderError::Kind::DimensionMismatch,
                         "key size does not match attention weights");
    }
    double s = 0.0;
    for (size_t r = 0; r < weights.rows; ++r) {
      double wk = 0.0;
      for (size_t c = 0; c < weights.cols; ++c) wk += weights.at(r, c) * keys[j][c];
      s += query[r] * wk;
    }
    scores[j] = s;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  AttentionResult out;
  out.distribution.resize(keys.size());
  double z = 0.0;
  for (size_t j = 0; j < keys.size(); ++j) {
    out.distribution[j] = std::exp(scores[j] - mx);
    z += out.distribution[j];
  }
  for (double& d : out.distribution) d /= z;
  out.context.assign(keys[0].size(), 0.0);
  for (size_t j = 0; j < keys.size(); ++j) {
    for (size_t i = 0; i < out.context.size(); ++i) {
      out.context[i] += out.distribution[j] * keys[j][i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// computation graph

namespace {

struct Graph {
  Tape tape;
  size_t dim = 0;
  NodeId op_emb, const_emb, step_emb, input_emb;
  NodeId lstm_w, lstm_u, lstm_b, ctx_proj, cand_proj, att_input, att_history, att_reason;
  std::vector<NodeId> rows;
  std::vector<NodeId> input_keys;
};

Graph build_graph(const DecoderParams& p, const std::vector<RowSource>& sources,
                  const Matrix& input_emb, const std::vector<size_t>& input_keys,
                  bool with_grads) {
  if (input_emb.rows > 0 && input_emb.cols != p.dim) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch,
                       "input embedding columns != decoder dimension");
  }
  Graph g;
  g.dim = p.dim;
  auto put = [&](const std::vector<double>& v) {
    return with_grads ? g.tape.leaf(v) : g.tape.constant(v);
  };
  g.op_emb = put(p.op_emb.a);
  g.const_emb = put(p.const_emb.a);
  g.step_emb = put(p.step_emb.a);
  g.lstm_w = put(p.lstm_w.a);
  g.lstm_u = put(p.lstm_u.a);
  g.lstm_b = put(p.lstm_b);
  g.ctx_proj = put(p.ctx_proj.a);
  g.cand_proj = put(p.cand_proj.a);
  g.att_input = put(p.att_input.a);
  g.att_history = put(p.att_history.a);
  g.att_reason = put(p.att_reason.a);
  g.input_emb = g.tape.constant(input_emb.a);

  int d = static_cast<int>(p.dim);
  for (const RowSource& rs : sources) {
    NodeId block = -1;
    size_t limit = 0;
    switch (rs.block) {
      case RowSource::Block::OpEmb: block = g.op_emb; limit = p.op_emb.rows; break;
      case RowSource::Block::ConstEmb: block = g.const_emb; limit = p.const_emb.rows; break;
      case RowSource::Block::StepEmb: block = g.step_emb; limit = p.step_emb.rows; break;
      case RowSource::Block::Input: block = g.input_emb; limit = input_emb.rows; break;
    }
    if (rs.row >= limit) {
      throw DecoderError(DecoderError::Kind::DimensionMismatch,
                         "candidate row index out of range");
    }
    g.rows.push_back(g.tape.slice(block, static_cast<int>(rs.row) * d, d));
  }
  for (size_t k : input_keys) {
    if (k >= g.rows.size()) {
      throw DecoderError(DecoderError::Kind::DimensionMismatch, "input key out of range");
    }
    g.input_keys.push_back(g.rows[k]);
  }
  return g;
}

std::pair<NodeId, NodeId> lstm_step(Graph& g, NodeId x, NodeId h, NodeId c) {
  int d = static_cast<int>(g.dim);
  NodeId z = g.tape.add(g.tape.add(g.tape.matvec(g.lstm_w, x, 4 * d, d),
                                   g.tape.matvec(g.lstm_u, h, 4 * d, d)),
                        g.lstm_b);
  NodeId gi = g.tape.sigmoid(g.tape.slice(z, 0, d));
  NodeId gf = g.tape.sigmoid(g.tape.slice(z, d, d));
  NodeId gg = g.tape.tanh(g.tape.slice(z, 2 * d, d));
  NodeId go = g.tape.sigmoid(g.tape.slice(z, 3 * d, d));
  NodeId c2 = g.tape.add(g.tape.mul(gf, c), g.tape.mul(gi, gg));
  NodeId h2 = g.tape.mul(go, g.tape.tanh(c2));
  return {h2, c2};
}

NodeId attention_context(Graph& g, NodeId weights, NodeId query,
                         const std::vector<NodeId>& keys) {
  int d = static_cast<int>(g.dim);
  NodeId u = g.tape.matvec_t(weights, query, d, d);
  NodeId scores = g.tape.dots(u, keys);
  NodeId dist = g.tape.softmax(scores);
  return g.tape.weighted_sum(dist, keys);
}

// Attention over inputs and history, the combined context projection, then
// one logit per candidate row.
NodeId build_logits(Graph& g, NodeId h, const std::vector<NodeId>& history) {
  int d = static_cast<int>(g.dim);
  const std::vector<NodeId>& inputs = g.input_keys.empty() ? g.rows : g.input_keys;
  NodeId input_ctx = attention_context(g, g.att_input, h, inputs);
  std::vector<NodeId> hist = history.empty() ? std::vector<NodeId>{h} : history;
  NodeId history_ctx = attention_context(g, g.att_history, h, hist);
  NodeId combined = g.tape.matvec(g.ctx_proj, g.tape.concat({input_ctx, history_ctx, h}),
                                  d, 3 * d);
  NodeId reason_ctx = attention_context(g, g.att_reason, h, inputs);
  std::vector<NodeId> cand;
  cand.reserve(g.rows.size());
  for (NodeId r : g.rows) {
    NodeId pair = g.tape.concat({r, g.tape.mul(r, reason_ctx)});
    cand.push_back(g.tape.matvec(g.cand_proj, pair, d, 2 * d));
  }
  return g.tape.dots(combined, cand);
}

void validate_task(const DecodeTask& t) {
  if (t.gold.empty()) {
    throw DecoderError(DecoderError::Kind::InvalidGold, "gold sequence is empty");
  }
  if (t.step_masks.size() != t.gold.size()) {
    throw DecoderError(DecoderError::Kind::InvalidGold,
                       "one mask per gold token is required");
  }
  if (t.go_row >= t.rows.size()) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch, "go_row out of range");
  }
  for (size_t i = 0; i < t.gold.size(); ++i) {
    if (t.gold[i] >= t.rows.size() || t.step_masks[i].size() != t.rows.size()) {
      throw DecoderError(DecoderError::Kind::InvalidGold, "gold/mask size mismatch");
    }
    if (!t.step_masks[i][t.gold[i]]) {
      throw DecoderError(DecoderError::Kind::InvalidGold,
                         "gold token " + std::to_string(t.gold[i]) + " at step " +
                             std::to_string(i) + " is masked out");
    }
  }
}

double run_task(const DecoderParams& p, const DecodeTask& t, DecoderParams* grads,
                const std::vector<std::vector<double>>* dropout_masks) {
  validate_task(t);
  Graph g = build_graph(p, t.rows, t.input_emb, t.input_keys, grads != nullptr);
  std::vector<double> zero(p.dim, 0.0);
  NodeId h = g.tape.constant(zero);
  NodeId c = g.tape.constant(zero);
  auto consume = [&](size_t row, size_t slot) {
    NodeId x = g.rows[row];
    if (dropout_masks && slot < dropout_masks->size()) {
      x = g.tape.mul(x, g.tape.constant((*dropout_masks)[slot]));
    }
    std::tie(h, c) = lstm_step(g, x, h, c);
  };
  consume(t.go_row, 0);

  std::vector<NodeId> history;
  std::vector<NodeId> losses;
  for (size_t step = 0; step < t.gold.size(); ++step) {
    NodeId logits = build_logits(g, h, history);
    losses.push_back(g.tape.masked_cross_entropy(logits, t.step_masks[step],
                                                 static_cast<int>(t.gold[step])));
    if (step + 1 < t.gold.size()) {
      consume(t.gold[step], step + 1);
      history.push_back(h);
    }
  }
  NodeId loss = g.tape.mean(losses);
  double value = g.tape.value(loss)[0];
  if (grads) {
    g.tape.backward(loss);
    auto views = param_blocks(*grads);
    const NodeId block_nodes[] = {g.op_emb,    g.const_emb, g.step_emb,  g.lstm_w,
                                  g.lstm_u,    g.lstm_b,    g.ctx_proj,  g.cand_proj,
                                  g.att_input, g.att_history, g.att_reason};
    for (size_t i = 0; i < views.size(); ++i) {
      const auto& gv = g.tape.grad(block_nodes[i]);
      for (size_t j = 0; j < gv.size(); ++j) (*views[i].data)[j] += gv[j];
    }
  }
  return value;
}

std::vector<RowSource> vocab_sources(const dsl::ProgramVocabulary& v) {
  std::vector<RowSource> out;
  size_t next_input = 0;
  for (const auto& e : v.entries()) {
    switch (e.kind) {
      case dsl::TokenKind::Op:
        out.push_back({RowSource::Block::OpEmb, static_cast<size_t>(e.op_or_const)});
        break;
      case dsl::TokenKind::Const:
        out.push_back({RowSource::Block::ConstEmb, static_cast<size_t>(e.op_or_const)});
        break;
      case dsl::TokenKind::Step:
        out.push_back({RowSource::Block::StepEmb, static_cast<size_t>(e.op_or_const)});
        break;
      case dsl::TokenKind::Number:
      case dsl::TokenKind::Row:
        out.push_back({RowSource::Block::Input, next_input++});
        break;
    }
  }
  return out;
}

std::vector<uint8_t> flags_from(const std::vector<size_t>& valid, size_t size) {
  std::vector<uint8_t> f(size, 0);
  for (size_t i : valid) {
    if (i >= size) {
      throw DecoderError(DecoderError::Kind::DimensionMismatch, "mask index out of range");
    }
    f[i] = 1;
  }
  return f;
}

}  // namespace

DecodeTask make_task(const CandidateSet& cands, const std::vector<size_t>& gold) {
  const auto& vocab = cands.vocab;
  if (cands.input_emb.rows != vocab.input_indices().size()) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch,
                       "one input embedding row per context entry is required");
  }
  DecodeTask t;
  t.rows = vocab_sources(vocab);
  t.input_emb = cands.input_emb;
  t.input_keys = vocab.input_indices();
  t.gold = gold;
  t.go_row = vocab.go_index();
  if (gold.empty() || gold.back() != vocab.eof_index()) {
    throw DecoderError(DecoderError::Kind::InvalidGold, "gold must end with EOF");
  }
  std::vector<size_t> prefix{vocab.go_index()};
  for (size_t tok : gold) {
    std::vector<size_t> valid;
    try {
      valid = dsl::valid_next_tokens(vocab, prefix);
    } catch (const dsl::DslError& e) {
      throw DecoderError(DecoderError::Kind::InvalidGold, e.what());
    }
    auto flags = flags_from(valid, vocab.size());
    if (!flags[tok]) {
      throw DecoderError(DecoderError::Kind::InvalidGold,
                         "gold token '" + vocab.token_at(tok).text + "' leaves the valid set");
    }
    t.step_masks.push_back(std::move(flags));
    prefix.push_back(tok);
  }
  return t;
}

double task_loss(const DecoderParams& p, const DecodeTask& task) {
  return run_task(p, task, nullptr, nullptr);
}

double task_loss_grads(const DecoderParams& p, const DecodeTask& task, DecoderParams& grads) {
  return run_task(p, task, &grads, nullptr);
}

double sequence_loss(const DecoderParams& p, const CandidateSet& cands,
                     const std::vector<size_t>& gold) {
  return task_loss(p, make_task(cands, gold));
}

// ---------------------------------------------------------------------------
// stepwise decoding

DecoderState init_state(const DecoderParams& p, const CandidateSet& cands) {
  Graph g = build_graph(p, vocab_sources(cands.vocab), cands.input_emb,
                        cands.vocab.input_indices(), false);
  std::vector<double> zero(p.dim, 0.0);
  NodeId h = g.tape.constant(zero);
  NodeId c = g.tape.constant(zero);
  std::tie(h, c) = lstm_step(g, g.rows[cands.vocab.go_index()], h, c);
  DecoderState st;
  st.hidden = g.tape.value(h);
  st.cell = g.tape.value(c);
  return st;
}

StepOutput decode_step(const DecoderParams& p, DecoderState& state, const CandidateSet& cands,
                       const std::vector<size_t>& valid_indices,
                       std::optional<size_t> forced) {
  if (valid_indices.empty()) {
    throw DecoderError(DecoderError::Kind::EmptyMask, "no valid tokens at this step");
  }
  if (state.hidden.size() != p.dim) {
    throw DecoderError(DecoderError::Kind::DimensionMismatch, "state does not match params");
  }
  Graph g = build_graph(p, vocab_sources(cands.vocab), cands.input_emb,
                        cands.vocab.input_indices(), false);
  NodeId h = g.tape.constant(state.hidden);
  NodeId c = g.tape.constant(state.cell);
  std::vector<NodeId> history;
  history.reserve(state.history.size());
  for (const auto& v : state.history) history.push_back(g.tape.constant(v));

  NodeId logits = build_logits(g, h, history);
  auto flags = flags_from(valid_indices, g.rows.size());
  StepOutput out;
  out.probs = ad::masked_softmax(g.tape.value(logits), flags);

  if (forced) {
    if (*forced >= flags.size() || !flags[*forced]) {
      throw DecoderError(DecoderError::Kind::InvalidGold,
                         "forced token is not in the valid set");
    }
    out.chosen = *forced;
  } else {
    size_t best = valid_indices[0];
    for (size_t i : valid_indices) {
      if (out.probs[i] > out.probs[best]) best = i;
    }
    out.chosen = best;
  }

  std::tie(h, c) = lstm_step(g, g.rows[out.chosen], h, c);
  state.hidden = g.tape.value(h);
  state.cell = g.tape.value(c);
  state.history.push_back(state.hidden);
  state.emitted.push_back(out.chosen);
  return out;
}

std::vector<size_t> generate_tokens(const DecoderParams& p, const CandidateSet& cands,
                                    size_t max_steps) {
  DecoderState state = init_state(p, cands);
  std::vector<size_t> prefix{cands.vocab.go_index()};
  for (size_t step = 0; step < max_steps; ++step) {
    auto valid = dsl::valid_next_tokens(cands.vocab, prefix);
    StepOutput out = decode_step(p, state, cands, valid);
    prefix.push_back(out.chosen);
    if (out.chosen == cands.vocab.eof_index()) {
      return std::vector<size_t>(prefix.begin() + 1, prefix.end());
    }
  }
  throw DecoderError(DecoderError::Kind::LengthExceeded,
                     "EOF not reached within " + std::to_string(max_steps) + " tokens");
}

dsl::Program generate(const DecoderParams& p, const CandidateSet& cands, size_t max_steps) {
  return dsl::tokens_to_program(cands.vocab, generate_tokens(p, cands, max_steps));
}

double sequence_accuracy(const DecoderParams& p, const std::vector<TrainingExample>& dataset,
                         size_t max_steps) {
  if (dataset.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& ex : dataset) {
    try {
      if (generate_tokens(p, ex.cands, max_steps) == ex.gold) ++hits;
    } catch (const DecoderError&) {
      // a decode that never terminates is simply wrong
    }
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// gradient check

double gradient_check(const DecoderParams& p, const DecodeTask& task, double epsilon) {
  DecoderParams analytic = DecoderParams::zeros(p.dim);
  task_loss_grads(p, task, analytic);

  DecoderParams work = p;
  auto work_views = param_blocks(work);
  auto grad_views = param_blocks(analytic);
  double max_err = 0.0;
  for (size_t b = 0; b < work_views.size(); ++b) {
    std::vector<double>& data = *work_views[b].data;
    const std::vector<double>& grad = *grad_views[b].data;
    for (size_t i = 0; i < data.size(); ++i) {
      double orig = data[i];
      data[i] = orig + epsilon;
      double up = task_loss(work, task);
      data[i] = orig - epsilon;
      double down = task_loss(work, task);
      data[i] = orig;
      double numeric = (up - down) / (2.0 * epsilon);
      double denom = std::max({1e-6, std::fabs(grad[i]), std::fabs(numeric)});
      max_err = std::max(max_err, std::fabs(grad[i] - numeric) / denom);
    }
  }
  return max_err;
}

// ---------------------------------------------------------------------------
// training

namespace {

void scale_blocks(DecoderParams& p, double factor) {
  for (auto& view : param_blocks(p)) {
    for (double& x : *view.data) x *= factor;
  }
}

double grad_norm(DecoderParams& p) {
  double sq = 0.0;
  for (auto& view : param_blocks(p)) {
    for (double x : *view.data) sq += x * x;
  }
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const DecoderParams& initial, const std::vector<TrainingExample>& dataset,
                  const TrainConfig& config) {
  if (dataset.empty()) {
    throw DecoderError(DecoderError::Kind::InvalidGold, "training dataset is empty");
  }
  std::vector<DecodeTask> tasks;
  tasks.reserve(dataset.size());
  for (const auto& ex : dataset) tasks.push_back(make_task(ex.cands, ex.gold));

  TrainResult result;
  result.params = initial;
  DecoderParams adam_m = DecoderParams::zeros(initial.dim);
  DecoderParams adam_v = DecoderParams::zeros(initial.dim);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  size_t adam_step = 0;
  double lr = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  size_t wait = 0;
  Rng rng(config.seed);

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t end = std::min(order.size(), start + config.batch_size);
      DecoderParams grads = DecoderParams::zeros(initial.dim);
      for (size_t i = start; i < end; ++i) {
        const DecodeTask& task = tasks[order[i]];
        std::vector<std::vector<double>> masks;
        std::vector<std::vector<double>>* masks_ptr = nullptr;
        if (config.dropout > 0.0) {
          double keep = 1.0 - config.dropout;
          masks.resize(task.gold.size());
          for (auto& m : masks) {
            m.resize(initial.dim);
            for (double& x : m) x = (rng.uniform() < config.dropout) ? 0.0 : 1.0 / keep;
          }
          masks_ptr = &masks;
        }
        double loss = run_task(result.params, task, &grads, masks_ptr);
        if (!std::isfinite(loss)) {
          throw DecoderError(DecoderError::Kind::NonFiniteLoss,
                             "non-finite loss on example '" + dataset[order[i]].id + "'");
        }
        loss_sum += loss;
      }
      scale_blocks(grads, 1.0 / static_cast<double>(end - start));
      double norm = grad_norm(grads);
      if (config.grad_clip_norm > 0.0 && norm > config.grad_clip_norm) {
        scale_blocks(grads, config.grad_clip_norm / norm);
      }
      ++adam_step;
      auto pv = param_blocks(result.params);
      auto gv = param_blocks(grads);
      auto mv = param_blocks(adam_m);
      auto vv = param_blocks(adam_v);
      double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step));
      double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step));
      for (size_t b = 0; b < pv.size(); ++b) {
        auto& w = *pv[b].data;
        auto& g = *gv[b].data;
        auto& m = *mv[b].data;
        auto& v = *vv[b].data;
        for (size_t j = 0; j < w.size(); ++j) {
          m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g[j];
          v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g[j] * g[j];
          w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kAdamEps);
        }
      }
    }
    double mean_loss = loss_sum / static_cast<double>(dataset.size());
    result.curve.push_back({epoch, mean_loss, lr});

    if (mean_loss < best * (1.0 - config.plateau_threshold)) {
      best = mean_loss;
      wait = 0;
    } else {
      ++wait;
      if (wait > config.plateau_patience) {
        lr *= config.plateau_factor;
        wait = 0;
      }
    }
    if (config.stop_at_full_accuracy && sequence_accuracy(result.params, dataset) == 1.0) {
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// checkpoints & curves

namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const DecoderParams& p,
                     const std::map<std::string, std::string>& meta) {
  nlohmann::ordered_json header;
  header["format"] = "finrag-decoder";
  header["version"] = 1;
  header["dim"] = p.dim;
  header["meta"] = meta;
  auto blocks = param_blocks(const_cast<DecoderParams&>(p));
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  for (const auto& b : blocks) {
    manifest.push_back({{"name", b.name}, {"size", b.data->size()}});
  }
  header["blocks"] = manifest;
  std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint, "cannot write '" + path + "'");
  }
  std::string prefix = "FDEC";
  put_u32(prefix, static_cast<uint32_t>(header_text.size()));
  out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& b : blocks) {
    for (double x : *b.data) {
      float f = static_cast<float>(x);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      char raw[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
      out.write(raw, 4);
    }
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecoderError(DecoderError::Kind::BadCheckpoint, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || bytes.compare(0, 4, "FDEC") != 0) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint, "'" + path + "' is not a checkpoint");
  }
  uint32_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + header_len) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint, "truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint,
                       std::string("bad checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.params = DecoderParams::zeros(header.at("dim").get<size_t>());
  if (header.contains("meta")) {
    for (auto it = header["meta"].begin(); it != header["meta"].end(); ++it) {
      ck.meta[it.key()] = it.value().get<std::string>();
    }
  }
  auto blocks = param_blocks(ck.params);
  size_t pos = 8 + header_len;
  const auto& manifest = header.at("blocks");
  if (manifest.size() != blocks.size()) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint, "unexpected block count");
  }
  for (size_t b = 0; b < blocks.size(); ++b) {
    const auto& entry = manifest[b];
    if (entry.at("name").get<std::string>() != blocks[b].name ||
        entry.at("size").get<size_t>() != blocks[b].data->size()) {
      throw DecoderError(DecoderError::Kind::BadCheckpoint,
                         "block '" + blocks[b].name + "' does not match checkpoint");
    }
    for (double& x : *blocks[b].data) {
      if (pos + 4 > bytes.size()) {
        throw DecoderError(DecoderError::Kind::BadCheckpoint, "truncated checkpoint data");
      }
      uint32_t bits = get_u32(bytes.data() + pos);
      float f;
      std::memcpy(&f, &bits, 4);
      x = static_cast<double>(f);
      pos += 4;
    }
  }
  return ck;
}

void write_loss_curve(const std::string& path, const std::vector<EpochStats>& curve) {
  std::ofstream out(path);
  if (!out) {
    throw DecoderError(DecoderError::Kind::BadCheckpoint, "cannot write '" + path + "'");
  }
  out << "epoch,mean_loss,learning_rate\n";
  for (const auto& e : curve) {
    out << e.epoch << ',' << format_number(e.mean_loss) << ',' << format_number(e.learning_rate)
        << '\n';
  }
}

}  // namespace finrag::decoder
