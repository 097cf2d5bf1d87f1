#include "finrag/autodiff.hpp"

#include <cmath>
#include <limits>

namespace finrag::ad {

Tape::NodeId Tape::push(Node n) {
  n.grad.assign(n.val.size(), 0.0);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(std::vector<double> v) {
  Node n;
  n.op = Op::Const;
  n.val = std::move(v);
  return push(std::move(n));
}

Tape::NodeId Tape::leaf(const std::vector<double>& v) {
  Node n;
  n.op = Op::Leaf;
  n.val = v;
  return push(std::move(n));
}

Tape::NodeId Tape::matvec(NodeId m, NodeId x, int rows, int cols) {
  Node n;
  n.op = Op::MatVec;
  n.a = m;
  n.b = x;
  n.aux0 = rows;
  n.aux1 = cols;
  n.val.resize(rows);
  const auto& M = nodes_[m].val;
  const auto& X = nodes_[x].val;
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    const double* mv = M.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) s += mv[c] * X[c];
    n.val[r] = s;
  }
  return push(std::move(n));
}

Tape::NodeId Tape::matvec_t(NodeId m, NodeId x, int rows, int cols) {
  Node n;
  n.op = Op::MatVecT;
  n.a = m;
  n.b = x;
  n.aux0 = rows;
  n.aux1 = cols;
  n.val.assign(cols, 0.0);
  const auto& M = nodes_[m].val;
  const auto& X = nodes_[x].val;
  for (int r = 0; r < rows; ++r) {
    const double* mv = M.data() + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) n.val[c] += mv[c] * X[r];
  }
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  const auto& A = nodes_[a].val;
  const auto& B = nodes_[b].val;
  n.val.resize(A.size());
  for (size_t i = 0; i < A.size(); ++i) n.val[i] = A[i] + B[i];
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  const auto& A = nodes_[a].val;
  const auto& B = nodes_[b].val;
  n.val.resize(A.size());
  for (size_t i = 0; i < A.size(); ++i) n.val[i] = A[i] * B[i];
  return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a;
  const auto& A = nodes_[a].val;
  n.val.resize(A.size());
  for (size_t i = 0; i < A.size(); ++i) n.val[i] = 1.0 / (1.0 + std::exp(-A[i]));
  return push(std::move(n));
}

Tape::NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a;
  const auto& A = nodes_[a].val;
  n.val.resize(A.size());
  for (size_t i = 0; i < A.size(); ++i) n.val[i] = std::tanh(A[i]);
  return push(std::move(n));
}

Tape::NodeId Tape::slice(NodeId a, int offset, int len) {
  Node n;
  n.op = Op::Slice;
  n.a = a;
  n.aux0 = offset;
  n.aux1 = len;
  const auto& A = nodes_[a].val;
  n.val.assign(A.begin() + offset, A.begin() + offset + len);
  return push(std::move(n));
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& parts) {
  Node n;
  n.op = Op::Concat;
  n.list = parts;
  for (NodeId p : parts) {
    const auto& v = nodes_[p].val;
    n.val.insert(n.val.end(), v.begin(), v.end());
  }
  return push(std::move(n));
}

Tape::NodeId Tape::dots(NodeId u, const std::vector<NodeId>& keys) {
  Node n;
  n.op = Op::Dots;
  n.a = u;
  n.list = keys;
  n.val.resize(keys.size());
  const auto& U = nodes_[u].val;
  for (size_t j = 0; j < keys.size(); ++j) {
    const auto& K = nodes_[keys[j]].val;
    double s = 0.0;
    for (size_t i = 0; i < U.size(); ++i) s += U[i] * K[i];
    n.val[j] = s;
  }
  return push(std::move(n));
}

Tape::NodeId Tape::weighted_sum(NodeId w, const std::vector<NodeId>& keys) {
  Node n;
  n.op = Op::WeightedSum;
  n.a = w;
  n.list = keys;
  const auto& W = nodes_[w].val;
  n.val.assign(nodes_[keys[0]].val.size(), 0.0);
  for (size_t j = 0; j < keys.size(); ++j) {
    const auto& K = nodes_[keys[j]].val;
    for (size_t i = 0; i < n.val.size(); ++i) n.val[i] += W[j] * K[i];
  }
  return push(std::move(n));
}

Tape::NodeId Tape::softmax(NodeId scores) {
  Node n;
  n.op = Op::Softmax;
  n.a = scores;
  const auto& S = nodes_[scores].val;
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : S) mx = std::max(mx, s);
  double z = 0.0;
  n.val.resize(S.size());
  for (size_t i = 0; i < S.size(); ++i) {
    n.val[i] = std::exp(S[i] - mx);
    z += n.val[i];
  }
  for (double& p : n.val) p /= z;
  return push(std::move(n));
}

Tape::NodeId Tape::masked_cross_entropy(NodeId logits, std::vector<uint8_t> valid, int gold) {
  const auto& L = nodes_[logits].val;
  Node n;
  n.op = Op::MaskedCE;
  n.a = logits;
  n.aux0 = gold;
  n.mask = std::move(valid);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < L.size(); ++i) {
    if (n.mask[i]) mx = std::max(mx, L[i]);
  }
  double z = 0.0;
  n.scratch.assign(L.size(), 0.0);
  for (size_t i = 0; i < L.size(); ++i) {
    if (n.mask[i]) {
      n.scratch[i] = std::exp(L[i] - mx);
      z += n.scratch[i];
    }
  }
  for (double& p : n.scratch) p /= z;
  double lse = mx + std::log(z);
  n.val = {lse - L[gold]};
  return push(std::move(n));
}

Tape::NodeId Tape::mean(const std::vector<NodeId>& scalars) {
  Node n;
  n.op = Op::Mean;
  n.list = scalars;
  double s = 0.0;
  for (NodeId id : scalars) s += nodes_[id].val[0];
  n.val = {s / static_cast<double>(scalars.size())};
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  nodes_[loss].grad.assign(1, 1.0);
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    const auto& g = n.grad;
    switch (n.op) {
      case Op::Const:
      case Op::Leaf:
        break;
      case Op::MatVec: {
        auto& gm = nodes_[n.a].grad;
        auto& gx = nodes_[n.b].grad;
        const auto& M = nodes_[n.a].val;
        const auto& X = nodes_[n.b].val;
        for (int r = 0; r < n.aux0; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          double* gmr = gm.data() + static_cast<size_t>(r) * n.aux1;
          const double* mr = M.data() + static_cast<size_t>(r) * n.aux1;
          for (int c = 0; c < n.aux1; ++c) {
            gmr[c] += gr * X[c];
            gx[c] += mr[c] * gr;
          }
        }
        break;
      }
      case Op::MatVecT: {
        auto& gm = nodes_[n.a].grad;
        auto& gx = nodes_[n.b].grad;
        const auto& M = nodes_[n.a].val;
        const auto& X = nodes_[n.b].val;
        for (int r = 0; r < n.aux0; ++r) {
          double* gmr = gm.data() + static_cast<size_t>(r) * n.aux1;
          const double* mr = M.data() + static_cast<size_t>(r) * n.aux1;
          double acc = 0.0;
          for (int c = 0; c < n.aux1; ++c) {
            gmr[c] += X[r] * g[c];
            acc += mr[c] * g[c];
          }
          gx[r] += acc;
        }
        break;
      }
      case Op::Add: {
        auto& ga = nodes_[n.a].grad;
        auto& gb = nodes_[n.b].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Mul: {
        auto& ga = nodes_[n.a].grad;
        auto& gb = nodes_[n.b].grad;
        const auto& A = nodes_[n.a].val;
        const auto& B = nodes_[n.b].val;
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * B[i];
          gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::Sigmoid: {
        auto& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
        break;
      }
      case Op::Tanh: {
        auto& ga = nodes_[n.a].grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
        break;
      }
      case Op::Slice: {
        auto& ga = nodes_[n.a].grad;
        for (int i = 0; i < n.aux1; ++i) ga[n.aux0 + i] += g[i];
        break;
      }
      case Op::Concat: {
        size_t off = 0;
        for (NodeId p : n.list) {
          auto& gp = nodes_[p].grad;
          for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
          off += gp.size();
        }
        break;
      }
      case Op::Dots: {
        auto& gu = nodes_[n.a].grad;
        const auto& U = nodes_[n.a].val;
        for (size_t j = 0; j < n.list.size(); ++j) {
          double gj = g[j];
          if (gj == 0.0) continue;
          auto& gk = nodes_[n.list[j]].grad;
          const auto& K = nodes_[n.list[j]].val;
          for (size_t i = 0; i < U.size(); ++i) {
            gu[i] += gj * K[i];
            gk[i] += gj * U[i];
          }
        }
        break;
      }
      case Op::WeightedSum: {
        auto& gw = nodes_[n.a].grad;
        const auto& W = nodes_[n.a].val;
        for (size_t j = 0; j < n.list.size(); ++j) {
          auto& gk = nodes_[n.list[j]].grad;
          const auto& K = nodes_[n.list[j]].val;
          double acc = 0.0;
          for (size_t i = 0; i < g.size(); ++i) {
            acc += g[i] * K[i];
            gk[i] += W[j] * g[i];
          }
          gw[j] += acc;
        }
        break;
      }
      case Op::Softmax: {
        auto& gs = nodes_[n.a].grad;
        double dot = 0.0;
        for (size_t i = 0; i < g.size(); ++i) dot += g[i] * n.val[i];
        for (size_t i = 0; i < g.size(); ++i) gs[i] += n.val[i] * (g[i] - dot);
        break;
      }
      case Op::MaskedCE: {
        auto& gl = nodes_[n.a].grad;
        double gs = g[0];
        for (size_t i = 0; i < gl.size(); ++i) {
          if (!n.mask[i]) continue;
          double delta = (static_cast<int>(i) == n.aux0) ? 1.0 : 0.0;
          gl[i] += gs * (n.scratch[i] - delta);
        }
        break;
      }
      case Op::Mean: {
        double share = g[0] / static_cast<double>(n.list.size());
        for (NodeId p : n.list) nodes_[p].grad[0] += share;
        break;
      }
    }
  }
}

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<uint8_t>& valid) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i) {
    if (valid[i]) mx = std::max(mx, logits[i]);
  }
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (valid[i]) {
      p[i] = std::exp(logits[i] - mx);
      z += p[i];
    }
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace finrag::ad
