#include "rlm/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rlm {

Var Graph::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Tensor& value, std::vector<double>* sink) {
  Node n;
  n.ref = &value;
  if (record_ && sink != nullptr) {
    if (sink->size() != value.size()) {
      throw std::invalid_argument("gradient sink size mismatch");
    }
    n.sink = sink;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::make(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return make(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Graph::make(Tensor value, std::span<const Var> inputs, Backward fn) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (Var in : inputs) n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref != nullptr ? *n.ref : n.owned;
}

std::span<double> Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return {};
  n.touched = true;
  if (n.sink != nullptr) return *n.sink;
  if (n.grad_store.empty()) n.grad_store.assign(value(v).size(), 0.0);
  return n.grad_store;
}

void Graph::backward(Var root) {
  if (!record_) throw std::logic_error("backward on a non-recording graph");
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward root must be a scalar");
  }
  auto seed = grad(root);
  if (seed.empty()) return;
  seed[0] += 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.touched || !n.backward || n.sink != nullptr) continue;
    // grad_store is not resized by the callback (only other nodes' stores are
    // allocated), so the span stays valid.
    n.backward(*this, std::span<const double>(n.grad_store));
  }
}

namespace ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  require(B.rows() == k, "matmul inner dimension mismatch");
  Tensor out = Tensor::matrix(m, n);
  gemm_nn(A.data().data(), B.data().data(), out.data().data(), m, k, n);
  return g.make(std::move(out), {a, b},
                [a, b, m, k, n](Graph& g, std::span<const double> dy) {
                  if (auto da = g.grad(a); !da.empty()) {
                    gemm_nt(dy.data(), g.value(b).data().data(), da.data(), m,
                            n, k);
                  }
                  if (auto db = g.grad(b); !db.empty()) {
                    gemm_tn(g.value(a).data().data(), dy.data(), db.data(), m,
                            k, n);
                  }
                });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  const Tensor& B = g.value(b);
  const std::size_t m = X.rows(), k = X.cols(), n = W.cols();
  require(W.rows() == k, "linear input dimension mismatch");
  require(B.size() == n, "linear bias dimension mismatch");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = B[j];
  }
  gemm_nn(X.data().data(), W.data().data(), out.data().data(), m, k, n);
  return g.make(std::move(out), {x, w, b},
                [x, w, b, m, k, n](Graph& g, std::span<const double> dy) {
                  if (auto dx = g.grad(x); !dx.empty()) {
                    gemm_nt(dy.data(), g.value(w).data().data(), dx.data(), m,
                            n, k);
                  }
                  if (auto dw = g.grad(w); !dw.empty()) {
                    gemm_tn(g.value(x).data().data(), dy.data(), dw.data(), m,
                            k, n);
                  }
                  if (auto db = g.grad(b); !db.empty()) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
                    }
                  }
                });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.size() == B.size() && A.cols() == B.cols(), "add shape mismatch");
  Tensor out = A;
  out.set_requires_grad(false);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return g.make(std::move(out), {a, b},
                [a, b](Graph& g, std::span<const double> dy) {
                  for (Var v : {a, b}) {
                    if (auto d = g.grad(v); !d.empty()) {
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
                    }
                  }
                });
}

Var scale(Graph& g, Var x, double c) {
  Tensor out = g.value(x);
  for (double& v : out.storage()) v *= c;
  return g.make(std::move(out), {x},
                [x, c](Graph& g, std::span<const double> dy) {
                  auto d = g.grad(x);
                  for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * dy[i];
                });
}

Var gelu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (double& v : out.storage()) v = rlm::gelu(v);
  return g.make(std::move(out), {x},
                [x](Graph& g, std::span<const double> dy) {
                  auto d = g.grad(x);
                  const Tensor& X = g.value(x);
                  for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] += dy[i] * gelu_grad(X[i]);
                  }
                });
}

Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = g.value(x);
  const Tensor& G = g.value(gamma);
  const Tensor& B = g.value(beta);
  const std::size_t m = X.rows(), d = X.cols();
  require(d >= 2, "layer_norm needs d >= 2");
  require(G.size() == d && B.size() == d, "layer_norm gamma/beta mismatch");
  Tensor out = Tensor::matrix(m, d);
  std::vector<double> xhat(m * d);
  std::vector<double> inv(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += X.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = X.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (X.at(i, j) - mean) * inv[i];
      out.at(i, j) = G[j] * xhat[i * d + j] + B[j];
    }
  }
  return g.make(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, m, d, xhat = std::move(xhat), inv = std::move(inv)](
          Graph& g, std::span<const double> dy) {
        const Tensor& G = g.value(gamma);
        if (auto dg = g.grad(gamma); !dg.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * xhat[i * d + j];
          }
        }
        if (auto db = g.grad(beta); !db.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
          }
        }
        if (auto dx = g.grad(x); !dx.empty()) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dyh = 0.0, mean_dyh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dyh = dy[i * d + j] * G[j];
              mean_dyh += dyh;
              mean_dyh_xh += dyh * xhat[i * d + j];
            }
            mean_dyh *= inv_d;
            mean_dyh_xh *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dyh = dy[i * d + j] * G[j];
              dx[i * d + j] +=
                  inv[i] * (dyh - mean_dyh - xhat[i * d + j] * mean_dyh_xh);
            }
          }
        }
      });
}

Var attention(Graph& g, Var q, Var k, Var v, std::size_t heads) {
  const Tensor& Q = g.value(q);
  const Tensor& K = g.value(k);
  const Tensor& V = g.value(v);
  const std::size_t len = Q.rows(), d = Q.cols();
  if (Q.size() == 0 || len == 0) throw std::invalid_argument("empty sequence");
  require(K.rows() == len && V.rows() == len && K.cols() == d && V.cols() == d,
          "attention shape mismatch");
  require(heads >= 1 && d % heads == 0, "attention heads must divide d");
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[h][i * len + j]
  std::vector<double> probs(heads * len * len);
  Tensor out = Tensor::matrix(len, d);
  std::vector<double> scores(len);
  const double* qd = Q.data().data();
  const double* kd = K.data().data();
  const double* vd = V.data().data();
  double* od = out.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    double* P = probs.data() + h * len * len;
    for (std::size_t i = 0; i < len; ++i) {
      double mx = -INFINITY;
      const double* qi = qd + i * d + off;
      for (std::size_t j = 0; j < len; ++j) {
        const double* kj = kd + j * d + off;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        scores[j] = s * sc;
        mx = std::max(mx, scores[j]);
      }
      if (!std::isfinite(mx)) throw std::domain_error("non-finite logits");
      double sum = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        P[i * len + j] = std::exp(scores[j] - mx);
        sum += P[i * len + j];
      }
      for (std::size_t j = 0; j < len; ++j) {
        P[i * len + j] /= sum;
        const double p = P[i * len + j];
        const double* vj = vd + j * d + off;
        double* oi = od + i * d + off;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
      }
    }
  }
  return g.make(
      std::move(out), {q, k, v},
      [q, k, v, len, d, dh, heads, sc, probs = std::move(probs)](
          Graph& g, std::span<const double> dy) {
        const double* qd = g.value(q).data().data();
        const double* kd = g.value(k).data().data();
        const double* vd = g.value(v).data().data();
        auto dq = g.grad(q);
        auto dk = g.grad(k);
        auto dv = g.grad(v);
        std::vector<double> dp(len), ds(len);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          const double* P = probs.data() + h * len * len;
          for (std::size_t i = 0; i < len; ++i) {
            const double* dyi = dy.data() + i * d + off;
            // dP_ij = dO_i . V_j
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
              const double* vj = vd + j * d + off;
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += dyi[c] * vj[c];
              dp[j] = s;
              dot += s * P[i * len + j];
            }
            for (std::size_t j = 0; j < len; ++j) ds[j] = P[i * len + j] * (dp[j] - dot) * sc;
            for (std::size_t j = 0; j < len; ++j) {
              const double p = P[i * len + j];
              if (!dv.empty()) {
                double* dvj = dv.data() + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dvj[c] += p * dyi[c];
              }
              if (!dq.empty()) {
                double* dqi = dq.data() + i * d + off;
                const double* kj = kd + j * d + off;
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
              }
              if (!dk.empty()) {
                double* dkj = dk.data() + j * d + off;
                const double* qi = qd + i * d + off;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
              }
            }
          }
        }
      });
}

Var gather_rows(Graph& g, Var table, std::span<const std::size_t> ids) {
  const Tensor& T = g.value(table);
  const std::size_t d = T.cols();
  require(!ids.empty(), "gather of zero rows");
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= T.rows()) {
      throw std::out_of_range("row index " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(T.rows()));
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = T.at(ids[i], j);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return g.make(std::move(out), {table},
                [table, d, idx = std::move(idx)](Graph& g,
                                                 std::span<const double> dy) {
                  auto dt = g.grad(table);
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    for (std::size_t j = 0; j < d; ++j) dt[idx[i] * d + j] += dy[i * d + j];
                  }
                });
}

Var slice_rows(Graph& g, Var x, std::size_t begin, std::size_t count) {
  const Tensor& X = g.value(x);
  require(count > 0 && begin + count <= X.rows(), "slice_rows out of range");
  const std::size_t d = X.cols();
  std::vector<double> data(X.data().begin() + static_cast<std::ptrdiff_t>(begin * d),
                           X.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * d));
  Tensor out({count, d}, std::move(data));
  return g.make(std::move(out), {x},
                [x, begin, d](Graph& g, std::span<const double> dy) {
                  auto dx = g.grad(x);
                  for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * d + i] += dy[i];
                });
}

Var row(Graph& g, Var x, std::size_t r) { return slice_rows(g, x, r, 1); }

Var broadcast_rows(Graph& g, Var r, std::size_t n) {
  const Tensor& R = g.value(r);
  require(R.rows() == 1 && n > 0, "broadcast_rows expects a single row");
  const std::size_t d = R.cols();
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = R[j];
  }
  return g.make(std::move(out), {r},
                [r, n, d](Graph& g, std::span<const double> dy) {
                  auto dr = g.grad(r);
                  for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) dr[j] += dy[i * d + j];
                  }
                });
}

Var concat_cols(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.rows() == B.rows(), "concat_cols row mismatch");
  const std::size_t m = A.rows(), p = A.cols(), q = B.cols();
  Tensor out = Tensor::matrix(m, p + q);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) = A.at(i, j);
    for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = B.at(i, j);
  }
  return g.make(std::move(out), {a, b},
                [a, b, m, p, q](Graph& g, std::span<const double> dy) {
                  if (auto da = g.grad(a); !da.empty()) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < p; ++j) da[i * p + j] += dy[i * (p + q) + j];
                    }
                  }
                  if (auto db = g.grad(b); !db.empty()) {
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t j = 0; j < q; ++j) db[i * q + j] += dy[i * (p + q) + p + j];
                    }
                  }
                });
}

Var log_softmax(Graph& g, Var x) {
  const Tensor& X = g.value(x);
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ls = rlm::log_softmax(X.row_span(i));
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = ls[j];
  }
  return g.make(std::move(out), {x},
                [x, m, n](Graph& g, std::span<const double> dy) {
                  auto dx = g.grad(x);
                  const Tensor& X = g.value(x);
                  for (std::size_t i = 0; i < m; ++i) {
                    const auto p = rlm::softmax(X.row_span(i));
                    double total = 0.0;
                    for (std::size_t j = 0; j < n; ++j) total += dy[i * n + j];
                    for (std::size_t j = 0; j < n; ++j) {
                      dx[i * n + j] += dy[i * n + j] - p[j] * total;
                    }
                  }
                });
}

Var pick(Graph& g, Var x, std::size_t r, std::size_t c) {
  const Tensor& X = g.value(x);
  require(r < X.rows() && c < X.cols(), "pick out of range");
  const std::size_t idx = r * X.cols() + c;
  return g.make(Tensor::row({X[idx]}), {x},
                [x, idx](Graph& g, std::span<const double> dy) {
                  g.grad(x)[idx] += dy[0];
                });
}

Var weighted_sum(Graph& g, std::span<const Var> terms,
                 std::span<const double> weights) {
  require(terms.size() == weights.size(), "weighted_sum size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(g.value(terms[i]).size() == 1, "weighted_sum expects scalars");
    total += weights[i] * g.value(terms[i])[0];
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<double> ws(weights.begin(), weights.end());
  Tensor out = Tensor::row({total});
  return g.make(std::move(out), terms,
                [ts = std::move(ts), ws = std::move(ws)](
                    Graph& g, std::span<const double> dy) {
                  for (std::size_t i = 0; i < ts.size(); ++i) {
                    if (auto d = g.grad(ts[i]); !d.empty()) d[0] += ws[i] * dy[0];
                  }
                });
}

Var detach(Graph& g, Var x) {
  Tensor copy = g.value(x);
  return g.constant(std::move(copy));
}

}  // namespace ad
}  // namespace rlm
