#include "ctmos/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "ctmos/errors.hpp"

namespace ctmos {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Graph::NodeId Graph::push(Tensor value, std::vector<NodeId> inputs,
                          std::function<void(Graph&, NodeId)> back) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tensor& Graph::gref(NodeId id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape, 0.0);
    n.grad_alloc = true;
  }
  return n.grad;
}

const Tensor& Graph::grad(NodeId id) { return gref(id); }

Graph::NodeId Graph::leaf(Tensor t) { return push(std::move(t), {}, nullptr); }

Graph::NodeId Graph::add(NodeId a, NodeId b) {
  require_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += vb.v[i];
  return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(b);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
      da.v[i] += d.v[i];
      db.v[i] += d.v[i];
    }
  });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
  require_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= vb.v[i];
  return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(b);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
      da.v[i] += d.v[i];
      db.v[i] -= d.v[i];
    }
  });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
  require_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= vb.v[i];
  return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& va = g.val(a);
    const Tensor& vb2 = g.val(b);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(b);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
      da.v[i] += d.v[i] * vb2.v[i];
      db.v[i] += d.v[i] * va.v[i];
    }
  });
}

Graph::NodeId Graph::div(NodeId a, NodeId b) {
  require_same_shape(val(a), val(b), "div");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] /= vb.v[i];
  return push(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& va = g.val(a);
    const Tensor& vb2 = g.val(b);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(b);
    for (std::size_t i = 0; i < d.v.size(); ++i) {
      const double inv = 1.0 / vb2.v[i];
      da.v[i] += d.v[i] * inv;
      db.v[i] -= d.v[i] * va.v[i] * inv * inv;
    }
  });
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& va = val(a);
  const Tensor& vb = val(b);
  const int m = va.rows(), k = va.cols(), k2 = vb.rows(), n = vb.cols();
  if (k != k2) throw ShapeError("matmul: inner dimensions disagree");
  Tensor out({m, n}, 0.0);
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double aik = va.v[static_cast<std::size_t>(i) * k + kk];
      if (aik == 0.0) continue;
      const double* brow = &vb.v[static_cast<std::size_t>(kk) * n];
      double* orow = &out.v[static_cast<std::size_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return push(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& va2 = g.val(a);
    const Tensor& vb2 = g.val(b);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(b);
    // dA += dC * B^T
    for (int i = 0; i < m; ++i) {
      const double* drow = &d.v[static_cast<std::size_t>(i) * n];
      for (int kk = 0; kk < k; ++kk) {
        const double* brow = &vb2.v[static_cast<std::size_t>(kk) * n];
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += drow[j] * brow[j];
        da.v[static_cast<std::size_t>(i) * k + kk] += s;
      }
    }
    // dB += A^T * dC
    for (int i = 0; i < m; ++i) {
      const double* drow = &d.v[static_cast<std::size_t>(i) * n];
      for (int kk = 0; kk < k; ++kk) {
        const double aik = va2.v[static_cast<std::size_t>(i) * k + kk];
        if (aik == 0.0) continue;
        double* dbrow = &db.v[static_cast<std::size_t>(kk) * n];
        for (int j = 0; j < n; ++j) dbrow[j] += aik * drow[j];
      }
    }
  });
}

Graph::NodeId Graph::add_row(NodeId a, NodeId bias) {
  const Tensor& va = val(a);
  const Tensor& vbias = val(bias);
  const int m = va.rows(), n = va.cols();
  if (static_cast<int>(vbias.numel()) != n)
    throw ShapeError("add_row: bias length must equal column count");
  Tensor out = va;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.v[static_cast<std::size_t>(i) * n + j] += vbias.v[j];
  return push(std::move(out), {a, bias}, [a, bias, m, n](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    Tensor& db = g.gref(bias);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = d.v[static_cast<std::size_t>(i) * n + j];
        da.v[static_cast<std::size_t>(i) * n + j] += x;
        db.v[j] += x;
      }
  });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
  Tensor out = val(a);
  for (double& x : out.v) x *= c;
  return push(std::move(out), {a}, [a, c](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < d.v.size(); ++i) da.v[i] += c * d.v[i];
  });
}

Graph::NodeId Graph::add_const(NodeId a, double c) {
  Tensor out = val(a);
  for (double& x : out.v) x += c;
  return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i];
  });
}

Graph::NodeId Graph::tanh_op(NodeId a) {
  Tensor out = val(a);
  for (double& x : out.v) x = std::tanh(x);
  return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& y = g.val(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * (1.0 - y.v[i] * y.v[i]);
  });
}

Graph::NodeId Graph::exp_op(NodeId a) {
  Tensor out = val(a);
  for (double& x : out.v) x = std::exp(x);
  return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& y = g.val(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * y.v[i];
  });
}

Graph::NodeId Graph::sigmoid_op(NodeId a) {
  Tensor out = val(a);
  for (double& x : out.v) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                       : std::exp(x) / (1.0 + std::exp(x));
  return push(std::move(out), {a}, [a](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& y = g.val(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * y.v[i] * (1.0 - y.v[i]);
  });
}

Graph::NodeId Graph::softmax(NodeId a, int axis) {
  const Tensor& va = val(a);
  const int rank = static_cast<int>(va.shape.size());
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range");
  if (!va.all_finite()) throw ValidationError("softmax: non-finite input");
  const int len = va.shape[axis];
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < rank; ++i) inner *= static_cast<std::size_t>(va.shape[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(va.shape[i]);

  Tensor out(va.shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = va.v[base];
      for (int i = 1; i < len; ++i) mx = std::max(mx, va.v[base + i * inner]);
      double z = 0.0;
      for (int i = 0; i < len; ++i) {
        const double e = std::exp(va.v[base + i * inner] - mx);
        out.v[base + i * inner] = e;
        z += e;
      }
      const double invz = 1.0 / z;
      for (int i = 0; i < len; ++i) out.v[base + i * inner] *= invz;
    }
  return push(std::move(out), {a}, [a, len, inner, outer](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& y = g.val(self);
    Tensor& da = g.gref(a);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (int i = 0; i < len; ++i) dot += d.v[base + i * inner] * y.v[base + i * inner];
        for (int i = 0; i < len; ++i)
          da.v[base + i * inner] += y.v[base + i * inner] * (d.v[base + i * inner] - dot);
      }
  });
}

Graph::NodeId Graph::gather_rows(NodeId table, std::vector<int> ids) {
  const Tensor& vt = val(table);
  const int rows = vt.rows(), d = vt.cols();
  for (int id : ids)
    if (id < 0 || id >= rows) throw ShapeError("gather_rows: id out of range");
  Tensor out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(&vt.v[static_cast<std::size_t>(ids[i]) * d], d, &out.v[i * d]);
  return push(std::move(out), {table},
              [table, ids = std::move(ids), d](Graph& g, NodeId self) {
                const Tensor& dd = g.gref(self);
                Tensor& dt = g.gref(table);
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  double* row = &dt.v[static_cast<std::size_t>(ids[i]) * d];
                  const double* src = &dd.v[i * d];
                  for (int j = 0; j < d; ++j) row[j] += src[j];
                }
              });
}

Graph::NodeId Graph::slice_cols(NodeId a, int c0, int c1) {
  const Tensor& va = val(a);
  const int m = va.rows(), n = va.cols();
  if (c0 < 0 || c1 > n || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out({m, w});
  for (int i = 0; i < m; ++i)
    std::copy_n(&va.v[static_cast<std::size_t>(i) * n + c0], w,
                &out.v[static_cast<std::size_t>(i) * w]);
  return push(std::move(out), {a}, [a, c0, m, n, w](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        da.v[static_cast<std::size_t>(i) * n + c0 + j] +=
            d.v[static_cast<std::size_t>(i) * w + j];
  });
}

Graph::NodeId Graph::slice_rows(NodeId a, int r0, int r1) {
  const Tensor& va = val(a);
  const int m = va.rows(), n = va.cols();
  if (r0 < 0 || r1 > m || r0 >= r1) throw ShapeError("slice_rows: bad range");
  const int h = r1 - r0;
  Tensor out({h, n});
  std::copy_n(&va.v[static_cast<std::size_t>(r0) * n], static_cast<std::size_t>(h) * n,
              out.v.begin());
  return push(std::move(out), {a}, [a, r0, n, h](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * n; ++i)
      da.v[static_cast<std::size_t>(r0) * n + i] += d.v[i];
  });
}

Graph::NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int n = val(parts[0]).cols();
  int m = 0;
  for (NodeId p : parts) {
    if (val(p).cols() != n) throw ShapeError("concat_rows: column counts disagree");
    m += val(p).rows();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& vp = val(p);
    std::copy(vp.v.begin(), vp.v.end(), out.v.begin() + off);
    off += vp.v.size();
  }
  return push(std::move(out), parts, [parts](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    std::size_t off2 = 0;
    for (NodeId p : parts) {
      Tensor& dp = g.gref(p);
      for (std::size_t i = 0; i < dp.v.size(); ++i) dp.v[i] += d.v[off2 + i];
      off2 += dp.v.size();
    }
  });
}

Graph::NodeId Graph::scale_rows(NodeId a, NodeId s) {
  const Tensor& va = val(a);
  const Tensor& vs = val(s);
  const int m = va.rows(), n = va.cols();
  if (static_cast<int>(vs.numel()) != m)
    throw ShapeError("scale_rows: scale length must equal row count");
  Tensor out = va;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.v[static_cast<std::size_t>(i) * n + j] *= vs.v[i];
  return push(std::move(out), {a, s}, [a, s, m, n](Graph& g, NodeId self) {
    const Tensor& d = g.gref(self);
    const Tensor& va2 = g.val(a);
    const Tensor& vs2 = g.val(s);
    Tensor& da = g.gref(a);
    Tensor& ds = g.gref(s);
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * n + j;
        da.v[idx] += d.v[idx] * vs2.v[i];
        acc += d.v[idx] * va2.v[idx];
      }
      ds.v[i] += acc;
    }
  });
}

Graph::NodeId Graph::sum(NodeId a) {
  double s = 0.0;
  for (double x : val(a).v) s += x;
  return push(Tensor::scalar(s), {a}, [a](Graph& g, NodeId self) {
    const double d = g.gref(self).v[0];
    Tensor& da = g.gref(a);
    for (double& x : da.v) x += d;
  });
}

Graph::NodeId Graph::mean(NodeId a) {
  const double inv = 1.0 / static_cast<double>(val(a).numel());
  double s = 0.0;
  for (double x : val(a).v) s += x;
  return push(Tensor::scalar(s * inv), {a}, [a, inv](Graph& g, NodeId self) {
    const double d = g.gref(self).v[0] * inv;
    Tensor& da = g.gref(a);
    for (double& x : da.v) x += d;
  });
}

Graph::NodeId Graph::sum_sq(NodeId a) {
  double s = 0.0;
  for (double x : val(a).v) s += x * x;
  return push(Tensor::scalar(s), {a}, [a](Graph& g, NodeId self) {
    const double d = g.gref(self).v[0];
    const Tensor& va = g.val(a);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < va.v.size(); ++i) da.v[i] += 2.0 * d * va.v[i];
  });
}

Graph::NodeId Graph::mean_sq(NodeId a) {
  const double inv = 1.0 / static_cast<double>(val(a).numel());
  double s = 0.0;
  for (double x : val(a).v) s += x * x;
  return push(Tensor::scalar(s * inv), {a}, [a, inv](Graph& g, NodeId self) {
    const double d = g.gref(self).v[0] * inv;
    const Tensor& va = g.val(a);
    Tensor& da = g.gref(a);
    for (std::size_t i = 0; i < va.v.size(); ++i) da.v[i] += 2.0 * d * va.v[i];
  });
}

Graph::NodeId Graph::neg_log_pick(NodeId probs, std::vector<int> targets, double floor,
                                  long* clamp_count) {
  const Tensor& vp = val(probs);
  const int m = vp.rows(), n = vp.cols();
  if (static_cast<int>(targets.size()) != m)
    throw ShapeError("neg_log_pick: one target per row required");
  for (int t : targets)
    if (t < 0 || t >= n) throw ShapeError("neg_log_pick: target out of range");
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    const double p = vp.v[static_cast<std::size_t>(i) * n + targets[i]];
    if (p < floor && clamp_count != nullptr) ++*clamp_count;
    out.v[i] = -std::log(std::max(p, floor));
  }
  return push(std::move(out), {probs},
              [probs, targets = std::move(targets), floor, n](Graph& g, NodeId self) {
                const Tensor& d = g.gref(self);
                const Tensor& vp2 = g.val(probs);
                Tensor& dp = g.gref(probs);
                for (std::size_t i = 0; i < targets.size(); ++i) {
                  const std::size_t idx = i * n + targets[i];
                  const double p = vp2.v[idx];
                  if (p >= floor) dp.v[idx] -= d.v[i] / p;
                }
              });
}

void Graph::backward(NodeId loss) {
  if (backward_done_) throw ConfigError("backward: graph already differentiated");
  if (!val(loss).is_scalar()) throw ShapeError("backward: loss must be scalar");
  backward_done_ = true;
  gref(loss).v[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && n.grad_alloc) n.back(*this, id);
  }
}

}  // namespace ctmos
