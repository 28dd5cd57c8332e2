#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "util.hpp"

namespace relpara::ad {

namespace {
void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::Dimension, std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()) + ")");
  }
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var Graph::push(Matrix value, std::vector<int> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Graph::param(const Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::custom(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  std::vector<int> ids;
  ids.reserve(parents.size());
  for (Var v : parents) ids.push_back(v.id);
  return push(std::move(value), std::move(ids), std::move(backward));
}

void Graph::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var root) {
  require(value(root).size() == 1, ErrorKind::Dimension, "backward: root must be a scalar");
  if (!node(root).requires_grad) return;
  node(root).grad = Matrix::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // The closure may touch other nodes but never this one's grad again.
      Matrix g = std::move(n.grad);
      n.backward(*this, g);
    }
  }
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.rows(), ErrorKind::Dimension,
          "matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " + std::to_string(bv.rows()) + ")");
  return push(av * bv, {a.id, b.id}, [a, b](Graph& g, const Matrix& grad) {
    if (g.requires_grad(a)) g.accumulate(a, grad * g.value(b).transpose());
    if (g.requires_grad(b)) g.accumulate(b, g.value(a).transpose() * grad);
  });
}

Var Graph::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), {a.id, b.id}, [a, b](Graph& g, const Matrix& grad) {
    g.accumulate(a, grad);
    g.accumulate(b, grad);
  });
}

Var Graph::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), {a.id, b.id}, [a, b](Graph& g, const Matrix& grad) {
    g.accumulate(a, grad);
    g.accumulate(b, -grad);
  });
}

Var Graph::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), {a.id, b.id}, [a, b](Graph& g, const Matrix& grad) {
    if (g.requires_grad(a)) g.accumulate(a, grad.cwiseProduct(g.value(b)));
    if (g.requires_grad(b)) g.accumulate(b, grad.cwiseProduct(g.value(a)));
  });
}

Var Graph::scale(Var a, double s) {
  return push(value(a) * s, {a.id}, [a, s](Graph& g, const Matrix& grad) { g.accumulate(a, grad * s); });
}

Var Graph::add_col(Var m, Var col) {
  const Matrix& mv = value(m);
  const Matrix& cv = value(col);
  require(cv.cols() == 1 && cv.rows() == mv.rows(), ErrorKind::Dimension, "add_col: column shape mismatch");
  Matrix out = mv.colwise() + cv.col(0);
  return push(std::move(out), {m.id, col.id}, [m, col](Graph& g, const Matrix& grad) {
    g.accumulate(m, grad);
    if (g.requires_grad(col)) g.accumulate(col, grad.rowwise().sum());
  });
}

Var Graph::transpose(Var a) {
  return push(value(a).transpose(), {a.id},
              [a](Graph& g, const Matrix& grad) { g.accumulate(a, grad.transpose()); });
}

Var Graph::sigmoid(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return logistic(x); });
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), {a.id}, [a, self](Graph& g, const Matrix& grad) {
    const Matrix& y = g.value(Var{self});
    g.accumulate(a, grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var Graph::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), {a.id}, [a, self](Graph& g, const Matrix& grad) {
    const Matrix& y = g.value(Var{self});
    g.accumulate(a, grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var Graph::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), {a.id}, [a](Graph& g, const Matrix& grad) {
    const Matrix& x = g.value(a);
    g.accumulate(a, (x.array() > 0.0).select(grad, 0.0));
  });
}

Var Graph::concat_rows(std::initializer_list<Var> parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (Var p : parts) {
    rows += value(p).rows();
    if (cols < 0) cols = value(p).cols();
    require(value(p).cols() == cols, ErrorKind::Dimension, "concat_rows: column counts differ");
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Var> vars(parts);
  Eigen::Index offset = 0;
  for (Var p : vars) {
    out.middleRows(offset, value(p).rows()) = value(p);
    offset += value(p).rows();
    ids.push_back(p.id);
  }
  return push(std::move(out), std::move(ids), [vars](Graph& g, const Matrix& grad) {
    Eigen::Index off = 0;
    for (Var p : vars) {
      const Eigen::Index r = g.value(p).rows();
      if (g.requires_grad(p)) g.accumulate(p, grad.middleRows(off, r));
      off += r;
    }
  });
}

Var Graph::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  const Matrix& av = value(a);
  require(start >= 0 && count >= 0 && start + count <= av.rows(), ErrorKind::Dimension, "slice_rows: out of range");
  return push(av.middleRows(start, count), {a.id}, [a, start, count](Graph& g, const Matrix& grad) {
    const Matrix& src = g.value(a);
    Matrix full = Matrix::Zero(src.rows(), src.cols());
    full.middleRows(start, count) = grad;
    g.accumulate(a, full);
  });
}

Var Graph::column(Var a, Eigen::Index col) {
  const Matrix& av = value(a);
  require(col >= 0 && col < av.cols(), ErrorKind::Dimension, "column: out of range");
  return push(av.col(col), {a.id}, [a, col](Graph& g, const Matrix& grad) {
    const Matrix& src = g.value(a);
    Matrix full = Matrix::Zero(src.rows(), src.cols());
    full.col(col) = grad;
    g.accumulate(a, full);
  });
}

Var Graph::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), {a.id}, [a](Graph& g, const Matrix& grad) {
    const Matrix& src = g.value(a);
    g.accumulate(a, Matrix::Constant(src.rows(), src.cols(), grad(0, 0)));
  });
}

Var Graph::mean_cols(Var a) {
  const Matrix& av = value(a);
  require(av.cols() > 0, ErrorKind::Dimension, "mean_cols: empty input");
  const double inv = 1.0 / static_cast<double>(av.cols());
  Matrix out = av.rowwise().sum() * inv;
  return push(std::move(out), {a.id}, [a, inv](Graph& g, const Matrix& grad) {
    const Matrix& src = g.value(a);
    Matrix full = grad.col(0).replicate(1, src.cols()) * inv;
    g.accumulate(a, full);
  });
}

Var Graph::softmax_row(Var a) {
  const Matrix& av = value(a);
  require(av.rows() == 1, ErrorKind::Dimension, "softmax_row: expects a single row");
  const double mx = av.maxCoeff();
  Matrix e = (av.array() - mx).exp().matrix();
  e /= e.sum();
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(e), {a.id}, [a, self](Graph& g, const Matrix& grad) {
    const Matrix& s = g.value(Var{self});
    const double dot = grad.cwiseProduct(s).sum();
    g.accumulate(a, s.cwiseProduct((grad.array() - dot).matrix()));
  });
}

Var Graph::conv3x3(Var x, Var kernel, Var bias, int height, int width) {
  const Matrix& xv = value(x);
  const Matrix& kv = value(kernel);
  const Eigen::Index cin = xv.rows();
  const Eigen::Index pixels = static_cast<Eigen::Index>(height) * width;
  require(xv.cols() == pixels, ErrorKind::Dimension, "conv3x3: input does not match spatial size");
  require(kv.cols() == cin * 9, ErrorKind::Dimension, "conv3x3: kernel does not match input channels");

  // im2col: row (ci * 9 + ky * 3 + kx), column = output pixel.
  auto cols = std::make_shared<Matrix>(Matrix::Zero(cin * 9, pixels));
  for (Eigen::Index ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = ci * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int xx = 0; xx < width; ++xx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= width) continue;
            (*cols)(row, y * width + xx) = xv(ci, sy * width + sx);
          }
        }
      }
    }
  }
  Matrix out = kv * (*cols);
  std::vector<int> parents{x.id, kernel.id};
  if (bias.valid()) {
    require(value(bias).rows() == kv.rows() && value(bias).cols() == 1, ErrorKind::Dimension,
            "conv3x3: bias shape mismatch");
    out.colwise() += value(bias).col(0);
    parents.push_back(bias.id);
  }
  return push(std::move(out), std::move(parents),
              [x, kernel, bias, cols, cin, height, width](Graph& g, const Matrix& grad) {
                if (g.requires_grad(kernel)) g.accumulate(kernel, grad * cols->transpose());
                if (bias.valid() && g.requires_grad(bias)) g.accumulate(bias, grad.rowwise().sum());
                if (!g.requires_grad(x)) return;
                const Matrix dcols = g.value(kernel).transpose() * grad;
                Matrix dx = Matrix::Zero(cin, static_cast<Eigen::Index>(height) * width);
                for (Eigen::Index ci = 0; ci < cin; ++ci) {
                  for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                      const Eigen::Index row = ci * 9 + ky * 3 + kx;
                      for (int y = 0; y < height; ++y) {
                        const int sy = y + ky - 1;
                        if (sy < 0 || sy >= height) continue;
                        for (int xx = 0; xx < width; ++xx) {
                          const int sx = xx + kx - 1;
                          if (sx < 0 || sx >= width) continue;
                          dx(ci, sy * width + sx) += dcols(row, y * width + xx);
                        }
                      }
                    }
                  }
                }
                g.accumulate(x, dx);
              });
}

Var Graph::avg_pool2(Var x, int height, int width) {
  const Matrix& xv = value(x);
  require(height % 2 == 0 && width % 2 == 0, ErrorKind::Dimension, "avg_pool2: spatial size must be even");
  require(xv.cols() == static_cast<Eigen::Index>(height) * width, ErrorKind::Dimension,
          "avg_pool2: input does not match spatial size");
  const int oh = height / 2;
  const int ow = width / 2;
  Matrix out = Matrix::Zero(xv.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int xx = 0; xx < ow; ++xx) {
      const int o = y * ow + xx;
      const int i0 = (2 * y) * width + 2 * xx;
      out.col(o) = 0.25 * (xv.col(i0) + xv.col(i0 + 1) + xv.col(i0 + width) + xv.col(i0 + width + 1));
    }
  }
  return push(std::move(out), {x.id}, [x, height, width, oh, ow](Graph& g, const Matrix& grad) {
    Matrix dx = Matrix::Zero(grad.rows(), static_cast<Eigen::Index>(height) * width);
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const int o = y * ow + xx;
        const int i0 = (2 * y) * width + 2 * xx;
        const auto q = 0.25 * grad.col(o);
        dx.col(i0) += q;
        dx.col(i0 + 1) += q;
        dx.col(i0 + width) += q;
        dx.col(i0 + width + 1) += q;
      }
    }
    g.accumulate(x, dx);
  });
}

Var Graph::cross_entropy(Var logits, int target) {
  const Matrix& lv = value(logits);
  require(lv.cols() == 1, ErrorKind::Dimension, "cross_entropy: logits must be a column");
  require(target >= 0 && target < lv.rows(), ErrorKind::InvalidArgument,
          "cross_entropy: target " + std::to_string(target) + " outside [0, " + std::to_string(lv.rows()) + ")");
  const double mx = lv.maxCoeff();
  const double lse = mx + std::log((lv.array() - mx).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - lv(target, 0);
  return push(std::move(out), {logits.id}, [logits, target, lse](Graph& g, const Matrix& grad) {
    Matrix p = (g.value(logits).array() - lse).exp().matrix();
    p(target, 0) -= 1.0;
    g.accumulate(logits, p * grad(0, 0));
  });
}

Var Graph::bce_with_logit(Var logit, double target) {
  const Matrix& lv = value(logit);
  require(lv.size() == 1, ErrorKind::Dimension, "bce_with_logit: expects a scalar logit");
  const double s = lv(0, 0);
  Matrix out(1, 1);
  out(0, 0) = std::max(s, 0.0) - target * s + std::log1p(std::exp(-std::abs(s)));
  return push(std::move(out), {logit.id}, [logit, s, target](Graph& g, const Matrix& grad) {
    Matrix d(1, 1);
    d(0, 0) = (logistic(s) - target) * grad(0, 0);
    g.accumulate(logit, d);
  });
}

Var Graph::bce_mean(Var probs, const Vector& targets, double clamp) {
  const Matrix& pv = value(probs);
  require(pv.cols() == 1 && pv.rows() == targets.size(), ErrorKind::Dimension, "bce_mean: length mismatch");
  const double inv = 1.0 / static_cast<double>(targets.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double p = std::clamp(pv(i, 0), clamp, 1.0 - clamp);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  Matrix out(1, 1);
  out(0, 0) = total * inv;
  return push(std::move(out), {probs.id}, [probs, targets, clamp, inv](Graph& g, const Matrix& grad) {
    const Matrix& p = g.value(probs);
    Matrix d = Matrix::Zero(p.rows(), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pi = p(i, 0);
      if (pi <= clamp || pi >= 1.0 - clamp) continue;
      d(i, 0) = -(targets[i] / pi - (1.0 - targets[i]) / (1.0 - pi)) * inv * grad(0, 0);
    }
    g.accumulate(probs, d);
  });
}

LstmState lstm_step(Graph& g, Var weight, Var bias, Var x, const LstmState& prev) {
  const Matrix& w = g.value(weight);
  const Eigen::Index hidden = g.value(prev.h).rows();
  const Eigen::Index in = g.value(x).rows();
  require(w.rows() == 4 * hidden && w.cols() == in + hidden, ErrorKind::Dimension,
          "lstm_step: weight is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + ", expected " +
              std::to_string(4 * hidden) + "x" + std::to_string(in + hidden));

  struct Cache {
    Matrix input;  // [x; h_prev]
    Matrix i, f, cand, o;
    Matrix c_prev, c, tanh_c;
  };
  auto cache = std::make_shared<Cache>();
  cache->input.resize(in + hidden, 1);
  cache->input.topRows(in) = g.value(x);
  cache->input.bottomRows(hidden) = g.value(prev.h);
  const Matrix z = w * cache->input + g.value(bias);
  auto sig = [](const Matrix& m) { return m.unaryExpr([](double v) { return logistic(v); }).eval(); };
  cache->i = sig(z.middleRows(0, hidden));
  cache->f = sig(z.middleRows(hidden, hidden));
  cache->cand = z.middleRows(2 * hidden, hidden).array().tanh().matrix();
  cache->o = sig(z.middleRows(3 * hidden, hidden));
  cache->c_prev = g.value(prev.c);
  cache->c = cache->f.cwiseProduct(cache->c_prev) + cache->i.cwiseProduct(cache->cand);
  cache->tanh_c = cache->c.array().tanh().matrix();

  Matrix stacked(2 * hidden, 1);
  stacked.topRows(hidden) = cache->o.cwiseProduct(cache->tanh_c);
  stacked.bottomRows(hidden) = cache->c;

  Var packed = g.custom(
      std::move(stacked), {weight, bias, x, prev.h, prev.c},
      [weight, bias, x, prev, cache, hidden, in](Graph& gr, const Matrix& grad) {
        const Matrix dh = grad.topRows(hidden);
        const Matrix dc_out = grad.bottomRows(hidden);
        const Matrix d_o = dh.cwiseProduct(cache->tanh_c);
        const Matrix dc =
            dc_out + dh.cwiseProduct(cache->o).cwiseProduct((1.0 - cache->tanh_c.array().square()).matrix());
        Matrix dz(4 * hidden, 1);
        dz.middleRows(0, hidden) =
            dc.cwiseProduct(cache->cand).cwiseProduct(cache->i.cwiseProduct((1.0 - cache->i.array()).matrix()));
        dz.middleRows(hidden, hidden) =
            dc.cwiseProduct(cache->c_prev).cwiseProduct(cache->f.cwiseProduct((1.0 - cache->f.array()).matrix()));
        dz.middleRows(2 * hidden, hidden) =
            dc.cwiseProduct(cache->i).cwiseProduct((1.0 - cache->cand.array().square()).matrix());
        dz.middleRows(3 * hidden, hidden) =
            d_o.cwiseProduct(cache->o.cwiseProduct((1.0 - cache->o.array()).matrix()));
        if (gr.requires_grad(weight)) gr.accumulate(weight, dz * cache->input.transpose());
        if (gr.requires_grad(bias)) gr.accumulate(bias, dz);
        if (gr.requires_grad(x) || gr.requires_grad(prev.h)) {
          const Matrix dinput = gr.value(weight).transpose() * dz;
          gr.accumulate(x, dinput.topRows(in));
          gr.accumulate(prev.h, dinput.bottomRows(hidden));
        }
        gr.accumulate(prev.c, dc.cwiseProduct(cache->f));
      });
  return LstmState{g.slice_rows(packed, 0, hidden), g.slice_rows(packed, hidden, hidden)};
}

}  // namespace relpara::ad
