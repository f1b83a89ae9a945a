#include "crowdcast/autodiff.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "crowdcast/errors.hpp"

namespace crowdcast::ad {

namespace {

int shape_count(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

void ensure_finite(const std::vector<double>& values, const char* op) {
    for (double x : values) {
        if (!std::isfinite(x)) throw NonFiniteValue(std::string("non-finite value produced by ") + op);
    }
}

void require(bool cond, const char* what) {
    if (!cond) throw ShapeMismatch(what);
}

}  // namespace

double Tensor::item() const {
    if (v.size() != 1) throw ShapeMismatch("item() requires a single-element tensor");
    return v[0];
}

Tensor Tensor::zeros(Shape s) {
    Tensor t;
    t.v.assign(shape_count(s), 0.0);
    t.shape = std::move(s);
    return t;
}

Tensor Tensor::full(Shape s, double value) {
    Tensor t = zeros(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.shape = {};
    t.v = {value};
    return t;
}

Tensor Tensor::matrix(int r, int c, std::vector<double> values) {
    if (static_cast<int>(values.size()) != r * c) throw ShapeMismatch("matrix() value count");
    Tensor t;
    t.shape = {r, c};
    t.v = std::move(values);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    Tensor t;
    t.shape = {static_cast<int>(values.size())};
    t.v = std::move(values);
    return t;
}

Tensor Tape::record(Shape shape, std::vector<double> values, BackFn back) {
    Tensor t;
    t.shape = std::move(shape);
    t.v = std::move(values);
    t.node = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.size(), std::move(back)});
    return t;
}

void Tape::accumulate(GradientMap& grads, int node, int size, int index, double value) {
    if (node < 0) return;
    auto& slot = grads[node];
    if (slot.empty()) slot.assign(size, 0.0);
    slot[index] += value;
}

Tensor Tape::leaf(const Tensor& t) {
    ensure_finite(t.v, "leaf");
    return record(t.shape, t.v, [](const std::vector<double>&, GradientMap&) {});
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "add: shapes differ");
    std::vector<double> out(a.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.v[i] + b.v[i];
    ensure_finite(out, "add");
    if (!a.tracked() && !b.tracked()) return Tensor{a.shape, std::move(out), -1};
    const int na = a.node, nb = b.node, n = a.size();
    return record(a.shape, std::move(out), [na, nb, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) {
            accumulate(grads, na, n, i, g[i]);
            accumulate(grads, nb, n, i, g[i]);
        }
    });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "sub: shapes differ");
    std::vector<double> out(a.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.v[i] - b.v[i];
    ensure_finite(out, "sub");
    if (!a.tracked() && !b.tracked()) return Tensor{a.shape, std::move(out), -1};
    const int na = a.node, nb = b.node, n = a.size();
    return record(a.shape, std::move(out), [na, nb, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) {
            accumulate(grads, na, n, i, g[i]);
            accumulate(grads, nb, n, i, -g[i]);
        }
    });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    require(a.shape == b.shape, "mul: shapes differ");
    std::vector<double> out(a.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.v[i] * b.v[i];
    ensure_finite(out, "mul");
    if (!a.tracked() && !b.tracked()) return Tensor{a.shape, std::move(out), -1};
    const int na = a.node, nb = b.node, n = a.size();
    auto av = a.v, bv = b.v;
    return record(a.shape, std::move(out),
                  [na, nb, n, av = std::move(av), bv = std::move(bv)](const std::vector<double>& g, GradientMap& grads) {
                      for (int i = 0; i < n; ++i) {
                          accumulate(grads, na, n, i, g[i] * bv[i]);
                          accumulate(grads, nb, n, i, g[i] * av[i]);
                      }
                  });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    require(a.shape.size() == 2 && b.shape.size() == 2, "matmul: rank-2 operands required");
    const int m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    require(k == k2, "matmul: inner dimensions differ");
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = a.v[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &b.v[p * n];
            double* orow = &out[i * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    ensure_finite(out, "matmul");
    if (!a.tracked() && !b.tracked()) return Tensor{{m, n}, std::move(out), -1};
    const int na = a.node, nb = b.node;
    auto av = a.v, bv = b.v;
    return record({m, n}, std::move(out),
                  [na, nb, m, k, n, av = std::move(av), bv = std::move(bv)](const std::vector<double>& g, GradientMap& grads) {
                      if (na >= 0) {
                          auto& ga = grads[na];
                          if (ga.empty()) ga.assign(static_cast<size_t>(m) * k, 0.0);
                          // dA = g * B^T
                          for (int i = 0; i < m; ++i)
                              for (int p = 0; p < k; ++p) {
                                  double s = 0.0;
                                  const double* grow = &g[i * n];
                                  const double* brow = &bv[p * n];
                                  for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                                  ga[i * k + p] += s;
                              }
                      }
                      if (nb >= 0) {
                          auto& gb = grads[nb];
                          if (gb.empty()) gb.assign(static_cast<size_t>(k) * n, 0.0);
                          // dB = A^T * g
                          for (int p = 0; p < k; ++p)
                              for (int i = 0; i < m; ++i) {
                                  const double aip = av[i * k + p];
                                  if (aip == 0.0) continue;
                                  const double* grow = &g[i * n];
                                  double* brow = &gb[p * n];
                                  for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
                              }
                      }
                  });
}

Tensor Tape::add_rows(const Tensor& m, const Tensor& row) {
    require(m.shape.size() == 2 && row.shape.size() == 1, "add_rows: [R,C] and [C] required");
    const int r = m.shape[0], c = m.shape[1];
    require(row.shape[0] == c, "add_rows: widths differ");
    std::vector<double> out(m.v.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[i * c + j] = m.v[i * c + j] + row.v[j];
    ensure_finite(out, "add_rows");
    if (!m.tracked() && !row.tracked()) return Tensor{m.shape, std::move(out), -1};
    const int nm = m.node, nr = row.node;
    return record(m.shape, std::move(out), [nm, nr, r, c](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                accumulate(grads, nm, r * c, i * c + j, g[i * c + j]);
                accumulate(grads, nr, c, j, g[i * c + j]);
            }
    });
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    const int r = parts[0].shape.size() == 2 ? parts[0].shape[0] : -1;
    require(r > 0, "concat_cols: rank-2 parts required");
    int total = 0;
    for (const auto& p : parts) {
        require(p.shape.size() == 2 && p.shape[0] == r, "concat_cols: row counts differ");
        total += p.shape[1];
    }
    std::vector<double> out(static_cast<size_t>(r) * total);
    int off = 0;
    struct Span {
        int node, cols, offset;
    };
    std::vector<Span> spans;
    bool tracked = false;
    for (const auto& p : parts) {
        const int c = p.shape[1];
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) out[i * total + off + j] = p.v[i * c + j];
        spans.push_back({p.node, c, off});
        tracked = tracked || p.tracked();
        off += c;
    }
    if (!tracked) return Tensor{{r, total}, std::move(out), -1};
    return record({r, total}, std::move(out),
                  [spans = std::move(spans), r, total](const std::vector<double>& g, GradientMap& grads) {
                      for (const auto& s : spans) {
                          if (s.node < 0) continue;
                          for (int i = 0; i < r; ++i)
                              for (int j = 0; j < s.cols; ++j)
                                  accumulate(grads, s.node, r * s.cols, i * s.cols + j, g[i * total + s.offset + j]);
                      }
                  });
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    const int c = parts[0].shape.size() == 2 ? parts[0].shape[1] : -1;
    require(c > 0, "concat_rows: rank-2 parts required");
    int total_rows = 0;
    for (const auto& p : parts) {
        require(p.shape.size() == 2 && p.shape[1] == c, "concat_rows: column counts differ");
        total_rows += p.shape[0];
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total_rows) * c);
    struct Span {
        int node, rows, row_offset;
    };
    std::vector<Span> spans;
    bool tracked = false;
    int row_off = 0;
    for (const auto& p : parts) {
        out.insert(out.end(), p.v.begin(), p.v.end());
        spans.push_back({p.node, p.shape[0], row_off});
        tracked = tracked || p.tracked();
        row_off += p.shape[0];
    }
    if (!tracked) return Tensor{{total_rows, c}, std::move(out), -1};
    return record({total_rows, c}, std::move(out),
                  [spans = std::move(spans), c](const std::vector<double>& g, GradientMap& grads) {
                      for (const auto& s : spans) {
                          if (s.node < 0) continue;
                          for (int i = 0; i < s.rows * c; ++i)
                              accumulate(grads, s.node, s.rows * c, i, g[s.row_offset * c + i]);
                      }
                  });
}

Tensor Tape::slice_rows(const Tensor& m, int begin, int end) {
    require(m.shape.size() == 2, "slice_rows: rank-2 operand required");
    const int r = m.shape[0], c = m.shape[1];
    require(begin >= 0 && begin < end && end <= r, "slice_rows: range out of bounds");
    std::vector<double> out(m.v.begin() + static_cast<size_t>(begin) * c,
                            m.v.begin() + static_cast<size_t>(end) * c);
    const Shape shape{end - begin, c};
    if (!m.tracked()) return Tensor{shape, std::move(out), -1};
    const int nm = m.node, n = (end - begin) * c, full = r * c, off = begin * c;
    return record(shape, std::move(out), [nm, n, full, off](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nm, full, off + i, g[i]);
    });
}

Tensor Tape::reshape(const Tensor& t, Shape shape) {
    require(shape_count(shape) == t.size(), "reshape: element count differs");
    if (!t.tracked()) return Tensor{std::move(shape), t.v, -1};
    const int nt = t.node, n = t.size();
    return record(std::move(shape), t.v, [nt, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[i]);
    });
}

Tensor Tape::sum(const Tensor& t) {
    const double s = std::accumulate(t.v.begin(), t.v.end(), 0.0);
    ensure_finite({s}, "sum");
    if (!t.tracked()) return Tensor::scalar(s);
    const int nt = t.node, n = t.size();
    return record({}, {s}, [nt, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[0]);
    });
}

Tensor Tape::mean(const Tensor& t) {
    require(t.size() > 0, "mean: empty tensor");
    const double s = std::accumulate(t.v.begin(), t.v.end(), 0.0) / t.size();
    ensure_finite({s}, "mean");
    if (!t.tracked()) return Tensor::scalar(s);
    const int nt = t.node, n = t.size();
    return record({}, {s}, [nt, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[0] / n);
    });
}

// Elementwise unary ops: out[i] = FWD_EXPR(x), backward uses BACK_EXPR(x, y).
#define CROWDCAST_UNARY(NAME, FWD_EXPR, BACK_EXPR)                                                    \
    Tensor Tape::NAME(const Tensor& t) {                                                              \
        std::vector<double> out(t.v.size());                                                          \
        for (size_t i = 0; i < out.size(); ++i) {                                                     \
            const double x = t.v[i];                                                                  \
            out[i] = (FWD_EXPR);                                                                      \
        }                                                                                             \
        ensure_finite(out, #NAME);                                                                    \
        if (!t.tracked()) return Tensor{t.shape, std::move(out), -1};                                 \
        const int nt = t.node, n = t.size();                                                          \
        auto xv = t.v;                                                                                \
        auto yv = out;                                                                                \
        return record(t.shape, std::move(out),                                                        \
                      [nt, n, xv = std::move(xv), yv = std::move(yv)](const std::vector<double>& g,   \
                                                                      GradientMap& grads) {           \
                          for (int i = 0; i < n; ++i) {                                               \
                              const double x = xv[i];                                                 \
                              const double y = yv[i];                                                 \
                              (void)x;                                                                \
                              (void)y;                                                                \
                              accumulate(grads, nt, n, i, g[i] * (BACK_EXPR));                        \
                          }                                                                           \
                      });                                                                             \
    }

CROWDCAST_UNARY(square, x* x, 2.0 * x)
CROWDCAST_UNARY(tanh, std::tanh(x), 1.0 - y * y)
CROWDCAST_UNARY(sigmoid, 1.0 / (1.0 + std::exp(-x)), y*(1.0 - y))
// Subgradient 0 on the inactive branch (x <= 0).
CROWDCAST_UNARY(relu, x > 0.0 ? x : 0.0, x > 0.0 ? 1.0 : 0.0)

#undef CROWDCAST_UNARY

Tensor Tape::scale(const Tensor& t, double factor) {
    std::vector<double> out(t.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.v[i] * factor;
    ensure_finite(out, "scale");
    if (!t.tracked()) return Tensor{t.shape, std::move(out), -1};
    const int nt = t.node, n = t.size();
    return record(t.shape, std::move(out), [nt, n, factor](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[i] * factor);
    });
}

Tensor Tape::add_scalar(const Tensor& t, double value) {
    std::vector<double> out(t.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.v[i] + value;
    ensure_finite(out, "add_scalar");
    if (!t.tracked()) return Tensor{t.shape, std::move(out), -1};
    const int nt = t.node, n = t.size();
    return record(t.shape, std::move(out), [nt, n](const std::vector<double>& g, GradientMap& grads) {
        for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[i]);
    });
}

Tensor Tape::sqrt_eps(const Tensor& t, double eps) {
    std::vector<double> out(t.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(t.v[i] + eps);
    ensure_finite(out, "sqrt_eps");
    if (!t.tracked()) return Tensor{t.shape, std::move(out), -1};
    const int nt = t.node, n = t.size();
    auto yv = out;
    return record(t.shape, std::move(out),
                  [nt, n, yv = std::move(yv)](const std::vector<double>& g, GradientMap& grads) {
                      for (int i = 0; i < n; ++i) accumulate(grads, nt, n, i, g[i] * 0.5 / yv[i]);
                  });
}

Tensor Tape::clamp_min(const Tensor& t, double floor) {
    std::vector<double> out(t.v.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t.v[i] < floor ? floor : t.v[i];
    ensure_finite(out, "clamp_min");
    if (!t.tracked()) return Tensor{t.shape, std::move(out), -1};
    const int nt = t.node, n = t.size();
    auto xv = t.v;
    return record(t.shape, std::move(out),
                  [nt, n, floor, xv = std::move(xv)](const std::vector<double>& g, GradientMap& grads) {
                      // Subgradient 0 on the clamped branch (including the kink itself).
                      for (int i = 0; i < n; ++i)
                          accumulate(grads, nt, n, i, xv[i] > floor ? g[i] : 0.0);
                  });
}

GradientMap Tape::backward(const Tensor& output) {
    if (output.size() != 1) throw NotScalarOutput("backward requires a scalar output");
    if (!output.tracked()) throw NotScalarOutput("backward requires a tracked output");
    GradientMap grads(nodes_.size());
    grads[output.node] = {1.0};
    for (int i = output.node; i >= 0; --i) {
        if (grads[i].empty()) continue;
        nodes_[i].back(grads[i], grads);
    }
    return grads;
}

double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                               const Tensor& x, double h) {
    Tape tape;
    Tensor xt = tape.leaf(x);
    Tensor y = f(tape, xt);
    GradientMap grads = tape.backward(y);
    std::vector<double> analytic(x.v.size(), 0.0);
    if (!grads[xt.node].empty()) analytic = grads[xt.node];

    double worst = 0.0;
    for (size_t i = 0; i < x.v.size(); ++i) {
        auto eval = [&](double delta) {
            Tensor xp = x;
            xp.v[i] += delta;
            Tape t2;
            return f(t2, t2.leaf(xp)).item();
        };
        const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace crowdcast::ad
