#include "grcn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "grcn/errors.hpp"
#include "grcn/kernels.hpp"

namespace grcn {

namespace {

constexpr double kNormEps = 1e-12;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

// Stable softplus: ln(1 + e^x) = max(x,0) + ln(1 + e^{ -|x| }).
double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Tensor value, std::vector<int> parents,
               std::function<void(Tape&, const Tensor&, const Node&)> pull) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.pull = std::move(pull);
    for (int p : n.parents) {
        if (nodes_[static_cast<std::size_t>(p)].needs_grad) {
            n.needs_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::check_mine(Var v, const char* op) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw TapeError(std::string(op) + ": handle does not belong to this tape");
    }
}

const Tape::Node& Tape::node(Var v) const {
    check_mine(v, "node");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::has_grad(Var v) const { return node(v).grad_set; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.grad_set) throw TapeError("gradient not available; run backward() first");
    return n.grad;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad_set) {
        n.grad = Tensor::zeros_like(n.value);
        n.grad_set = true;
    }
    return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    Tensor& buf = grad_buffer(id);
    const double* src = g.data();
    double* dst = buf.data();
    for (std::size_t i = 0, e = buf.numel(); i < e; ++i) dst[i] += src[i];
}

Var Tape::leaf(Tensor value, bool trainable) {
    Node n;
    n.value = std::move(value);
    n.trainable = trainable;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::add(Var a, Var b) {
    check_mine(a, "add");
    check_mine(b, "add");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape(ta, tb, "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tb[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, const Tensor& g, const Node& self) {
        t.accumulate(self.parents[0], g);
        t.accumulate(self.parents[1], g);
    });
}

Var Tape::add_n(const std::vector<Var>& xs) {
    if (xs.empty()) throw DomainError("add_n: empty input list");
    Tensor out = value(xs[0]);
    std::vector<int> parents{xs[0].id};
    for (std::size_t j = 1; j < xs.size(); ++j) {
        check_mine(xs[j], "add_n");
        const Tensor& tj = value(xs[j]);
        check_same_shape(out, tj, "add_n");
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tj[i];
        parents.push_back(xs[j].id);
    }
    return push(std::move(out), std::move(parents),
                [](Tape& t, const Tensor& g, const Node& self) {
                    for (int p : self.parents) t.accumulate(p, g);
                });
}

Var Tape::sub(Var a, Var b) {
    check_mine(a, "sub");
    check_mine(b, "sub");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape(ta, tb, "sub");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= tb[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, const Tensor& g, const Node& self) {
        t.accumulate(self.parents[0], g);
        Node& nb = t.nodes_[static_cast<std::size_t>(self.parents[1])];
        if (!nb.needs_grad) return;
        Tensor& buf = t.grad_buffer(self.parents[1]);
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] -= g[i];
    });
}

Var Tape::mul(Var a, Var b) {
    check_mine(a, "mul");
    check_mine(b, "mul");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape(ta, tb, "mul");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= tb[i];
    return push(std::move(out), {a.id, b.id}, [](Tape& t, const Tensor& g, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
        const Tensor& vb = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
        if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[0]);
            for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i] * vb[i];
        }
        if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[1]);
            for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i] * va[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    check_mine(a, "scale");
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return push(std::move(out), {a.id}, [c](Tape& t, const Tensor& g, const Node& self) {
        Node& na = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!na.needs_grad) return;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += c * g[i];
    });
}

Var Tape::leaky_relu(Var x, double slope) {
    check_mine(x, "leaky_relu");
    if (!(slope > 0.0 && slope < 1.0)) {
        throw DomainError("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
    }
    Tensor out = value(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], slope * out[i]);
    // Subgradient at 0 uses the negative-branch slope.
    return push(std::move(out), {x.id}, [slope](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        const Tensor& vx = nx.value;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < buf.numel(); ++i) {
            buf[i] += g[i] * (vx[i] > 0.0 ? 1.0 : slope);
        }
    });
}

Var Tape::relu(Var x) {
    check_mine(x, "relu");
    Tensor out = value(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
    return push(std::move(out), {x.id}, [](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        const Tensor& vx = nx.value;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += vx[i] > 0.0 ? g[i] : 0.0;
    });
}

Var Tape::softplus(Var x) {
    check_mine(x, "softplus");
    Tensor out = value(x);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = softplus_value(out[i]);
    return push(std::move(out), {x.id}, [](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        const Tensor& vx = nx.value;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i] * sigmoid(vx[i]);
    });
}

Var Tape::sum(Var x) {
    check_mine(x, "sum");
    const Tensor& vx = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < vx.numel(); ++i) s += vx[i];
    return push(Tensor::scalar(s), {x.id}, [](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[0];
    });
}

Var Tape::dot(Var a, Var b) {
    check_mine(a, "dot");
    check_mine(b, "dot");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    check_same_shape(ta, tb, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < ta.numel(); ++i) s += ta[i] * tb[i];
    return push(Tensor::scalar(s), {a.id, b.id}, [](Tape& t, const Tensor& g, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
        const Tensor& vb = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
        if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[0]);
            for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[0] * vb[i];
        }
        if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[1]);
            for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[0] * va[i];
        }
    });
}

Var Tape::matmul(Var a, Var b) {
    check_mine(a, "matmul");
    check_mine(b, "matmul");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
        throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " and " +
                         tb.shape_str());
    }
    std::size_t r = ta.rows(), k = ta.cols(), c = tb.cols();
    Tensor out({r, c});
    kernels::matmul(ta.data(), tb.data(), out.data(), r, k, c);
    return push(std::move(out), {a.id, b.id}, [r, k, c](Tape& t, const Tensor& g, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
        const Tensor& vb = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
        if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
            Tensor da({r, k});
            kernels::matmul_nt(g.data(), vb.data(), da.data(), r, c, k);
            t.accumulate(self.parents[0], da);
        }
        if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
            Tensor db({k, c});
            kernels::matmul_tn(va.data(), g.data(), db.data(), k, r, c);
            t.accumulate(self.parents[1], db);
        }
    });
}

Var Tape::linear(Var x, Var w, Var b) {
    check_mine(x, "linear");
    check_mine(w, "linear");
    check_mine(b, "linear");
    const Tensor& tx = value(x);
    const Tensor& tw = value(w);
    const Tensor& tb = value(b);
    if (tx.rank() != 2 || tw.rank() != 2 || tx.cols() != tw.cols()) {
        throw ShapeError("linear: incompatible shapes " + tx.shape_str() + " and " +
                         tw.shape_str());
    }
    if (tb.rank() != 1 || tb.numel() != tw.rows()) {
        throw ShapeError("linear: bias " + tb.shape_str() + " does not match weight rows " +
                         std::to_string(tw.rows()));
    }
    std::size_t m = tx.rows(), din = tx.cols(), dout = tw.rows();
    Tensor out({m, dout});
    kernels::matmul_nt(tx.data(), tw.data(), out.data(), m, din, dout);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * dout;
        for (std::size_t j = 0; j < dout; ++j) row[j] += tb[j];
    }
    return push(std::move(out), {x.id, w.id, b.id},
                [m, din, dout](Tape& t, const Tensor& g, const Node& self) {
                    const Tensor& vx = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
                    const Tensor& vw = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
                    if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
                        Tensor dx({m, din});
                        kernels::matmul(g.data(), vw.data(), dx.data(), m, dout, din);
                        t.accumulate(self.parents[0], dx);
                    }
                    if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
                        Tensor dw({dout, din});
                        kernels::matmul_tn(g.data(), vx.data(), dw.data(), dout, m, din);
                        t.accumulate(self.parents[1], dw);
                    }
                    if (t.nodes_[static_cast<std::size_t>(self.parents[2])].needs_grad) {
                        Tensor& buf = t.grad_buffer(self.parents[2]);
                        for (std::size_t i = 0; i < m; ++i) {
                            const double* row = g.data() + i * dout;
                            for (std::size_t j = 0; j < dout; ++j) buf[j] += row[j];
                        }
                    }
                });
}

Var Tape::matvec(Var a, Var x) {
    check_mine(a, "matvec");
    check_mine(x, "matvec");
    const Tensor& ta = value(a);
    const Tensor& tx = value(x);
    if (ta.rank() != 2 || tx.rank() != 1 || ta.cols() != tx.numel()) {
        throw ShapeError("matvec: incompatible shapes " + ta.shape_str() + " and " +
                         tx.shape_str());
    }
    std::size_t k = ta.rows(), d = ta.cols();
    Tensor out({k});
    for (std::size_t i = 0; i < k; ++i) {
        const double* row = ta.data() + i * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += row[j] * tx[j];
        out[i] = acc;
    }
    return push(std::move(out), {a.id, x.id}, [k, d](Tape& t, const Tensor& g, const Node& self) {
        const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
        const Tensor& vx = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
        if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[0]);
            for (std::size_t i = 0; i < k; ++i) {
                double gi = g[i];
                double* row = buf.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) row[j] += gi * vx[j];
            }
        }
        if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[1]);
            for (std::size_t i = 0; i < k; ++i) {
                double gi = g[i];
                const double* row = va.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) buf[j] += gi * row[j];
            }
        }
    });
}

Var Tape::vecmat(Var p, Var a) {
    check_mine(p, "vecmat");
    check_mine(a, "vecmat");
    const Tensor& tp = value(p);
    const Tensor& ta = value(a);
    if (tp.rank() != 1 || ta.rank() != 2 || tp.numel() != ta.rows()) {
        throw ShapeError("vecmat: incompatible shapes " + tp.shape_str() + " and " +
                         ta.shape_str());
    }
    std::size_t k = ta.rows(), d = ta.cols();
    Tensor out({d});
    for (std::size_t i = 0; i < k; ++i) {
        const double* row = ta.data() + i * d;
        double pi = tp[i];
        for (std::size_t j = 0; j < d; ++j) out[j] += pi * row[j];
    }
    return push(std::move(out), {p.id, a.id}, [k, d](Tape& t, const Tensor& g, const Node& self) {
        const Tensor& vp = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
        const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
        if (t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[0]);
            for (std::size_t i = 0; i < k; ++i) {
                const double* row = va.data() + i * d;
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += row[j] * g[j];
                buf[i] += acc;
            }
        }
        if (t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad) {
            Tensor& buf = t.grad_buffer(self.parents[1]);
            for (std::size_t i = 0; i < k; ++i) {
                double pi = vp[i];
                double* row = buf.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) row[j] += pi * g[j];
            }
        }
    });
}

Var Tape::softmax(Var logits) {
    check_mine(logits, "softmax");
    const Tensor& tx = value(logits);
    if (tx.rank() != 1) throw ShapeError("softmax: expected rank-1 logits, got " + tx.shape_str());
    if (tx.numel() == 0) throw DomainError("softmax: empty logit set");
    std::size_t n = tx.numel();
    Tensor out({n});
    double mx = tx[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, tx[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(tx[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
    return push(std::move(out), {logits.id}, [n](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        const Tensor& p = self.value;
        double gp = 0.0;
        for (std::size_t i = 0; i < n; ++i) gp += g[i] * p[i];
        Tensor& buf = t.grad_buffer(self.parents[0]);
        for (std::size_t i = 0; i < n; ++i) buf[i] += p[i] * (g[i] - gp);
    });
}

Var Tape::l2_normalize(Var x) {
    check_mine(x, "l2_normalize");
    const Tensor& tx = value(x);
    if (tx.rank() != 1) {
        throw ShapeError("l2_normalize: expected rank-1 input, got " + tx.shape_str());
    }
    double norm = tx.norm2();
    Tensor out = tx;
    if (norm > kNormEps) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= norm;
    }
    return push(std::move(out), {x.id}, [norm](Tape& t, const Tensor& g, const Node& self) {
        Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!nx.needs_grad) return;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        if (norm <= kNormEps) {
            // Identity branch below the epsilon guard.
            for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i];
            return;
        }
        const Tensor& y = self.value;
        double gy = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += (g[i] - y[i] * gy) / norm;
    });
}

Var Tape::rows_l2_normalize(Var x) {
    check_mine(x, "rows_l2_normalize");
    const Tensor& tx = value(x);
    if (tx.rank() != 2) {
        throw ShapeError("rows_l2_normalize: expected rank-2 input, got " + tx.shape_str());
    }
    std::size_t r = tx.rows(), d = tx.cols();
    Tensor out = tx;
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += row[j] * row[j];
        double norm = std::sqrt(s);
        norms[i] = norm;
        if (norm > kNormEps) {
            for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
        }
    }
    return push(std::move(out), {x.id},
                [r, d, norms = std::move(norms)](Tape& t, const Tensor& g, const Node& self) {
                    Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!nx.needs_grad) return;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    const Tensor& y = self.value;
                    for (std::size_t i = 0; i < r; ++i) {
                        const double* gr = g.data() + i * d;
                        double* br = buf.data() + i * d;
                        if (norms[i] <= kNormEps) {
                            for (std::size_t j = 0; j < d; ++j) br[j] += gr[j];
                            continue;
                        }
                        const double* yr = y.data() + i * d;
                        double gy = 0.0;
                        for (std::size_t j = 0; j < d; ++j) gy += gr[j] * yr[j];
                        for (std::size_t j = 0; j < d; ++j) {
                            br[j] += (gr[j] - yr[j] * gy) / norms[i];
                        }
                    }
                });
}

Var Tape::row(Var a, std::size_t i) {
    check_mine(a, "row");
    const Tensor& ta = value(a);
    if (ta.rank() != 2 || i >= ta.rows()) {
        throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                         ta.shape_str());
    }
    std::size_t d = ta.cols();
    Tensor out({d});
    std::copy(ta.data() + i * d, ta.data() + (i + 1) * d, out.data());
    return push(std::move(out), {a.id}, [i, d](Tape& t, const Tensor& g, const Node& self) {
        Node& na = t.nodes_[static_cast<std::size_t>(self.parents[0])];
        if (!na.needs_grad) return;
        Tensor& buf = t.grad_buffer(self.parents[0]);
        double* dst = buf.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
    check_mine(a, "slice_rows");
    const Tensor& ta = value(a);
    if (ta.rank() != 2 || begin + count > ta.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + count) + ") out of range for " + ta.shape_str());
    }
    std::size_t d = ta.cols();
    Tensor out({count, d});
    std::copy(ta.data() + begin * d, ta.data() + (begin + count) * d, out.data());
    return push(std::move(out), {a.id},
                [begin, count, d](Tape& t, const Tensor& g, const Node& self) {
                    Node& na = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!na.needs_grad) return;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    double* dst = buf.data() + begin * d;
                    for (std::size_t j = 0; j < count * d; ++j) dst[j] += g[j];
                });
}

Var Tape::gather_rows(Var a, std::vector<std::uint32_t> idx) {
    check_mine(a, "gather_rows");
    const Tensor& ta = value(a);
    if (ta.rank() != 2) throw ShapeError("gather_rows: expected matrix, got " + ta.shape_str());
    std::size_t d = ta.cols();
    for (std::uint32_t i : idx) {
        if (i >= ta.rows()) {
            throw ShapeError("gather_rows: row index " + std::to_string(i) +
                             " out of range for " + ta.shape_str());
        }
    }
    Tensor out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        std::copy(ta.data() + static_cast<std::size_t>(idx[r]) * d,
                  ta.data() + (static_cast<std::size_t>(idx[r]) + 1) * d, out.data() + r * d);
    }
    return push(std::move(out), {a.id},
                [d, idx = std::move(idx)](Tape& t, const Tensor& g, const Node& self) {
                    Node& na = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!na.needs_grad) return;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                        double* dst = buf.data() + static_cast<std::size_t>(idx[r]) * d;
                        const double* src = g.data() + r * d;
                        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                });
}

Var Tape::gather(Var x, std::vector<std::uint32_t> idx) {
    check_mine(x, "gather");
    const Tensor& tx = value(x);
    if (tx.rank() != 1) throw ShapeError("gather: expected vector, got " + tx.shape_str());
    for (std::uint32_t i : idx) {
        if (i >= tx.numel()) {
            throw ShapeError("gather: index " + std::to_string(i) + " out of range for " +
                             tx.shape_str());
        }
    }
    Tensor out({idx.size()});
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = tx[idx[r]];
    return push(std::move(out), {x.id},
                [idx = std::move(idx)](Tape& t, const Tensor& g, const Node& self) {
                    Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!nx.needs_grad) return;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    for (std::size_t r = 0; r < idx.size(); ++r) buf[idx[r]] += g[r];
                });
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw DomainError("stack_rows: empty input list");
    std::size_t d = value(rows[0]).numel();
    std::vector<int> parents;
    parents.reserve(rows.size());
    Tensor out({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        check_mine(rows[r], "stack_rows");
        const Tensor& tr = value(rows[r]);
        if (tr.rank() != 1 || tr.numel() != d) {
            throw ShapeError("stack_rows: row " + std::to_string(r) + " has shape " +
                             tr.shape_str() + ", expected [" + std::to_string(d) + "]");
        }
        std::copy(tr.data(), tr.data() + d, out.data() + r * d);
        parents.push_back(rows[r].id);
    }
    return push(std::move(out), std::move(parents),
                [d](Tape& t, const Tensor& g, const Node& self) {
                    for (std::size_t r = 0; r < self.parents.size(); ++r) {
                        Node& np = t.nodes_[static_cast<std::size_t>(self.parents[r])];
                        if (!np.needs_grad) continue;
                        Tensor& buf = t.grad_buffer(self.parents[r]);
                        const double* src = g.data() + r * d;
                        for (std::size_t j = 0; j < d; ++j) buf[j] += src[j];
                    }
                });
}

Var Tape::concat(const std::vector<Var>& vecs) {
    if (vecs.empty()) throw DomainError("concat: empty input list");
    std::size_t total = 0;
    std::vector<int> parents;
    std::vector<std::size_t> sizes;
    for (Var v : vecs) {
        check_mine(v, "concat");
        const Tensor& tv = value(v);
        if (tv.rank() != 1) throw ShapeError("concat: expected vectors, got " + tv.shape_str());
        total += tv.numel();
        sizes.push_back(tv.numel());
        parents.push_back(v.id);
    }
    Tensor out({total});
    std::size_t off = 0;
    for (Var v : vecs) {
        const Tensor& tv = value(v);
        std::copy(tv.data(), tv.data() + tv.numel(), out.data() + off);
        off += tv.numel();
    }
    return push(std::move(out), std::move(parents),
                [sizes = std::move(sizes)](Tape& t, const Tensor& g, const Node& self) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < self.parents.size(); ++p) {
                        Node& np = t.nodes_[static_cast<std::size_t>(self.parents[p])];
                        if (np.needs_grad) {
                            Tensor& buf = t.grad_buffer(self.parents[p]);
                            for (std::size_t j = 0; j < sizes[p]; ++j) buf[j] += g[off + j];
                        }
                        off += sizes[p];
                    }
                });
}

Var Tape::concat_cols(const std::vector<Var>& mats) {
    if (mats.empty()) throw DomainError("concat_cols: empty input list");
    std::size_t rows = value(mats[0]).rows();
    std::size_t total = 0;
    std::vector<int> parents;
    std::vector<std::size_t> widths;
    for (Var m : mats) {
        check_mine(m, "concat_cols");
        const Tensor& tm = value(m);
        if (tm.rank() != 2 || tm.rows() != rows) {
            throw ShapeError("concat_cols: row count mismatch, " + tm.shape_str() + " vs " +
                             std::to_string(rows) + " rows");
        }
        total += tm.cols();
        widths.push_back(tm.cols());
        parents.push_back(m.id);
    }
    Tensor out({rows, total});
    std::size_t off = 0;
    for (Var m : mats) {
        const Tensor& tm = value(m);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(tm.data() + r * tm.cols(), tm.data() + (r + 1) * tm.cols(),
                      out.data() + r * total + off);
        }
        off += tm.cols();
    }
    return push(std::move(out), std::move(parents),
                [rows, total, widths = std::move(widths)](Tape& t, const Tensor& g,
                                                          const Node& self) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < self.parents.size(); ++p) {
                        Node& np = t.nodes_[static_cast<std::size_t>(self.parents[p])];
                        if (np.needs_grad) {
                            Tensor& buf = t.grad_buffer(self.parents[p]);
                            for (std::size_t r = 0; r < rows; ++r) {
                                const double* src = g.data() + r * total + off;
                                double* dst = buf.data() + r * widths[p];
                                for (std::size_t j = 0; j < widths[p]; ++j) dst[j] += src[j];
                            }
                        }
                        off += widths[p];
                    }
                });
}

Var Tape::edge_dot(Var a, Var b, std::vector<std::uint32_t> ia, std::vector<std::uint32_t> ib) {
    check_mine(a, "edge_dot");
    check_mine(b, "edge_dot");
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols()) {
        throw ShapeError("edge_dot: incompatible shapes " + ta.shape_str() + " and " +
                         tb.shape_str());
    }
    if (ia.size() != ib.size()) throw ShapeError("edge_dot: index lists differ in length");
    std::size_t d = ta.cols();
    Tensor out({ia.size()});
    kernels::edge_dot(ta.data(), tb.data(), ia.data(), ib.data(), out.data(), ia.size(), d);
    return push(std::move(out), {a.id, b.id},
                [d, ia = std::move(ia), ib = std::move(ib)](Tape& t, const Tensor& g,
                                                            const Node& self) {
                    const Tensor& va = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
                    const Tensor& vb = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
                    bool ga = t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad;
                    bool gb = t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad;
                    Tensor* bufa = ga ? &t.grad_buffer(self.parents[0]) : nullptr;
                    Tensor* bufb = gb ? &t.grad_buffer(self.parents[1]) : nullptr;
                    for (std::size_t e = 0; e < ia.size(); ++e) {
                        double ge = g[e];
                        const double* ra = va.data() + static_cast<std::size_t>(ia[e]) * d;
                        const double* rb = vb.data() + static_cast<std::size_t>(ib[e]) * d;
                        if (bufa) {
                            double* dst = bufa->data() + static_cast<std::size_t>(ia[e]) * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += ge * rb[j];
                        }
                        if (bufb) {
                            double* dst = bufb->data() + static_cast<std::size_t>(ib[e]) * d;
                            for (std::size_t j = 0; j < d; ++j) dst[j] += ge * ra[j];
                        }
                    }
                });
}

Var Tape::segment_softmax(Var x, std::vector<std::size_t> offsets) {
    check_mine(x, "segment_softmax");
    const Tensor& tx = value(x);
    if (tx.rank() != 1) {
        throw ShapeError("segment_softmax: expected vector, got " + tx.shape_str());
    }
    if (offsets.empty() || offsets.back() != tx.numel()) {
        throw ShapeError("segment_softmax: offsets do not cover the input");
    }
    std::size_t nseg = offsets.size() - 1;
    Tensor out({tx.numel()});
    kernels::segment_softmax(tx.data(), offsets.data(), nseg, out.data());
    return push(std::move(out), {x.id},
                [nseg, offsets = std::move(offsets)](Tape& t, const Tensor& g, const Node& self) {
                    Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!nx.needs_grad) return;
                    const Tensor& p = self.value;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    for (std::size_t s = 0; s < nseg; ++s) {
                        std::size_t lo = offsets[s], hi = offsets[s + 1];
                        double gp = 0.0;
                        for (std::size_t e = lo; e < hi; ++e) gp += g[e] * p[e];
                        for (std::size_t e = lo; e < hi; ++e) buf[e] += p[e] * (g[e] - gp);
                    }
                });
}

Var Tape::segment_weighted_rows(Var rows, Var w, std::vector<std::uint32_t> row_idx,
                                std::vector<std::size_t> offsets) {
    check_mine(rows, "segment_weighted_rows");
    check_mine(w, "segment_weighted_rows");
    const Tensor& tr = value(rows);
    const Tensor& tw = value(w);
    if (tr.rank() != 2) {
        throw ShapeError("segment_weighted_rows: expected matrix rows, got " + tr.shape_str());
    }
    if (tw.rank() != 1 || tw.numel() != row_idx.size()) {
        throw ShapeError("segment_weighted_rows: weights " + tw.shape_str() +
                         " do not match edge count " + std::to_string(row_idx.size()));
    }
    if (offsets.empty() || offsets.back() != row_idx.size()) {
        throw ShapeError("segment_weighted_rows: offsets do not cover the edges");
    }
    std::size_t nseg = offsets.size() - 1;
    std::size_t d = tr.cols();
    Tensor out({nseg, d});
    kernels::segment_weighted_rows(tr.data(), tw.data(), row_idx.data(), offsets.data(), nseg, d,
                                   out.data());
    return push(std::move(out), {rows.id, w.id},
                [nseg, d, row_idx = std::move(row_idx), offsets = std::move(offsets)](
                    Tape& t, const Tensor& g, const Node& self) {
                    const Tensor& vr = t.nodes_[static_cast<std::size_t>(self.parents[0])].value;
                    const Tensor& vw = t.nodes_[static_cast<std::size_t>(self.parents[1])].value;
                    bool gr = t.nodes_[static_cast<std::size_t>(self.parents[0])].needs_grad;
                    bool gw = t.nodes_[static_cast<std::size_t>(self.parents[1])].needs_grad;
                    Tensor* bufr = gr ? &t.grad_buffer(self.parents[0]) : nullptr;
                    Tensor* bufw = gw ? &t.grad_buffer(self.parents[1]) : nullptr;
                    for (std::size_t s = 0; s < nseg; ++s) {
                        const double* gs = g.data() + s * d;
                        for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
                            std::size_t src = static_cast<std::size_t>(row_idx[e]);
                            if (bufw) {
                                const double* rv = vr.data() + src * d;
                                double acc = 0.0;
                                for (std::size_t j = 0; j < d; ++j) acc += gs[j] * rv[j];
                                (*bufw)[e] += acc;
                            }
                            if (bufr) {
                                double* dst = bufr->data() + src * d;
                                double we = vw[e];
                                for (std::size_t j = 0; j < d; ++j) dst[j] += we * gs[j];
                            }
                        }
                    }
                });
}

Var Tape::segment_mean_expand(Var x, std::vector<std::size_t> offsets) {
    check_mine(x, "segment_mean_expand");
    const Tensor& tx = value(x);
    if (tx.rank() != 1) {
        throw ShapeError("segment_mean_expand: expected vector, got " + tx.shape_str());
    }
    if (offsets.empty() || offsets.back() != tx.numel()) {
        throw ShapeError("segment_mean_expand: offsets do not cover the input");
    }
    std::size_t nseg = offsets.size() - 1;
    Tensor out({tx.numel()});
    for (std::size_t s = 0; s < nseg; ++s) {
        std::size_t lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        double mean = 0.0;
        for (std::size_t e = lo; e < hi; ++e) mean += tx[e];
        mean /= static_cast<double>(hi - lo);
        for (std::size_t e = lo; e < hi; ++e) out[e] = mean;
    }
    return push(std::move(out), {x.id},
                [nseg, offsets = std::move(offsets)](Tape& t, const Tensor& g, const Node& self) {
                    Node& nx = t.nodes_[static_cast<std::size_t>(self.parents[0])];
                    if (!nx.needs_grad) return;
                    Tensor& buf = t.grad_buffer(self.parents[0]);
                    for (std::size_t s = 0; s < nseg; ++s) {
                        std::size_t lo = offsets[s], hi = offsets[s + 1];
                        if (hi == lo) continue;
                        double gsum = 0.0;
                        for (std::size_t e = lo; e < hi; ++e) gsum += g[e];
                        gsum /= static_cast<double>(hi - lo);
                        for (std::size_t e = lo; e < hi; ++e) buf[e] += gsum;
                    }
                });
}

Var Tape::emax(const std::vector<Var>& xs) {
    if (xs.empty()) throw DomainError("emax: empty input list");
    const Tensor& t0 = value(xs[0]);
    std::vector<int> parents;
    for (Var v : xs) {
        check_mine(v, "emax");
        check_same_shape(t0, value(v), "emax");
        parents.push_back(v.id);
    }
    std::size_t n = t0.numel();
    Tensor out = t0;
    // Ties resolve to the lowest input index; the winner takes the gradient.
    std::vector<std::uint32_t> winner(n, 0);
    for (std::size_t p = 1; p < xs.size(); ++p) {
        const Tensor& tp = value(xs[p]);
        for (std::size_t i = 0; i < n; ++i) {
            if (tp[i] > out[i]) {
                out[i] = tp[i];
                winner[i] = static_cast<std::uint32_t>(p);
            }
        }
    }
    return push(std::move(out), std::move(parents),
                [winner = std::move(winner)](Tape& t, const Tensor& g, const Node& self) {
                    for (std::size_t i = 0; i < winner.size(); ++i) {
                        int pid = self.parents[winner[i]];
                        Node& np = t.nodes_[static_cast<std::size_t>(pid)];
                        if (!np.needs_grad) continue;
                        t.grad_buffer(pid)[i] += g[i];
                    }
                });
}

Var Tape::emean(const std::vector<Var>& xs) {
    if (xs.empty()) throw DomainError("emean: empty input list");
    const Tensor& t0 = value(xs[0]);
    std::vector<int> parents;
    Tensor out = Tensor::zeros_like(t0);
    for (Var v : xs) {
        check_mine(v, "emean");
        const Tensor& tv = value(v);
        check_same_shape(t0, tv, "emean");
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += tv[i];
        parents.push_back(v.id);
    }
    double inv = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return push(std::move(out), std::move(parents),
                [inv](Tape& t, const Tensor& g, const Node& self) {
                    for (int pid : self.parents) {
                        Node& np = t.nodes_[static_cast<std::size_t>(pid)];
                        if (!np.needs_grad) continue;
                        Tensor& buf = t.grad_buffer(pid);
                        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += inv * g[i];
                    }
                });
}

Var Tape::l2_norm_many(const std::vector<Var>& xs) {
    if (xs.empty()) throw DomainError("l2_norm_many: empty input list");
    std::vector<int> parents;
    double ss = 0.0;
    for (Var v : xs) {
        check_mine(v, "l2_norm_many");
        const Tensor& tv = value(v);
        for (std::size_t i = 0; i < tv.numel(); ++i) ss += tv[i] * tv[i];
        parents.push_back(v.id);
    }
    double norm = std::sqrt(ss);
    return push(Tensor::scalar(norm), std::move(parents),
                [norm](Tape& t, const Tensor& g, const Node& self) {
                    double denom = std::max(norm, kNormEps);
                    for (int pid : self.parents) {
                        Node& np = t.nodes_[static_cast<std::size_t>(pid)];
                        if (!np.needs_grad) continue;
                        const Tensor& v = np.value;
                        Tensor& buf = t.grad_buffer(pid);
                        for (std::size_t i = 0; i < buf.numel(); ++i) {
                            buf[i] += g[0] * v[i] / denom;
                        }
                    }
                });
}

Var Tape::sum_squares_many(const std::vector<Var>& xs) {
    if (xs.empty()) throw DomainError("sum_squares_many: empty input list");
    std::vector<int> parents;
    double ss = 0.0;
    for (Var v : xs) {
        check_mine(v, "sum_squares_many");
        const Tensor& tv = value(v);
        for (std::size_t i = 0; i < tv.numel(); ++i) ss += tv[i] * tv[i];
        parents.push_back(v.id);
    }
    return push(Tensor::scalar(ss), std::move(parents),
                [](Tape& t, const Tensor& g, const Node& self) {
                    for (int pid : self.parents) {
                        Node& np = t.nodes_[static_cast<std::size_t>(pid)];
                        if (!np.needs_grad) continue;
                        const Tensor& v = np.value;
                        Tensor& buf = t.grad_buffer(pid);
                        for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += 2.0 * g[0] * v[i];
                    }
                });
}

void Tape::backward(Var loss) {
    if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size())) {
        throw TapeError("backward: loss handle is detached from this tape");
    }
    if (backward_done_) {
        throw TapeError("backward: already called on this tape; reset_gradients() first");
    }
    const Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (!ln.value.is_scalar()) {
        throw ShapeError("backward: loss must be scalar, got " + ln.value.shape_str());
    }
    backward_done_ = true;
    grad_buffer(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.grad_set || !n.needs_grad || !n.pull) continue;
        n.pull(*this, n.grad, n);
    }
    // Trainable leaves unreachable from the loss still get a (zero) gradient.
    for (Node& n : nodes_) {
        if (n.trainable && !n.grad_set) {
            n.grad = Tensor::zeros_like(n.value);
            n.grad_set = true;
        }
    }
}

void Tape::reset_gradients() {
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.grad_set = false;
    }
    backward_done_ = false;
}

}  // namespace grcn
