#include "a2fm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace a2fm {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::Conv3d: return "conv3d";
        case Op::Dense: return "dense";
        case Op::Relu: return "relu";
        case Op::MeanPool: return "mean_pool";
        case Op::Softmax: return "softmax";
        case Op::SoftmaxXent: return "softmax_xent";
        case Op::GruCell: return "gru_cell";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::ConcatTime: return "concat_time";
        case Op::SliceTime: return "slice_time";
        case Op::L2Norm: return "l2_norm";
        case Op::MaxAbs: return "max_abs";
        case Op::SumAbs: return "sum_abs";
    }
    return "?";
}

std::string Graph::describe(int id) const {
    const Node& n = nodes_[id];
    std::string s = "node " + std::to_string(id) + " (" + op_name(n.op);
    if (!n.name.empty()) s += " '" + n.name + "'";
    s += ")";
    return s;
}

int Graph::push(Node n) {
    for (int p : n.parents) {
        if (p < 0 || p >= node_count()) {
            throw std::invalid_argument("parent id " + std::to_string(p) + " out of range");
        }
    }
    nodes_.push_back(std::move(n));
    return node_count() - 1;
}

static void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

int Graph::input(const std::string& name, Shape shape) {
    require(!name.empty(), "input node needs a name");
    require(!shape.empty(), "input node needs a non-empty shape");
    for (const Node& n : nodes_) {
        require(!(n.op == Op::Input && n.name == name), "duplicate input name '" + name + "'");
    }
    Node n;
    n.op = Op::Input;
    n.name = name;
    n.shape = std::move(shape);
    return push(std::move(n));
}

int Graph::constant(Tensor value) {
    require(!value.empty(), "constant node needs a non-empty value");
    if (!value.all_finite()) throw std::invalid_argument("constant value must be finite");
    Node n;
    n.op = Op::Constant;
    n.shape = value.shape();
    n.value = std::move(value);
    n.evaluated = true;
    return push(std::move(n));
}

int Graph::conv3d(int x, int w, int b, int pad_t, int pad_w, int pad_h) {
    const Shape& xs = nodes_[x].shape;
    const Shape& ws = nodes_[w].shape;
    const Shape& bs = nodes_[b].shape;
    require(xs.size() == 4, "conv3d expects rank-4 input [T,W,H,C], got " + shape_str(xs) +
                                " from " + describe(x));
    require(ws.size() == 5, "conv3d expects rank-5 weight [Kt,Kw,Kh,Cin,Cout], got " + shape_str(ws) +
                                " from " + describe(w));
    require(bs.size() == 1 && bs[0] == ws[4],
            "conv3d bias must be [Cout]=" + std::to_string(ws[4]) + ", got " + shape_str(bs) +
                " from " + describe(b));
    require(ws[3] == xs[3], "conv3d channel mismatch: input " + shape_str(xs) + " vs weight " +
                                shape_str(ws) + " at " + describe(w));
    require(pad_t >= 0 && pad_w >= 0 && pad_h >= 0, "conv3d padding must be >= 0");
    int to = xs[0] + 2 * pad_t - ws[0] + 1;
    int wo = xs[1] + 2 * pad_w - ws[1] + 1;
    int ho = xs[2] + 2 * pad_h - ws[2] + 1;
    require(to >= 1 && wo >= 1 && ho >= 1,
            "conv3d kernel " + shape_str(ws) + " does not fit input " + shape_str(xs) +
                " with padding (" + std::to_string(pad_t) + "," + std::to_string(pad_w) + "," +
                std::to_string(pad_h) + ")");
    Node n;
    n.op = Op::Conv3d;
    n.parents = {x, w, b};
    n.shape = {to, wo, ho, ws[4]};
    n.pad_t = pad_t;
    n.pad_w = pad_w;
    n.pad_h = pad_h;
    return push(std::move(n));
}

int Graph::dense(int x, int w, int b) {
    const Shape& ws = nodes_[w].shape;
    const Shape& bs = nodes_[b].shape;
    std::size_t numel = shape_numel(nodes_[x].shape);
    require(ws.size() == 2, "dense weight must be rank 2, got " + shape_str(ws) + " from " + describe(w));
    require(static_cast<std::size_t>(ws[0]) == numel,
            "dense weight rows " + std::to_string(ws[0]) + " != flattened input size " +
                std::to_string(numel) + " at " + describe(x));
    require(bs.size() == 1 && bs[0] == ws[1],
            "dense bias must be [" + std::to_string(ws[1]) + "], got " + shape_str(bs) + " from " + describe(b));
    Node n;
    n.op = Op::Dense;
    n.parents = {x, w, b};
    n.shape = {ws[1]};
    return push(std::move(n));
}

int Graph::relu(int x) {
    Node n;
    n.op = Op::Relu;
    n.parents = {x};
    n.shape = nodes_[x].shape;
    return push(std::move(n));
}

int Graph::mean_pool(int x, int win_t, int win_w, int win_h) {
    const Shape& xs = nodes_[x].shape;
    require(xs.size() == 4, "mean_pool expects rank-4 input [T,W,H,C], got " + shape_str(xs) +
                                " from " + describe(x));
    require(win_t >= 1 && win_w >= 1 && win_h >= 1, "mean_pool window must be >= 1");
    require(xs[0] % win_t == 0 && xs[1] % win_w == 0 && xs[2] % win_h == 0,
            "mean_pool window (" + std::to_string(win_t) + "," + std::to_string(win_w) + "," +
                std::to_string(win_h) + ") must divide input " + shape_str(xs) + " at " + describe(x));
    Node n;
    n.op = Op::MeanPool;
    n.parents = {x};
    n.shape = {xs[0] / win_t, xs[1] / win_w, xs[2] / win_h, xs[3]};
    n.win_t = win_t;
    n.win_w = win_w;
    n.win_h = win_h;
    return push(std::move(n));
}

int Graph::softmax(int x) {
    const Shape& xs = nodes_[x].shape;
    require(xs.size() == 1, "softmax expects a rank-1 input, got " + shape_str(xs) + " from " + describe(x));
    Node n;
    n.op = Op::Softmax;
    n.parents = {x};
    n.shape = xs;
    return push(std::move(n));
}

int Graph::softmax_xent(int logits, int onehot) {
    const Shape& ls = nodes_[logits].shape;
    const Shape& ys = nodes_[onehot].shape;
    require(ls.size() == 1, "softmax_xent expects rank-1 logits, got " + shape_str(ls) + " from " + describe(logits));
    require(ys == ls, "softmax_xent label shape " + shape_str(ys) + " != logits shape " + shape_str(ls) +
                          " at " + describe(onehot));
    Node n;
    n.op = Op::SoftmaxXent;
    n.parents = {logits, onehot};
    n.shape = {1};
    return push(std::move(n));
}

int Graph::gru_cell(int x, int h, int wx, int wh, int bx, int bh) {
    const Shape& xs = nodes_[x].shape;
    const Shape& hs = nodes_[h].shape;
    require(hs.size() == 1, "gru_cell expects rank-1 h, got " + shape_str(hs) + " from " + describe(h));
    int I = static_cast<int>(shape_numel(xs));  // x is flattened, like dense
    int F = hs[0];
    auto check_mat = [&](int id, int rows, const char* what) {
        const Shape& s = nodes_[id].shape;
        require(s.size() == 2 && s[0] == rows && s[1] == 3 * F,
                std::string("gru_cell ") + what + " must be [" + std::to_string(rows) + "," +
                    std::to_string(3 * F) + "], got " + shape_str(s) + " from " + describe(id));
    };
    auto check_vec = [&](int id, const char* what) {
        const Shape& s = nodes_[id].shape;
        require(s.size() == 1 && s[0] == 3 * F,
                std::string("gru_cell ") + what + " must be [" + std::to_string(3 * F) + "], got " +
                    shape_str(s) + " from " + describe(id));
    };
    check_mat(wx, I, "wx");
    check_mat(wh, F, "wh");
    check_vec(bx, "bx");
    check_vec(bh, "bh");
    Node n;
    n.op = Op::GruCell;
    n.parents = {x, h, wx, wh, bx, bh};
    n.shape = hs;
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    require(nodes_[a].shape == nodes_[b].shape,
            "add operands differ: " + shape_str(nodes_[a].shape) + " at " + describe(a) + " vs " +
                shape_str(nodes_[b].shape) + " at " + describe(b));
    Node n;
    n.op = Op::Add;
    n.parents = {a, b};
    n.shape = nodes_[a].shape;
    return push(std::move(n));
}

int Graph::sub(int a, int b) {
    require(nodes_[a].shape == nodes_[b].shape,
            "sub operands differ: " + shape_str(nodes_[a].shape) + " at " + describe(a) + " vs " +
                shape_str(nodes_[b].shape) + " at " + describe(b));
    Node n;
    n.op = Op::Sub;
    n.parents = {a, b};
    n.shape = nodes_[a].shape;
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    require(nodes_[a].shape == nodes_[b].shape,
            "mul operands differ: " + shape_str(nodes_[a].shape) + " at " + describe(a) + " vs " +
                shape_str(nodes_[b].shape) + " at " + describe(b));
    Node n;
    n.op = Op::Mul;
    n.parents = {a, b};
    n.shape = nodes_[a].shape;
    return push(std::move(n));
}

int Graph::scale(int x, double factor) {
    if (!std::isfinite(factor)) throw std::invalid_argument("scale factor must be finite");
    Node n;
    n.op = Op::Scale;
    n.parents = {x};
    n.shape = nodes_[x].shape;
    n.factor = factor;
    return push(std::move(n));
}

int Graph::concat_time(const std::vector<int>& parts) {
    require(!parts.empty(), "concat_time needs at least one part");
    const Shape& first = nodes_[parts[0]].shape;
    int total = 0;
    for (int p : parts) {
        const Shape& s = nodes_[p].shape;
        require(s.size() == first.size(), "concat_time rank mismatch: " + shape_str(s) + " at " +
                                              describe(p) + " vs " + shape_str(first));
        for (std::size_t ax = 1; ax < s.size(); ++ax) {
            require(s[ax] == first[ax], "concat_time trailing-extent mismatch: " + shape_str(s) +
                                            " at " + describe(p) + " vs " + shape_str(first));
        }
        total += s[0];
    }
    Node n;
    n.op = Op::ConcatTime;
    n.parents = parts;
    n.shape = first;
    n.shape[0] = total;
    return push(std::move(n));
}

int Graph::slice_time(int x, int start, int len) {
    const Shape& xs = nodes_[x].shape;
    require(!xs.empty(), "slice_time needs a ranked input");
    require(start >= 0 && len >= 1 && start + len <= xs[0],
            "slice_time [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") out of range for " + shape_str(xs) + " at " + describe(x));
    Node n;
    n.op = Op::SliceTime;
    n.parents = {x};
    n.shape = xs;
    n.shape[0] = len;
    n.start = start;
    n.len = len;
    return push(std::move(n));
}

int Graph::l2_norm(int x) {
    Node n;
    n.op = Op::L2Norm;
    n.parents = {x};
    n.shape = {1};
    return push(std::move(n));
}

int Graph::max_abs(int x) {
    Node n;
    n.op = Op::MaxAbs;
    n.parents = {x};
    n.shape = {1};
    return push(std::move(n));
}

int Graph::sum_abs(int x) {
    Node n;
    n.op = Op::SumAbs;
    n.parents = {x};
    n.shape = {1};
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// forward

namespace {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Stable softmax into `p`.
void softmax_values(const Tensor& x, std::vector<double>& p) {
    double m = x[0];
    for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
    double denom = 0.0;
    p.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        p[i] = std::exp(x[i] - m);
        denom += p[i];
    }
    for (double& v : p) v /= denom;
}

// GRU intermediates shared by forward and backward.
struct GruWork {
    std::vector<double> ax, ah, r, z, n;
};

void gru_forward(const Tensor& x, const Tensor& h, const Tensor& wx, const Tensor& wh,
                 const Tensor& bx, const Tensor& bh, GruWork& wk, Tensor* out) {
    int I = static_cast<int>(x.size()), F = h.extent(0), G = 3 * F;
    wk.ax.assign(bx.data(), bx.data() + G);
    wk.ah.assign(bh.data(), bh.data() + G);
    for (int i = 0; i < I; ++i) {
        double xi = x[i];
        const double* row = wx.data() + static_cast<std::size_t>(i) * G;
        for (int j = 0; j < G; ++j) wk.ax[j] += xi * row[j];
    }
    for (int f = 0; f < F; ++f) {
        double hf = h[f];
        const double* row = wh.data() + static_cast<std::size_t>(f) * G;
        for (int j = 0; j < G; ++j) wk.ah[j] += hf * row[j];
    }
    wk.r.resize(F);
    wk.z.resize(F);
    wk.n.resize(F);
    for (int f = 0; f < F; ++f) {
        wk.r[f] = sigmoid(wk.ax[f] + wk.ah[f]);
        wk.z[f] = sigmoid(wk.ax[F + f] + wk.ah[F + f]);
        wk.n[f] = std::tanh(wk.ax[2 * F + f] + wk.r[f] * wk.ah[2 * F + f]);
        if (out) (*out)[f] = (1.0 - wk.z[f]) * wk.n[f] + wk.z[f] * h[f];
    }
}

}  // namespace

void Graph::forward_one(int id) {
    Node& n = nodes_[id];
    switch (n.op) {
        case Op::Input:
        case Op::Constant:
            return;  // values come from bindings / construction
        case Op::Conv3d: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& w = parent(n, 1).value;
            const Tensor& b = parent(n, 2).value;
            Tensor out(n.shape);
            int To = n.shape[0], Wo = n.shape[1], Ho = n.shape[2], Co = n.shape[3];
            int Kt = w.extent(0), Kw = w.extent(1), Kh = w.extent(2), Ci = w.extent(3);
            int T = x.extent(0), W = x.extent(1), H = x.extent(2);
            for (int to = 0; to < To; ++to)
                for (int wo = 0; wo < Wo; ++wo)
                    for (int ho = 0; ho < Ho; ++ho) {
                        double* orow = out.data() + out.offset4(to, wo, ho, 0);
                        for (int co = 0; co < Co; ++co) orow[co] = b[co];
                        for (int kt = 0; kt < Kt; ++kt) {
                            int ti = to + kt - n.pad_t;
                            if (ti < 0 || ti >= T) continue;
                            for (int kw = 0; kw < Kw; ++kw) {
                                int wi = wo + kw - n.pad_w;
                                if (wi < 0 || wi >= W) continue;
                                for (int kh = 0; kh < Kh; ++kh) {
                                    int hi = ho + kh - n.pad_h;
                                    if (hi < 0 || hi >= H) continue;
                                    const double* xrow = x.data() + x.offset4(ti, wi, hi, 0);
                                    const double* wrow =
                                        w.data() + (((static_cast<std::size_t>(kt) * Kw + kw) * Kh + kh) * Ci) * Co;
                                    for (int ci = 0; ci < Ci; ++ci) {
                                        double xv = xrow[ci];
                                        const double* wc = wrow + static_cast<std::size_t>(ci) * Co;
                                        for (int co = 0; co < Co; ++co) orow[co] += xv * wc[co];
                                    }
                                }
                            }
                        }
                    }
            n.value = std::move(out);
            return;
        }
        case Op::Dense: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& w = parent(n, 1).value;
            const Tensor& b = parent(n, 2).value;
            int m = n.shape[0];
            Tensor out(n.shape);
            for (int j = 0; j < m; ++j) out[j] = b[j];
            for (std::size_t i = 0; i < x.size(); ++i) {
                double xv = x[i];
                const double* row = w.data() + i * m;
                for (int j = 0; j < m; ++j) out[j] += xv * row[j];
            }
            n.value = std::move(out);
            return;
        }
        case Op::Relu: {
            const Tensor& x = parent(n, 0).value;
            Tensor out(n.shape);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
            n.value = std::move(out);
            return;
        }
        case Op::MeanPool: {
            const Tensor& x = parent(n, 0).value;
            Tensor out(n.shape);
            int C = n.shape[3];
            double inv = 1.0 / (n.win_t * n.win_w * n.win_h);
            for (int to = 0; to < n.shape[0]; ++to)
                for (int wo = 0; wo < n.shape[1]; ++wo)
                    for (int ho = 0; ho < n.shape[2]; ++ho)
                        for (int c = 0; c < C; ++c) {
                            double acc = 0.0;
                            for (int dt = 0; dt < n.win_t; ++dt)
                                for (int dw = 0; dw < n.win_w; ++dw)
                                    for (int dh = 0; dh < n.win_h; ++dh)
                                        acc += x[x.offset4(to * n.win_t + dt, wo * n.win_w + dw,
                                                           ho * n.win_h + dh, c)];
                            out[out.offset4(to, wo, ho, c)] = acc * inv;
                        }
            n.value = std::move(out);
            return;
        }
        case Op::Softmax: {
            std::vector<double> p;
            softmax_values(parent(n, 0).value, p);
            n.value = Tensor(n.shape, std::move(p));
            return;
        }
        case Op::SoftmaxXent: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& y = parent(n, 1).value;
            double m = x[0];
            for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
            double denom = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) denom += std::exp(x[i] - m);
            double logZ = std::log(denom) + m;
            double loss = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) loss -= y[i] * (x[i] - logZ);
            n.value = Tensor({1}, {loss});
            return;
        }
        case Op::GruCell: {
            GruWork wk;
            Tensor out(n.shape);
            gru_forward(parent(n, 0).value, parent(n, 1).value, parent(n, 2).value,
                        parent(n, 3).value, parent(n, 4).value, parent(n, 5).value, wk, &out);
            n.value = std::move(out);
            return;
        }
        case Op::Add: {
            const Tensor& a = parent(n, 0).value;
            const Tensor& b = parent(n, 1).value;
            Tensor out(n.shape);
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
            n.value = std::move(out);
            return;
        }
        case Op::Sub: {
            const Tensor& a = parent(n, 0).value;
            const Tensor& b = parent(n, 1).value;
            Tensor out(n.shape);
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
            n.value = std::move(out);
            return;
        }
        case Op::Mul: {
            const Tensor& a = parent(n, 0).value;
            const Tensor& b = parent(n, 1).value;
            Tensor out(n.shape);
            for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
            n.value = std::move(out);
            return;
        }
        case Op::Scale: {
            const Tensor& x = parent(n, 0).value;
            Tensor out(n.shape);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = n.factor * x[i];
            n.value = std::move(out);
            return;
        }
        case Op::ConcatTime: {
            Tensor out(n.shape);
            std::size_t pos = 0;
            for (int p : n.parents) {
                const Tensor& part = nodes_[p].value;
                std::copy(part.data(), part.data() + part.size(), out.data() + pos);
                pos += part.size();
            }
            n.value = std::move(out);
            return;
        }
        case Op::SliceTime: {
            const Tensor& x = parent(n, 0).value;
            std::size_t stride = shape_numel(n.shape) / static_cast<std::size_t>(n.len);
            Tensor out(n.shape);
            std::copy(x.data() + n.start * stride, x.data() + (n.start + n.len) * stride, out.data());
            n.value = std::move(out);
            return;
        }
        case Op::L2Norm: {
            const Tensor& x = parent(n, 0).value;
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
            n.value = Tensor({1}, {std::sqrt(s)});
            return;
        }
        case Op::MaxAbs: {
            const Tensor& x = parent(n, 0).value;
            double m = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i]));
            n.value = Tensor({1}, {m});
            return;
        }
        case Op::SumAbs: {
            const Tensor& x = parent(n, 0).value;
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i]);
            n.value = Tensor({1}, {s});
            return;
        }
    }
}

void Graph::eval(const Bindings& bindings) {
    for (int id = 0; id < node_count(); ++id) {
        Node& n = nodes_[id];
        if (n.op == Op::Input) {
            auto it = bindings.find(n.name);
            if (it == bindings.end()) {
                throw std::invalid_argument("no binding for " + describe(id));
            }
            if (it->second.shape() != n.shape) {
                throw std::invalid_argument("binding shape " + shape_str(it->second.shape()) +
                                            " != declared " + shape_str(n.shape) + " for " + describe(id));
            }
            n.value = it->second;
        } else if (n.op != Op::Constant) {
            forward_one(id);
        }
        if (!n.value.all_finite()) {
            throw std::runtime_error("non-finite value at " + describe(id));
        }
        n.evaluated = true;
    }
}

// ---------------------------------------------------------------------------
// backward

namespace {

Tensor& ensure_grad(std::vector<Tensor>& grads, std::vector<char>& has_grad,
                    const std::vector<Node>& nodes, int id) {
    if (!has_grad[id]) {
        grads[id] = Tensor(nodes[id].shape);
        has_grad[id] = 1;
    }
    return grads[id];
}

}  // namespace

void Graph::backward_one(int id, const Tensor& g, std::vector<Tensor>& grads,
                         std::vector<char>& has_grad) const {
    const Node& n = nodes_[id];
    auto grad_of = [&](int slot) -> Tensor& {
        return ensure_grad(grads, has_grad, nodes_, n.parents[slot]);
    };
    switch (n.op) {
        case Op::Input:
        case Op::Constant:
            return;
        case Op::Conv3d: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& w = parent(n, 1).value;
            Tensor& dx = grad_of(0);
            Tensor& dw = grad_of(1);
            Tensor& db = grad_of(2);
            int To = n.shape[0], Wo = n.shape[1], Ho = n.shape[2], Co = n.shape[3];
            int Kt = w.extent(0), Kw = w.extent(1), Kh = w.extent(2), Ci = w.extent(3);
            int T = x.extent(0), W = x.extent(1), H = x.extent(2);
            for (int to = 0; to < To; ++to)
                for (int wo = 0; wo < Wo; ++wo)
                    for (int ho = 0; ho < Ho; ++ho) {
                        const double* grow = g.data() + g.offset4(to, wo, ho, 0);
                        for (int co = 0; co < Co; ++co) db[co] += grow[co];
                        for (int kt = 0; kt < Kt; ++kt) {
                            int ti = to + kt - n.pad_t;
                            if (ti < 0 || ti >= T) continue;
                            for (int kw = 0; kw < Kw; ++kw) {
                                int wi = wo + kw - n.pad_w;
                                if (wi < 0 || wi >= W) continue;
                                for (int kh = 0; kh < Kh; ++kh) {
                                    int hi = ho + kh - n.pad_h;
                                    if (hi < 0 || hi >= H) continue;
                                    std::size_t xoff = x.offset4(ti, wi, hi, 0);
                                    std::size_t woff =
                                        (((static_cast<std::size_t>(kt) * Kw + kw) * Kh + kh) * Ci) * Co;
                                    for (int ci = 0; ci < Ci; ++ci) {
                                        double xv = x[xoff + ci];
                                        double acc = 0.0;
                                        const double* wc = w.data() + woff + static_cast<std::size_t>(ci) * Co;
                                        double* dwc = dw.data() + woff + static_cast<std::size_t>(ci) * Co;
                                        for (int co = 0; co < Co; ++co) {
                                            double gv = grow[co];
                                            acc += gv * wc[co];
                                            dwc[co] += gv * xv;
                                        }
                                        dx[xoff + ci] += acc;
                                    }
                                }
                            }
                        }
                    }
            return;
        }
        case Op::Dense: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& w = parent(n, 1).value;
            Tensor& dx = grad_of(0);
            Tensor& dw = grad_of(1);
            Tensor& db = grad_of(2);
            int m = n.shape[0];
            for (int j = 0; j < m; ++j) db[j] += g[j];
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double* wrow = w.data() + i * m;
                double* dwrow = dw.data() + i * m;
                double acc = 0.0;
                double xv = x[i];
                for (int j = 0; j < m; ++j) {
                    acc += g[j] * wrow[j];
                    dwrow[j] += g[j] * xv;
                }
                dx[i] += acc;
            }
            return;
        }
        case Op::Relu: {
            const Tensor& x = parent(n, 0).value;
            Tensor& dx = grad_of(0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] > 0.0) dx[i] += g[i];
            }
            return;
        }
        case Op::MeanPool: {
            Tensor& dx = grad_of(0);
            int C = n.shape[3];
            double inv = 1.0 / (n.win_t * n.win_w * n.win_h);
            for (int to = 0; to < n.shape[0]; ++to)
                for (int wo = 0; wo < n.shape[1]; ++wo)
                    for (int ho = 0; ho < n.shape[2]; ++ho)
                        for (int c = 0; c < C; ++c) {
                            double gv = g[g.offset4(to, wo, ho, c)] * inv;
                            for (int dt = 0; dt < n.win_t; ++dt)
                                for (int dw = 0; dw < n.win_w; ++dw)
                                    for (int dh = 0; dh < n.win_h; ++dh)
                                        dx[dx.offset4(to * n.win_t + dt, wo * n.win_w + dw,
                                                      ho * n.win_h + dh, c)] += gv;
                        }
            return;
        }
        case Op::Softmax: {
            const Tensor& p = n.value;
            Tensor& dx = grad_of(0);
            double dot = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * g[i];
            for (std::size_t i = 0; i < p.size(); ++i) dx[i] += p[i] * (g[i] - dot);
            return;
        }
        case Op::SoftmaxXent: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& y = parent(n, 1).value;
            Tensor& dx = grad_of(0);
            Tensor& dy = grad_of(1);
            std::vector<double> p;
            softmax_values(x, p);
            double ysum = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) ysum += y[i];
            double gv = g[0];
            for (std::size_t i = 0; i < x.size(); ++i) {
                dx[i] += gv * (p[i] * ysum - y[i]);
                dy[i] += gv * (-std::log(p[i]));
            }
            return;
        }
        case Op::GruCell: {
            const Tensor& x = parent(n, 0).value;
            const Tensor& h = parent(n, 1).value;
            const Tensor& wx = parent(n, 2).value;
            const Tensor& wh = parent(n, 3).value;
            GruWork wk;
            gru_forward(x, h, wx, wh, parent(n, 4).value, parent(n, 5).value, wk, nullptr);
            int I = static_cast<int>(x.size()), F = h.extent(0), G = 3 * F;
            std::vector<double> dax(G, 0.0), dah(G, 0.0);
            Tensor& dx = grad_of(0);
            Tensor& dh = grad_of(1);
            Tensor& dwx = grad_of(2);
            Tensor& dwh = grad_of(3);
            Tensor& dbx = grad_of(4);
            Tensor& dbh = grad_of(5);
            for (int f = 0; f < F; ++f) {
                double r = wk.r[f], z = wk.z[f], nn = wk.n[f];
                double dn = g[f] * (1.0 - z);
                double dz = g[f] * (h[f] - nn);
                dh[f] += g[f] * z;
                double dt = dn * (1.0 - nn * nn);  // through tanh
                dax[2 * F + f] += dt;
                dah[2 * F + f] += dt * r;
                double dr = dt * wk.ah[2 * F + f];
                double dsr = dr * r * (1.0 - r);
                dax[f] += dsr;
                dah[f] += dsr;
                double dsz = dz * z * (1.0 - z);
                dax[F + f] += dsz;
                dah[F + f] += dsz;
            }
            for (int i = 0; i < I; ++i) {
                const double* wrow = wx.data() + static_cast<std::size_t>(i) * G;
                double* dwrow = dwx.data() + static_cast<std::size_t>(i) * G;
                double acc = 0.0;
                for (int j = 0; j < G; ++j) {
                    acc += dax[j] * wrow[j];
                    dwrow[j] += dax[j] * x[i];
                }
                dx[i] += acc;
            }
            for (int f = 0; f < F; ++f) {
                const double* wrow = wh.data() + static_cast<std::size_t>(f) * G;
                double* dwrow = dwh.data() + static_cast<std::size_t>(f) * G;
                double acc = 0.0;
                for (int j = 0; j < G; ++j) {
                    acc += dah[j] * wrow[j];
                    dwrow[j] += dah[j] * h[f];
                }
                dh[f] += acc;
            }
            for (int j = 0; j < G; ++j) {
                dbx[j] += dax[j];
                dbh[j] += dah[j];
            }
            return;
        }
        case Op::Add: {
            Tensor& da = grad_of(0);
            Tensor& db = grad_of(1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] += g[i];
            }
            return;
        }
        case Op::Sub: {
            Tensor& da = grad_of(0);
            Tensor& db = grad_of(1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] -= g[i];
            }
            return;
        }
        case Op::Mul: {
            const Tensor& a = parent(n, 0).value;
            const Tensor& b = parent(n, 1).value;
            Tensor& da = grad_of(0);
            Tensor& db = grad_of(1);
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i] * b[i];
                db[i] += g[i] * a[i];
            }
            return;
        }
        case Op::Scale: {
            Tensor& dx = grad_of(0);
            for (std::size_t i = 0; i < g.size(); ++i) dx[i] += n.factor * g[i];
            return;
        }
        case Op::ConcatTime: {
            std::size_t pos = 0;
            for (std::size_t slot = 0; slot < n.parents.size(); ++slot) {
                Tensor& dp = grad_of(static_cast<int>(slot));
                for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += g[pos + i];
                pos += dp.size();
            }
            return;
        }
        case Op::SliceTime: {
            Tensor& dx = grad_of(0);
            std::size_t stride = shape_numel(n.shape) / static_cast<std::size_t>(n.len);
            std::size_t base = n.start * stride;
            for (std::size_t i = 0; i < g.size(); ++i) dx[base + i] += g[i];
            return;
        }
        case Op::L2Norm: {
            const Tensor& x = parent(n, 0).value;
            Tensor& dx = grad_of(0);
            double norm = n.value[0];
            if (norm > 0.0) {
                double gv = g[0] / norm;
                for (std::size_t i = 0; i < x.size(); ++i) dx[i] += gv * x[i];
            }
            return;
        }
        case Op::MaxAbs: {
            const Tensor& x = parent(n, 0).value;
            Tensor& dx = grad_of(0);
            std::size_t top = 0;
            for (std::size_t i = 1; i < x.size(); ++i) {
                if (std::abs(x[i]) > std::abs(x[top])) top = i;  // first max wins
            }
            double s = x[top] > 0.0 ? 1.0 : (x[top] < 0.0 ? -1.0 : 0.0);
            dx[top] += g[0] * s;
            return;
        }
        case Op::SumAbs: {
            const Tensor& x = parent(n, 0).value;
            Tensor& dx = grad_of(0);
            for (std::size_t i = 0; i < x.size(); ++i) {
                double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
                dx[i] += g[0] * s;
            }
            return;
        }
    }
}

GradMap Graph::backward(int output, const std::vector<int>& wrt) const {
    if (output < 0 || output >= node_count()) {
        throw std::invalid_argument("backward output id out of range");
    }
    const Node& out = nodes_[output];
    if (!out.evaluated) {
        throw std::runtime_error("backward requires eval() first (at " + describe(output) + ")");
    }
    if (shape_numel(out.shape) != 1) {
        throw std::invalid_argument("backward output must be scalar, got " + shape_str(out.shape) +
                                    " at " + describe(output));
    }
    std::vector<Tensor> grads(nodes_.size());
    std::vector<char> has_grad(nodes_.size(), 0);
    grads[output] = Tensor(out.shape, 1.0);
    has_grad[output] = 1;
    for (int id = output; id >= 0; --id) {
        if (!has_grad[id]) continue;
        backward_one(id, grads[id], grads, has_grad);
    }
    GradMap result;
    for (int id : wrt) {
        if (id < 0 || id >= node_count()) {
            throw std::invalid_argument("backward wrt id out of range");
        }
        result[id] = has_grad[id] ? std::move(grads[id]) : Tensor(nodes_[id].shape);
    }
    return result;
}

const Tensor& Graph::value(int id) const {
    if (id < 0 || id >= node_count()) throw std::invalid_argument("node id out of range");
    if (!nodes_[id].evaluated) throw std::runtime_error("value requested before eval at " + describe(id));
    return nodes_[id].value;
}

const Node& Graph::node_at(int id) const {
    if (id < 0 || id >= node_count()) throw std::invalid_argument("node id out of range");
    return nodes_[id];
}

// ---------------------------------------------------------------------------

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
    Tensor g = Tensor::zeros_like(x);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        double hi = f(probe);
        probe[i] = x[i] - step;
        double lo = f(probe);
        probe[i] = x[i];
        g[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

double max_rel_err(const Tensor& g, const Tensor& r, double floor_val) {
    if (!g.same_shape(r)) throw std::invalid_argument("max_rel_err shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double denom = std::max(std::abs(r[i]), floor_val);
        worst = std::max(worst, std::abs(g[i] - r[i]) / denom);
    }
    return worst;
}

}  // namespace a2fm
