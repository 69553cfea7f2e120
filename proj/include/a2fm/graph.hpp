#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "a2fm/tensor.hpp"

namespace a2fm {

// Reverse-mode autodiff over a static computation graph. Nodes are appended
// through the builder methods (so indices are already a topological order),
// values are cached by eval(), and backward() walks the tape in reverse.

enum class Op {
    Input,
    Constant,
    Conv3d,
    Dense,
    Relu,
    MeanPool,
    Softmax,
    SoftmaxXent,
    GruCell,
    Add,
    Sub,
    Mul,
    Scale,
    ConcatTime,
    SliceTime,
    L2Norm,
    MaxAbs,
    SumAbs,
};

const char* op_name(Op op);

struct Node {
    Op op = Op::Input;
    std::vector<int> parents;
    Shape shape;          // inferred at build time
    std::string name;     // Input nodes only
    Tensor value;         // cached by eval()
    bool evaluated = false;

    // Op attributes (meaning depends on op).
    int pad_t = 0, pad_w = 0, pad_h = 0;   // Conv3d zero padding per axis
    int win_t = 1, win_w = 1, win_h = 1;   // MeanPool window (= stride)
    double factor = 1.0;                   // Scale
    int start = 0, len = 0;                // SliceTime
};

using Bindings = std::map<std::string, Tensor>;
using GradMap = std::map<int, Tensor>;

class Graph {
public:
    // --- builders (validate shapes eagerly; throw std::invalid_argument
    //     naming the offending node on any mismatch) ---
    int input(const std::string& name, Shape shape);
    int constant(Tensor value);

    // x: [T,W,H,Cin], w: [Kt,Kw,Kh,Cin,Cout], b: [Cout].
    // Zero padding per axis, stride 1, valid extent after padding.
    int conv3d(int x, int w, int b, int pad_t, int pad_w, int pad_h);

    // Flattens x, then y[j] = sum_i x[i]*w[i,j] + b[j]. w: [n,m], b: [m].
    int dense(int x, int w, int b);

    int relu(int x);

    // Window == stride; every pooled axis extent must divide evenly.
    int mean_pool(int x, int win_t, int win_w, int win_h);

    int softmax(int x);                        // x: [K]
    int softmax_xent(int logits, int onehot);  // scalar [1]

    // One fused recurrent step: gates r,z,n; h' = (1-z)*n + z*h.
    // x flattens to [I] (like dense), h: [F], wx: [I,3F], wh: [F,3F],
    // bx/bh: [3F]; packed gate order r,z,n.
    int gru_cell(int x, int h, int wx, int wh, int bx, int bh);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int x, double factor);

    int concat_time(const std::vector<int>& parts);  // along axis 0
    int slice_time(int x, int start, int len);       // along axis 0

    int l2_norm(int x);   // scalar [1]
    int max_abs(int x);   // scalar [1]; subgradient: sign at first row-major max
    int sum_abs(int x);   // scalar [1]

    // --- execution ---
    // Evaluates every node in index order; all Input nodes must be bound
    // with exactly matching shapes. Throws on unbound/mismatched inputs and
    // on any non-finite node value (names the node).
    void eval(const Bindings& bindings);

    // d(value of `output`)/d(each node in `wrt`); `output` must be scalar
    // and eval() must have run. Missing gradients come back as zeros.
    GradMap backward(int output, const std::vector<int>& wrt) const;

    const Tensor& value(int id) const;
    const Node& node_at(int id) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    std::vector<Node> nodes_;

    int push(Node n);
    const Node& parent(const Node& n, int slot) const { return nodes_[n.parents[slot]]; }
    void forward_one(int id);
    void backward_one(int id, const Tensor& grad, std::vector<Tensor>& grads,
                      std::vector<char>& has_grad) const;
    std::string describe(int id) const;
};

// Central finite differences of a scalar-valued function at x, step h in
// each coordinate: (f(x+h) - f(x-h)) / 2h. The gradcheck oracle.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double step);

// Max relative error between analytic g and numeric reference r, with the
// denominator floored: max_i |g_i - r_i| / max(|r_i|, floor).
double max_rel_err(const Tensor& g, const Tensor& r, double floor_val = 1e-8);

}  // namespace a2fm
