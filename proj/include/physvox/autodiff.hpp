#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "physvox/tensor.hpp"

namespace physvox::ad {

// Reverse-mode autodiff over Tensor. Backward passes build new graph nodes
// instead of accumulating raw numbers, so gradients are themselves
// differentiable — required for the gradient-penalty term, whose weight
// gradient differentiates through an inner input-gradient computation.

struct Node;
using Var = std::shared_ptr<Node>;

using Vjp = std::function<void(const Var& self, const Var& gy,
                               const std::vector<bool>& need, std::vector<Var>& out)>;

struct Node {
    Tensor value;
    bool requires_grad = false;
    int64_t id = 0;
    std::vector<Var> parents;
    Vjp vjp;  // empty for leaves
};

Var leaf(Tensor value, bool requires_grad);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }

// Elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var recip(const Var& a);
Var sqrt_(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// Dense
Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var matmul_nt(const Var& a, const Var& b);  // a [m,k], b [n,k] -> a*b^T
Var matmul_tn(const Var& a, const Var& b);  // a [k,m], b [k,n] -> a^T*b

// Convolution family over [B,C,D,H,W]; w is [Cout,Cin,k,k,k].
Var conv3d(const Var& x, const Var& w, int stride, int pad);
// Adjoint of conv3d w.r.t. its input: maps [B,Cout,small] -> [B,Cin,big].
Var tconv3d(const Var& a, const Var& w, int stride, int pad);
// Adjoint w.r.t. the weights: x [B,Cin,big], a [B,Cout,small] -> [Cout,Cin,k,k,k].
Var conv_wgrad(const Var& x, const Var& a, int k, int stride, int pad);

// Broadcast / reduction pairs
Var add_channel_bias(const Var& x, const Var& bias);
Var sum_nonchannel(const Var& x);                          // -> [C]
Var bcast_channel(const Var& g, std::vector<int> shape);   // [C] -> shape
Var sum_all(const Var& x);                                 // -> [1]
Var bcast_full(const Var& g, std::vector<int> shape);      // [1] -> shape
Var mean_all(const Var& x);
Var sum_per_sample(const Var& x);                          // [B,...] -> [B]
Var bcast_sample(const Var& g, std::vector<int> shape);    // [B] -> [B,...]
Var sum_spatial(const Var& x);                             // [B,C,D,H,W] -> [B,C]
Var bcast_spatial(const Var& y, int D, int H, int W);      // [B,C] -> [B,C,D,H,W]

// Structure
Var concat_ch(const Var& a, const Var& b);
Var slice_ch(const Var& x, int c0, int c1);
Var reshape(const Var& x, std::vector<int> shape);

using GradMap = std::unordered_map<const Node*, Var>;

// Gradients of scalar `root` w.r.t. the nodes in `wanted`. Only the parts of
// the graph that reach a wanted node are differentiated.
GradMap backward(const Var& root, const std::vector<Var>& wanted);

inline const Tensor& val(const Var& v) { return v->value; }
inline double scalar_of(const Var& v) { return v->value.data[0]; }

}  // namespace physvox::ad
