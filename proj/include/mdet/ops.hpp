#pragma once

#include "mdet/tape.hpp"

#include <vector>

/// Differentiable primitives. Every function records one node on the tape of
/// its inputs; all inputs of a call must share that tape.
namespace mdet::ops {

template <typename S> Var<S> matmul(Var<S> a, Var<S> b);
/// x[..., in] · w[in, out] (+ bias[out]) acting on the trailing axis.
template <typename S> Var<S> linear(Var<S> x, Var<S> w);
template <typename S> Var<S> linear(Var<S> x, Var<S> w, Var<S> bias);

template <typename S> Var<S> add(Var<S> a, Var<S> b);
template <typename S> Var<S> sub(Var<S> a, Var<S> b);
template <typename S> Var<S> mul(Var<S> a, Var<S> b);
template <typename S> Var<S> scale(Var<S> a, S factor);
/// x[..., D] + b[D]
template <typename S> Var<S> bias_add(Var<S> x, Var<S> b);
/// x[..., D] ⊙ g[D]
template <typename S> Var<S> scale_lastaxis(Var<S> x, Var<S> g);

/// Exact (erf) GELU.
template <typename S> Var<S> gelu(Var<S> x);
/// Default variance floor for layer_norm at each precision.
template <typename S> constexpr S layer_norm_eps() { return sizeof(S) >= 8 ? S(1e-10) : S(1e-5); }
/// Normalises each trailing-axis vector to zero mean, unit variance. No affine terms.
template <typename S> Var<S> layer_norm(Var<S> x, S eps = layer_norm_eps<S>());
/// Max-subtracted softmax over the trailing axis.
template <typename S> Var<S> softmax_lastaxis(Var<S> x);

template <typename S> Var<S> sum(Var<S> x);
template <typename S> Var<S> mean(Var<S> x);
/// Removes `axis` by summation.
template <typename S> Var<S> sum_axis(Var<S> x, Index axis);
template <typename S> Var<S> reshape(Var<S> x, Shape shape);
/// Swaps the two leading axes.
template <typename S> Var<S> transpose01(Var<S> x);
template <typename S> Var<S> concat_lastaxis(Var<S> a, Var<S> b);
/// Rows of table[V, D] selected by index -> [n, D].
template <typename S> Var<S> gather_rows(Var<S> table, std::vector<Index> rows);
/// Column c of x[n, C] -> [n].
template <typename S> Var<S> column(Var<S> x, Index c);
/// Euclidean norm of each row of x[n, C] -> [n]; the gradient at a zero row is zero.
template <typename S> Var<S> row_norms(Var<S> x);

/// Triangle attention logits: out[h, i, j, l] = factor · Σ_{d∈h} q[i, l, d] k[l, j, d]
/// for q, k of shape [N, N, D] split into `heads` channel groups.
template <typename S> Var<S> triangle_scores(Var<S> q, Var<S> k, Index heads, S factor);
/// Triangle aggregation: out[i, j, d] = Σ_l alpha[h(d), i, j, l] · v1[i, l, d] · v2[l, j, d].
template <typename S> Var<S> triangle_mix(Var<S> alpha, Var<S> v1, Var<S> v2);

/// positions[N, 3] -> [N·N, 3] holding (distance, azimuth, polar angle) of
/// r_j - r_i for edge i·N + j. Azimuth is atan2(y, x) in (-π, π], polar angle in
/// [0, π]. A zero displacement maps to (0, 0, 0) with zero gradient.
template <typename S> Var<S> edge_geometry(Var<S> positions);
/// Gaussian basis of the affinely mapped distance t = m·d + b:
/// out[e, k] = exp(-(t_e - mu_k)² / 2σ_k²) / (√(2π) σ_k). m, b are rank-0.
template <typename S> Var<S> gaussian_rbf(Var<S> d, Var<S> mu, Var<S> sigma, Var<S> m, Var<S> b);
/// [sin(φω_φ), cos(φω_φ), sin(θω_θ), cos(θω_θ)] per edge; frequencies are constants.
template <typename S>
Var<S> fourier_features(Var<S> phi, Var<S> theta, std::vector<S> omega_phi, std::vector<S> omega_theta);

}  // namespace mdet::ops

namespace mdet {

template <typename S> Var<S> operator+(Var<S> a, Var<S> b) { return ops::add(a, b); }
template <typename S> Var<S> operator-(Var<S> a, Var<S> b) { return ops::sub(a, b); }
template <typename S> Var<S> operator*(Var<S> a, Var<S> b) { return ops::mul(a, b); }

}  // namespace mdet
