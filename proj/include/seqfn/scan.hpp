#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "seqfn/tensor.hpp"

namespace seqfn {

/// Coefficients of the linear recurrence h_t = a_t * h_{t-1} + b_t, h_0 = 0,
/// stored as [T x E x N] tensors.
template <class T>
struct ScanCoeffs {
  Tensor<T> a;
  Tensor<T> b;
};

/// Zero-order-hold decay with an Euler input term:
///   a[t,c,n] = exp(delta[t,c] * A[c,n])
///   b[t,c,n] = delta[t,c] * B[t,n] * x[t,c]
/// delta is expected to be nonnegative (softplus output).
template <class T>
ScanCoeffs<T> discretize(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& B, const Tensor<T>& x) {
  if (delta.rank() != 2 || A.rank() != 2 || B.rank() != 2 || x.rank() != 2 || A.dim(0) != delta.dim(1) ||
      B.dim(0) != delta.dim(0) || B.dim(1) != A.dim(1) || x.shape() != delta.shape()) {
    throw DimensionError("discretize: inconsistent shapes delta " + shape_str(delta.shape()) + ", A " +
                         shape_str(A.shape()) + ", B " + shape_str(B.shape()) + ", x " + shape_str(x.shape()));
  }
  const std::size_t steps = delta.dim(0), width = delta.dim(1), state = A.dim(1);
  const auto& dv = delta.data();
  const auto& av = A.data();
  const auto& bv = B.data();
  const auto& xv = x.data();
  std::vector<T> decay(steps * width * state), inject(steps * width * state);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      const T d = dv[t * width + c];
      const T dx = d * xv[t * width + c];
      for (std::size_t n = 0; n < state; ++n) {
        const std::size_t o = (t * width + c) * state + n;
        decay[o] = std::exp(d * av[c * state + n]);
        inject[o] = dx * bv[t * state + n];
      }
    }
  }
  Shape shape{steps, width, state};
  auto a = detail::make_op<T>("discretize_decay", shape, std::move(decay), {delta, A},
                              [steps, width, state](detail::Node<T>& self) {
                                T* gd = detail::grad_of(self, 0);
                                T* gA = detail::grad_of(self, 1);
                                const auto& dv = detail::data_of(self, 0);
                                const auto& av = detail::data_of(self, 1);
                                for (std::size_t t = 0; t < steps; ++t) {
                                  for (std::size_t c = 0; c < width; ++c) {
                                    for (std::size_t n = 0; n < state; ++n) {
                                      const std::size_t o = (t * width + c) * state + n;
                                      const T g = self.grad[o] * self.data[o];
                                      if (gd) gd[t * width + c] += g * av[c * state + n];
                                      if (gA) gA[c * state + n] += g * dv[t * width + c];
                                    }
                                  }
                                }
                              });
  auto b = detail::make_op<T>("discretize_inject", shape, std::move(inject), {delta, B, x},
                              [steps, width, state](detail::Node<T>& self) {
                                T* gd = detail::grad_of(self, 0);
                                T* gB = detail::grad_of(self, 1);
                                T* gx = detail::grad_of(self, 2);
                                const auto& dv = detail::data_of(self, 0);
                                const auto& bv = detail::data_of(self, 1);
                                const auto& xv = detail::data_of(self, 2);
                                for (std::size_t t = 0; t < steps; ++t) {
                                  for (std::size_t c = 0; c < width; ++c) {
                                    const T d = dv[t * width + c];
                                    const T xc = xv[t * width + c];
                                    T sum_gb = 0;
                                    for (std::size_t n = 0; n < state; ++n) {
                                      const T g = self.grad[(t * width + c) * state + n];
                                      sum_gb += g * bv[t * state + n];
                                      if (gB) gB[t * state + n] += g * d * xc;
                                    }
                                    if (gd) gd[t * width + c] += sum_gb * xc;
                                    if (gx) gx[t * width + c] += sum_gb * d;
                                  }
                                }
                              });
  return {std::move(a), std::move(b)};
}

namespace detail {

// Strided views into a [T x channels] layout: element t of channel ch lives at t * channels + ch.
template <class T>
void recurrence_sequential(const T* a, const T* b, T* h, std::size_t steps, std::size_t channels) {
  for (std::size_t ch = 0; ch < channels; ++ch) h[ch] = b[ch];
  for (std::size_t t = 1; t < steps; ++t) {
    const std::size_t o = t * channels, p = (t - 1) * channels;
    for (std::size_t ch = 0; ch < channels; ++ch) h[o + ch] = a[o + ch] * h[p + ch] + b[o + ch];
  }
}

// Blelloch work-efficient scan over the affine-map monoid
//   (a1, b1) then (a2, b2)  ==  (a1 * a2, a2 * b1 + b2),
// identity (1, 0). Each channel is scanned independently: an up-sweep builds
// the reduction tree, a down-sweep turns it into exclusive prefixes, and
// h_t = a_t * prefix_t.b + b_t. Lengths are rounded up to a power of two with
// identity elements, which compose exactly.
template <class T>
void recurrence_blelloch(const T* a, const T* b, T* h, std::size_t steps, std::size_t channels) {
  std::size_t size = 1;
  while (size < steps) size <<= 1;
  std::vector<T> ta(size), tb(size);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t t = 0; t < size; ++t) {
      ta[t] = t < steps ? a[t * channels + ch] : T(1);
      tb[t] = t < steps ? b[t * channels + ch] : T(0);
    }
    // Up-sweep: node i accumulates (left subtree) then (right subtree).
    for (std::size_t stride = 1; stride < size; stride <<= 1) {
      for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
        const std::size_t l = i - stride;
        tb[i] = ta[i] * tb[l] + tb[i];
        ta[i] = ta[l] * ta[i];
      }
    }
    // Down-sweep to exclusive prefixes.
    ta[size - 1] = T(1);
    tb[size - 1] = T(0);
    for (std::size_t stride = size >> 1; stride >= 1; stride >>= 1) {
      for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
        const std::size_t l = i - stride;
        const T left_a = ta[l], left_b = tb[l];
        ta[l] = ta[i];
        tb[l] = tb[i];
        // prefix(right) = prefix(parent) then sum(left)
        tb[i] = left_a * tb[i] + left_b;
        ta[i] = ta[i] * left_a;
      }
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t o = t * channels + ch;
      h[o] = a[o] * tb[t] + b[o];
    }
  }
}

enum class ScanAlgorithm { sequential, parallel };

template <class T>
void run_recurrence(ScanAlgorithm algo, const T* a, const T* b, T* h, std::size_t steps, std::size_t channels) {
  if (algo == ScanAlgorithm::parallel) {
    recurrence_blelloch(a, b, h, steps, channels);
  } else {
    recurrence_sequential(a, b, h, steps, channels);
  }
}

template <class T>
Tensor<T> scan_impl(const ScanCoeffs<T>& coeffs, ScanAlgorithm algo) {
  const auto& a = coeffs.a;
  const auto& b = coeffs.b;
  if (a.shape() != b.shape() || a.rank() != 3) {
    throw DimensionError("scan: coefficient shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " must match and be [T x E x N]");
  }
  const std::size_t steps = a.dim(0), channels = a.dim(1) * a.dim(2);
  std::vector<T> h(a.numel());
  run_recurrence(algo, a.data().data(), b.data().data(), h.data(), steps, channels);
  return make_op<T>(algo == ScanAlgorithm::parallel ? "scan_parallel" : "scan_sequential", a.shape(), std::move(h),
                    {a, b}, [algo, steps, channels](Node<T>& self) {
                      T* ga = grad_of(self, 0);
                      T* gb = grad_of(self, 1);
                      const auto& av = data_of(self, 0);
                      // Adjoint g_t = gh_t + a_{t+1} g_{t+1} is the same recurrence run
                      // backwards in time, so reverse, scan, and reverse again.
                      std::vector<T> ra(av.size()), rb(av.size()), rg(av.size());
                      for (std::size_t t = 0; t < steps; ++t) {
                        const std::size_t src = (steps - 1 - t) * channels;
                        for (std::size_t ch = 0; ch < channels; ++ch) {
                          ra[t * channels + ch] = t == 0 ? T(0) : av[src + channels + ch];
                          rb[t * channels + ch] = self.grad[src + ch];
                        }
                      }
                      run_recurrence(algo, ra.data(), rb.data(), rg.data(), steps, channels);
                      for (std::size_t t = 0; t < steps; ++t) {
                        const std::size_t src = (steps - 1 - t) * channels;
                        for (std::size_t ch = 0; ch < channels; ++ch) {
                          const T g = rg[src + ch];
                          const std::size_t o = t * channels + ch;
                          if (gb) gb[o] += g;
                          if (ga && t > 0) ga[o] += g * self.data[o - channels];
                        }
                      }
                    });
}

}  // namespace detail

using detail::ScanAlgorithm;

/// All hidden states of h_t = a_t * h_{t-1} + b_t, one step at a time.
template <class T>
Tensor<T> scan_sequential(const ScanCoeffs<T>& coeffs) {
  return detail::scan_impl(coeffs, ScanAlgorithm::sequential);
}

/// Same result as scan_sequential, computed with an associative prefix scan
/// (O(T) work, O(log T) depth).
template <class T>
Tensor<T> scan_parallel(const ScanCoeffs<T>& coeffs) {
  return detail::scan_impl(coeffs, ScanAlgorithm::parallel);
}

template <class T>
Tensor<T> scan(const ScanCoeffs<T>& coeffs, ScanAlgorithm algo) {
  return detail::scan_impl(coeffs, algo);
}

/// y[t,c] = sum_n h[t,c,n] * C[t,n].
template <class T>
Tensor<T> ssm_readout(const Tensor<T>& h, const Tensor<T>& C) {
  if (h.rank() != 3 || C.rank() != 2 || C.dim(0) != h.dim(0) || C.dim(1) != h.dim(2)) {
    throw DimensionError("ssm_readout: states " + shape_str(h.shape()) + " do not match C " + shape_str(C.shape()));
  }
  const std::size_t steps = h.dim(0), width = h.dim(1), state = h.dim(2);
  const auto& hv = h.data();
  const auto& cv = C.data();
  std::vector<T> y(steps * width);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < width; ++c) {
      T acc = 0;
      for (std::size_t n = 0; n < state; ++n) acc += hv[(t * width + c) * state + n] * cv[t * state + n];
      y[t * width + c] = acc;
    }
  }
  return detail::make_op<T>("ssm_readout", {steps, width}, std::move(y), {h, C},
                            [steps, width, state](detail::Node<T>& self) {
                              T* gh = detail::grad_of(self, 0);
                              T* gc = detail::grad_of(self, 1);
                              const auto& hv = detail::data_of(self, 0);
                              const auto& cv = detail::data_of(self, 1);
                              for (std::size_t t = 0; t < steps; ++t) {
                                for (std::size_t c = 0; c < width; ++c) {
                                  const T g = self.grad[t * width + c];
                                  for (std::size_t n = 0; n < state; ++n) {
                                    const std::size_t o = (t * width + c) * state + n;
                                    if (gh) gh[o] += g * cv[t * state + n];
                                    if (gc) gc[t * state + n] += g * hv[o];
                                  }
                                }
                              }
                            });
}

}  // namespace seqfn
