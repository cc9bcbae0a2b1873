#pragma once

#include <cstdint>

// Dense numeric kernels behind the tensor ops. Every kernel has two faces:
//
//   kernels::*      optimized loops, OpenMP-parallel over independent output
//                   rows/channels; each output element is accumulated in a
//                   fixed order by exactly one thread, so results are
//                   bit-identical for any thread count (and with threading
//                   disabled entirely).
//   kernels::ref::* straight-line serial loops kept as the test oracle and
//                   as the baseline for bench/kernel_bench.
//
// Shapes use the layouts of the tensor layer: matrices are row-major,
// sequences are [batch][channel][time], conv weights are [out][tap][in].

namespace tsab::kernels {

// Run-time switch for the OpenMP paths (does not affect ref::).
bool parallel_enabled();
void set_parallel(bool on);

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);

// Same-padded cross-correlation over time.
// x[B][Cin][T], w[Cout][d][Cin], bias[Cout], y[B][Cout][T].
void conv1d_forward(const double* x, const double* w, const double* bias,
                    double* y, std::int64_t B, std::int64_t cin,
                    std::int64_t cout, std::int64_t T, std::int64_t d);
// dx[B][Cin][T] from dy[B][Cout][T]; dx is overwritten.
void conv1d_backward_input(const double* dy, const double* w, double* dx,
                           std::int64_t B, std::int64_t cin, std::int64_t cout,
                           std::int64_t T, std::int64_t d);
// dw[Cout][d][Cin], db[Cout]; both overwritten.
void conv1d_backward_params(const double* x, const double* dy, double* dw,
                            double* db, std::int64_t B, std::int64_t cin,
                            std::int64_t cout, std::int64_t T, std::int64_t d);

// Per-channel mean and population variance over batch and time.
void bn_channel_stats(const double* x, std::int64_t B, std::int64_t C,
                      std::int64_t T, double* mean, double* var);
// y = gamma[c] * (x - mean[c]) / sqrt(var[c] + eps) + beta[c]
void bn_normalize(const double* x, const double* mean, const double* var,
                  const double* gamma, const double* beta, double eps,
                  double* y, std::int64_t B, std::int64_t C, std::int64_t T);
// Backward through batch statistics (train mode). Outputs overwritten.
void bn_backward_train(const double* x, const double* dy, const double* mean,
                       const double* var, const double* gamma, double eps,
                       double* dx, double* dgamma, double* dbeta,
                       std::int64_t B, std::int64_t C, std::int64_t T);
// Backward when the stats were constants (infer mode).
void bn_backward_infer(const double* x, const double* dy, const double* mean,
                       const double* var, const double* gamma, double eps,
                       double* dx, double* dgamma, double* dbeta,
                       std::int64_t B, std::int64_t C, std::int64_t T);

namespace ref {

void matmul_nn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);
void matmul_tn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n);
void conv1d_forward(const double* x, const double* w, const double* bias,
                    double* y, std::int64_t B, std::int64_t cin,
                    std::int64_t cout, std::int64_t T, std::int64_t d);
void conv1d_backward_input(const double* dy, const double* w, double* dx,
                           std::int64_t B, std::int64_t cin, std::int64_t cout,
                           std::int64_t T, std::int64_t d);
void conv1d_backward_params(const double* x, const double* dy, double* dw,
                            double* db, std::int64_t B, std::int64_t cin,
                            std::int64_t cout, std::int64_t T, std::int64_t d);
void bn_channel_stats(const double* x, std::int64_t B, std::int64_t C,
                      std::int64_t T, double* mean, double* var);
void bn_normalize(const double* x, const double* mean, const double* var,
                  const double* gamma, const double* beta, double eps,
                  double* y, std::int64_t B, std::int64_t C, std::int64_t T);

}  // namespace ref

}  // namespace tsab::kernels
