#include "tsab/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>

namespace tsab::kernels {

namespace {
std::atomic<bool> g_parallel{true};

inline std::int64_t clamp_lo(std::int64_t v) { return v < 0 ? 0 : v; }
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

void matmul_nn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        double* __restrict ci = c + i * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* __restrict bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        const double* __restrict ai = a + i * k;
        double* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* __restrict bj = b + j * k;
            double sum = 0.0;
#pragma omp simd reduction(+ : sum)
            for (std::int64_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
            ci[j] = sum;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        double* __restrict ci = c + i * n;
        std::fill(ci, ci + n, 0.0);
        for (std::int64_t p = 0; p < k; ++p) {
            const double api = a[p * m + i];
            const double* __restrict bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void conv1d_forward(const double* x, const double* w, const double* bias,
                    double* y, std::int64_t B, std::int64_t cin,
                    std::int64_t cout, std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    const bool par = parallel_enabled();
#pragma omp parallel for collapse(2) if (par) schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < cout; ++o) {
            double* __restrict yo = y + (b * cout + o) * T;
            std::fill(yo, yo + T, bias[o]);
            for (std::int64_t i = 0; i < cin; ++i) {
                const double* __restrict xi = x + (b * cin + i) * T;
                for (std::int64_t tap = 0; tap < d; ++tap) {
                    // y[t] += w * x[t + tap - pad] over the in-range span
                    const double wv = w[(o * d + tap) * cin + i];
                    const std::int64_t shift = tap - pad;
                    const std::int64_t t0 = clamp_lo(-shift);
                    const std::int64_t t1 = std::min(T, T - shift);
                    const double* xs = xi + shift;
                    for (std::int64_t t = t0; t < t1; ++t) yo[t] += wv * xs[t];
                }
            }
        }
    }
}

void conv1d_backward_input(const double* dy, const double* w, double* dx,
                           std::int64_t B, std::int64_t cin, std::int64_t cout,
                           std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    const bool par = parallel_enabled();
#pragma omp parallel for collapse(2) if (par) schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < cin; ++i) {
            double* __restrict dxi = dx + (b * cin + i) * T;
            std::fill(dxi, dxi + T, 0.0);
            for (std::int64_t o = 0; o < cout; ++o) {
                const double* __restrict dyo = dy + (b * cout + o) * T;
                for (std::int64_t tap = 0; tap < d; ++tap) {
                    // x[s] fed y[s - tap + pad], so gradients flow back along
                    // the mirrored shift.
                    const double wv = w[(o * d + tap) * cin + i];
                    const std::int64_t shift = pad - tap;
                    const std::int64_t s0 = clamp_lo(-shift);
                    const std::int64_t s1 = std::min(T, T - shift);
                    const double* dys = dyo + shift;
                    for (std::int64_t s = s0; s < s1; ++s) dxi[s] += wv * dys[s];
                }
            }
        }
    }
}

void conv1d_backward_params(const double* x, const double* dy, double* dw,
                            double* db, std::int64_t B, std::int64_t cin,
                            std::int64_t cout, std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t o = 0; o < cout; ++o) {
        double* dwo = dw + o * d * cin;
        std::fill(dwo, dwo + d * cin, 0.0);
        double bsum = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict dyo = dy + (b * cout + o) * T;
#pragma omp simd reduction(+ : bsum)
            for (std::int64_t t = 0; t < T; ++t) bsum += dyo[t];
            for (std::int64_t tap = 0; tap < d; ++tap) {
                const std::int64_t shift = tap - pad;
                const std::int64_t t0 = clamp_lo(-shift);
                const std::int64_t t1 = std::min(T, T - shift);
                for (std::int64_t i = 0; i < cin; ++i) {
                    const double* __restrict xs = x + (b * cin + i) * T + shift;
                    double sum = 0.0;
#pragma omp simd reduction(+ : sum)
                    for (std::int64_t t = t0; t < t1; ++t) sum += dyo[t] * xs[t];
                    dwo[tap * cin + i] += sum;
                }
            }
        }
        db[o] = bsum;
    }
}

void bn_channel_stats(const double* x, std::int64_t B, std::int64_t C,
                      std::int64_t T, double* mean, double* var) {
    const double inv_n = 1.0 / static_cast<double>(B * T);
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict xc = x + (b * C + c) * T;
#pragma omp simd reduction(+ : sum)
            for (std::int64_t t = 0; t < T; ++t) sum += xc[t];
        }
        const double mu = sum * inv_n;
        double ssq = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict xc = x + (b * C + c) * T;
#pragma omp simd reduction(+ : ssq)
            for (std::int64_t t = 0; t < T; ++t) {
                const double dv = xc[t] - mu;
                ssq += dv * dv;
            }
        }
        mean[c] = mu;
        var[c] = ssq * inv_n;
    }
}

void bn_normalize(const double* x, const double* mean, const double* var,
                  const double* gamma, const double* beta, double eps,
                  double* y, std::int64_t B, std::int64_t C, std::int64_t T) {
    const bool par = parallel_enabled();
#pragma omp parallel for collapse(2) if (par) schedule(static)
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double scale = gamma[c] / std::sqrt(var[c] + eps);
            const double offset = beta[c] - mean[c] * scale;
            const double* __restrict xc = x + (b * C + c) * T;
            double* __restrict yc = y + (b * C + c) * T;
            for (std::int64_t t = 0; t < T; ++t) yc[t] = xc[t] * scale + offset;
        }
    }
}

void bn_backward_train(const double* x, const double* dy, const double* mean,
                       const double* var, const double* gamma, double eps,
                       double* dx, double* dgamma, double* dbeta,
                       std::int64_t B, std::int64_t C, std::int64_t T) {
    const double inv_n = 1.0 / static_cast<double>(B * T);
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        const double inv_std = 1.0 / std::sqrt(var[c] + eps);
        const double mu = mean[c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict xc = x + (b * C + c) * T;
            const double* __restrict dyc = dy + (b * C + c) * T;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xhat)
            for (std::int64_t t = 0; t < T; ++t) {
                sum_dy += dyc[t];
                sum_dy_xhat += dyc[t] * (xc[t] - mu) * inv_std;
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        const double g_scale = gamma[c] * inv_std;
        const double mean_dy = sum_dy * inv_n;
        const double mean_dy_xhat = sum_dy_xhat * inv_n;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict xc = x + (b * C + c) * T;
            const double* __restrict dyc = dy + (b * C + c) * T;
            double* __restrict dxc = dx + (b * C + c) * T;
            for (std::int64_t t = 0; t < T; ++t) {
                const double xhat = (xc[t] - mu) * inv_std;
                dxc[t] = g_scale * (dyc[t] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
}

void bn_backward_infer(const double* x, const double* dy, const double* mean,
                       const double* var, const double* gamma, double eps,
                       double* dx, double* dgamma, double* dbeta,
                       std::int64_t B, std::int64_t C, std::int64_t T) {
    const bool par = parallel_enabled();
#pragma omp parallel for if (par) schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        const double inv_std = 1.0 / std::sqrt(var[c] + eps);
        const double mu = mean[c];
        const double g_scale = gamma[c] * inv_std;
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            const double* __restrict xc = x + (b * C + c) * T;
            const double* __restrict dyc = dy + (b * C + c) * T;
            double* __restrict dxc = dx + (b * C + c) * T;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xhat)
            for (std::int64_t t = 0; t < T; ++t) {
                sum_dy += dyc[t];
                sum_dy_xhat += dyc[t] * (xc[t] - mu) * inv_std;
                dxc[t] = g_scale * dyc[t];
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
    }
}

namespace ref {

void matmul_nn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::int64_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
            c[i * n + j] = sum;
        }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::int64_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
            c[i * n + j] = sum;
        }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::int64_t p = 0; p < k; ++p) sum += a[p * m + i] * b[p * n + j];
            c[i * n + j] = sum;
        }
}

void conv1d_forward(const double* x, const double* w, const double* bias,
                    double* y, std::int64_t B, std::int64_t cin,
                    std::int64_t cout, std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t o = 0; o < cout; ++o)
            for (std::int64_t t = 0; t < T; ++t) {
                double sum = bias[o];
                for (std::int64_t tap = 0; tap < d; ++tap) {
                    const std::int64_t s = t + tap - pad;
                    if (s < 0 || s >= T) continue;
                    for (std::int64_t i = 0; i < cin; ++i)
                        sum += w[(o * d + tap) * cin + i] * x[(b * cin + i) * T + s];
                }
                y[(b * cout + o) * T + t] = sum;
            }
}

void conv1d_backward_input(const double* dy, const double* w, double* dx,
                           std::int64_t B, std::int64_t cin, std::int64_t cout,
                           std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    std::fill(dx, dx + B * cin * T, 0.0);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t o = 0; o < cout; ++o)
            for (std::int64_t t = 0; t < T; ++t)
                for (std::int64_t tap = 0; tap < d; ++tap) {
                    const std::int64_t s = t + tap - pad;
                    if (s < 0 || s >= T) continue;
                    for (std::int64_t i = 0; i < cin; ++i)
                        dx[(b * cin + i) * T + s] +=
                            w[(o * d + tap) * cin + i] * dy[(b * cout + o) * T + t];
                }
}

void conv1d_backward_params(const double* x, const double* dy, double* dw,
                            double* db, std::int64_t B, std::int64_t cin,
                            std::int64_t cout, std::int64_t T, std::int64_t d) {
    const std::int64_t pad = (d - 1) / 2;
    std::fill(dw, dw + cout * d * cin, 0.0);
    std::fill(db, db + cout, 0.0);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t o = 0; o < cout; ++o)
            for (std::int64_t t = 0; t < T; ++t) {
                const double g = dy[(b * cout + o) * T + t];
                db[o] += g;
                for (std::int64_t tap = 0; tap < d; ++tap) {
                    const std::int64_t s = t + tap - pad;
                    if (s < 0 || s >= T) continue;
                    for (std::int64_t i = 0; i < cin; ++i)
                        dw[(o * d + tap) * cin + i] += g * x[(b * cin + i) * T + s];
                }
            }
}

void bn_channel_stats(const double* x, std::int64_t B, std::int64_t C,
                      std::int64_t T, double* mean, double* var) {
    const double inv_n = 1.0 / static_cast<double>(B * T);
    for (std::int64_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t t = 0; t < T; ++t) sum += x[(b * C + c) * T + t];
        const double mu = sum * inv_n;
        double ssq = 0.0;
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t t = 0; t < T; ++t) {
                const double dv = x[(b * C + c) * T + t] - mu;
                ssq += dv * dv;
            }
        mean[c] = mu;
        var[c] = ssq * inv_n;
    }
}

void bn_normalize(const double* x, const double* mean, const double* var,
                  const double* gamma, const double* beta, double eps,
                  double* y, std::int64_t B, std::int64_t C, std::int64_t T) {
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t t = 0; t < T; ++t) {
                const std::int64_t idx = (b * C + c) * T + t;
                y[idx] = gamma[c] * (x[idx] - mean[c]) / std::sqrt(var[c] + eps) + beta[c];
            }
}

}  // namespace ref

}  // namespace tsab::kernels
