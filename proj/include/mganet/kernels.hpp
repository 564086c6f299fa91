#pragma once

// Low-level compute kernels for the tensor engine. Float paths use AVX-512
// when available; everything falls back to portable scalar loops (always used
// for double). All kernels run serially with a fixed accumulation order, so
// results are bitwise reproducible.

#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#define MGANET_AVX512 1
#endif

namespace mganet::kern {

// ---------------------------------------------------------------------------
// C (MxN) = A (MxK, row-major) * Bp (KxN, row-major panel), optionally +=.
// Tuned for small K (attention head dims, 1x1 convolutions).

template <typename T>
inline void gemm_panel(const T* A, const T* Bp, T* C, int M, int N, int K,
                       bool accumulate = false) {
    for (int i = 0; i < M; i++) {
        const T* a = A + size_t(i) * K;
        T* c = C + size_t(i) * N;
        if (!accumulate)
            for (int j = 0; j < N; j++) c[j] = T(0);
        for (int k = 0; k < K; k++) {
            T av = a[k];
            if (av == T(0)) continue;
            const T* b = Bp + size_t(k) * N;
            for (int j = 0; j < N; j++) c[j] += av * b[j];
        }
    }
}

#ifdef MGANET_AVX512
inline void gemm_panel(const float* A, const float* Bp, float* C, int M, int N, int K,
                       bool accumulate = false) {
    int i = 0;
    for (; i + 4 <= M; i += 4) {
        const float* a[4];
        float* c[4];
        for (int u = 0; u < 4; u++) {
            a[u] = A + size_t(i + u) * K;
            c[u] = C + size_t(i + u) * N;
        }
        int j = 0;
        for (; j + 32 <= N; j += 32) {
            __m512 s[4][2];
            for (int u = 0; u < 4; u++) {
                if (accumulate) {
                    s[u][0] = _mm512_loadu_ps(c[u] + j);
                    s[u][1] = _mm512_loadu_ps(c[u] + j + 16);
                } else {
                    s[u][0] = _mm512_setzero_ps();
                    s[u][1] = _mm512_setzero_ps();
                }
            }
            for (int k = 0; k < K; k++) {
                __m512 b0 = _mm512_loadu_ps(Bp + size_t(k) * N + j);
                __m512 b1 = _mm512_loadu_ps(Bp + size_t(k) * N + j + 16);
                for (int u = 0; u < 4; u++) {
                    __m512 w = _mm512_set1_ps(a[u][k]);
                    s[u][0] = _mm512_fmadd_ps(w, b0, s[u][0]);
                    s[u][1] = _mm512_fmadd_ps(w, b1, s[u][1]);
                }
            }
            for (int u = 0; u < 4; u++) {
                _mm512_storeu_ps(c[u] + j, s[u][0]);
                _mm512_storeu_ps(c[u] + j + 16, s[u][1]);
            }
        }
        for (; j < N; j++) {
            for (int u = 0; u < 4; u++) {
                float acc = accumulate ? c[u][j] : 0.f;
                for (int k = 0; k < K; k++) acc += a[u][k] * Bp[size_t(k) * N + j];
                c[u][j] = acc;
            }
        }
    }
    for (; i < M; i++) {
        const float* a = A + size_t(i) * K;
        float* c = C + size_t(i) * N;
        int j = 0;
        for (; j + 16 <= N; j += 16) {
            __m512 s = accumulate ? _mm512_loadu_ps(c + j) : _mm512_setzero_ps();
            for (int k = 0; k < K; k++)
                s = _mm512_fmadd_ps(_mm512_set1_ps(a[k]),
                                    _mm512_loadu_ps(Bp + size_t(k) * N + j), s);
            _mm512_storeu_ps(c + j, s);
        }
        for (; j < N; j++) {
            float acc = accumulate ? c[j] : 0.f;
            for (int k = 0; k < K; k++) acc += a[k] * Bp[size_t(k) * N + j];
            c[j] = acc;
        }
    }
}
#endif

// ---------------------------------------------------------------------------
// O (MxD) = P (MxS) * V (SxD), fat inner dimension, D small (= head dim).

template <typename T>
inline void av_cols(const T* P, const T* V, T* O, int M, int S, int D,
                    bool accumulate = false, T scale = T(1)) {
    for (int i = 0; i < M; i++) {
        const T* p = P + size_t(i) * S;
        T* o = O + size_t(i) * D;
        std::vector<T> acc(D, T(0));
        for (int j = 0; j < S; j++) {
            T pj = p[j];
            const T* v = V + size_t(j) * D;
            for (int c = 0; c < D; c++) acc[c] += pj * v[c];
        }
        for (int c = 0; c < D; c++) {
            T r = acc[c] * scale;
            o[c] = accumulate ? o[c] + r : r;
        }
    }
}

#ifdef MGANET_AVX512
inline void av_cols(const float* P, const float* V, float* O, int M, int S, int D,
                    bool accumulate = false, float scale = 1.f) {
    if (D != 16) {  // generic width: scalar path
        for (int i = 0; i < M; i++) {
            const float* p = P + size_t(i) * S;
            float* o = O + size_t(i) * D;
            std::vector<float> acc(D, 0.f);
            for (int j = 0; j < S; j++)
                for (int c = 0; c < D; c++) acc[c] += p[j] * V[size_t(j) * D + c];
            for (int c = 0; c < D; c++)
                o[c] = accumulate ? o[c] + acc[c] * scale : acc[c] * scale;
        }
        return;
    }
    int i = 0;
    for (; i + 4 <= M; i += 4) {
        const float* p[4];
        for (int u = 0; u < 4; u++) p[u] = P + size_t(i + u) * S;
        __m512 acc[4] = {_mm512_setzero_ps(), _mm512_setzero_ps(), _mm512_setzero_ps(),
                         _mm512_setzero_ps()};
        for (int j = 0; j < S; j++) {
            __m512 v = _mm512_loadu_ps(V + size_t(j) * 16);
            for (int u = 0; u < 4; u++)
                acc[u] = _mm512_fmadd_ps(_mm512_set1_ps(p[u][j]), v, acc[u]);
        }
        __m512 sc = _mm512_set1_ps(scale);
        for (int u = 0; u < 4; u++) {
            __m512 r = _mm512_mul_ps(acc[u], sc);
            float* o = O + size_t(i + u) * 16;
            if (accumulate) r = _mm512_add_ps(r, _mm512_loadu_ps(o));
            _mm512_storeu_ps(o, r);
        }
    }
    for (; i < M; i++) {
        const float* p = P + size_t(i) * S;
        __m512 acc = _mm512_setzero_ps();
        for (int j = 0; j < S; j++)
            acc = _mm512_fmadd_ps(_mm512_set1_ps(p[j]), _mm512_loadu_ps(V + size_t(j) * 16),
                                  acc);
        __m512 r = _mm512_mul_ps(acc, _mm512_set1_ps(scale));
        float* o = O + size_t(i) * 16;
        if (accumulate) r = _mm512_add_ps(r, _mm512_loadu_ps(o));
        _mm512_storeu_ps(o, r);
    }
}
#endif

// ---------------------------------------------------------------------------
// OUT (NxD) += scale * sum_m S[m][j] * R[m][:], S is MxN (row stride ldS).
// Used for dK / dV accumulation inside attention blocks.

template <typename T>
inline void outer_acc(const T* S, int ldS, int M, int N, const T* R, int D, T* OUT,
                      T scale = T(1)) {
    for (int j = 0; j < N; j++) {
        T* out = OUT + size_t(j) * D;
        for (int m = 0; m < M; m++) {
            T s = S[size_t(m) * ldS + j] * scale;
            if (s == T(0)) continue;
            const T* r = R + size_t(m) * D;
            for (int c = 0; c < D; c++) out[c] += s * r[c];
        }
    }
}

#ifdef MGANET_AVX512
inline void outer_acc(const float* S, int ldS, int M, int N, const float* R, int D,
                      float* OUT, float scale = 1.f) {
    if (D != 16) {
        for (int j = 0; j < N; j++) {
            float* out = OUT + size_t(j) * D;
            for (int m = 0; m < M; m++) {
                float s = S[size_t(m) * ldS + j] * scale;
                const float* r = R + size_t(m) * D;
                for (int c = 0; c < D; c++) out[c] += s * r[c];
            }
        }
        return;
    }
    __m512 sc = _mm512_set1_ps(scale);
    for (int j = 0; j < N; j++) {
        float* out = OUT + size_t(j) * 16;
        __m512 acc = _mm512_loadu_ps(out);
        for (int m = 0; m < M; m++) {
            __m512 s = _mm512_mul_ps(_mm512_set1_ps(S[size_t(m) * ldS + j]), sc);
            acc = _mm512_fmadd_ps(s, _mm512_loadu_ps(R + size_t(m) * 16), acc);
        }
        _mm512_storeu_ps(out, acc);
    }
}
#endif

// ---------------------------------------------------------------------------
// transpose: dst (C x R) = src (R x C)

template <typename T>
inline void transpose(const T* src, T* dst, int R, int C) {
    constexpr int B = 32;
    for (int r0 = 0; r0 < R; r0 += B)
        for (int c0 = 0; c0 < C; c0 += B) {
            int r1 = std::min(r0 + B, R), c1 = std::min(c0 + B, C);
            for (int r = r0; r < r1; r++)
                for (int c = c0; c < c1; c++) dst[size_t(c) * R + r] = src[size_t(r) * C + c];
        }
}

// ---------------------------------------------------------------------------
// fused exp (softmax helper)

inline float fast_expf(float x) {
    x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
    float n = std::floor(x * 1.442695041f + 0.5f);
    float r = x - n * 0.693359375f;  // Cody-Waite split of ln 2
    r -= n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    int32_t bits;
    std::memcpy(&bits, &p, 4);
    bits += int32_t(n) << 23;
    std::memcpy(&p, &bits, 4);
    return p;
}

inline void exp_inplace(float* p, int n) {
#pragma omp simd
    for (int i = 0; i < n; i++) p[i] = fast_expf(p[i]);
}

inline void exp_inplace(double* p, int n) {
    for (int i = 0; i < n; i++) p[i] = std::exp(p[i]);
}

// softmax over each row of S (M x N); deterministic serial order
template <typename T>
inline void softmax_rows(T* S, int M, int N) {
    for (int i = 0; i < M; i++) {
        T* row = S + size_t(i) * N;
        T mx = row[0];
        for (int j = 1; j < N; j++) mx = std::max(mx, row[j]);
        for (int j = 0; j < N; j++) row[j] -= mx;
        exp_inplace(row, N);
        T sum = T(0);
        for (int j = 0; j < N; j++) sum += row[j];
        T inv = T(1) / sum;
        for (int j = 0; j < N; j++) row[j] *= inv;
    }
}

// ---------------------------------------------------------------------------
// direct 3x3x3 convolution, stride 1, zero "same" padding.
// in: (Ci, nz*ny*nx) channel-major, w: (Co, Ci, 27), out: (Co, vox).
// out must be pre-filled (bias or zeros); kernel accumulates into it.

template <typename T>
inline void conv3x3_acc(const T* in, const T* w, T* out, int Ci, int Co, int nx, int ny,
                        int nz) {
    const size_t plane = size_t(nx) * ny, vol = plane * nz;
    for (int co = 0; co < Co; co++) {
        T* og = out + size_t(co) * vol;
        for (int ci = 0; ci < Ci; ci++) {
            const T* ig = in + size_t(ci) * vol;
            const T* wk = w + (size_t(co) * Ci + ci) * 27;
            for (int t = 0; t < 27; t++) {
                int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
                T wv = wk[t];
                if (wv == T(0)) continue;
                for (int z = 0; z < nz; z++) {
                    int sz = z + dz;
                    if (sz < 0 || sz >= nz) continue;
                    for (int y = 0; y < ny; y++) {
                        int sy = y + dy;
                        if (sy < 0 || sy >= ny) continue;
                        T* orow = og + z * plane + size_t(y) * nx;
                        const T* irow = ig + sz * plane + size_t(sy) * nx;
                        int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? nx - 1 : nx;
                        for (int x = x0; x < x1; x++) orow[x] += wv * irow[x + dx];
                    }
                }
            }
        }
    }
}

#ifdef MGANET_AVX512
inline void conv3x3_acc(const float* in, const float* w, float* out, int Ci, int Co,
                        int nx, int ny, int nz) {
    const size_t plane = size_t(nx) * ny, vol = plane * nz;
    const int nchunks = (nx + 15) / 16;
    // per-chunk masks for the three x shifts
    std::vector<__mmask16> store_m(nchunks), shl_m(nchunks), shr_m(nchunks);
    for (int c = 0; c < nchunks; c++) {
        int x0 = c * 16;
        int lanes = std::min(16, nx - x0);
        __mmask16 base = lanes >= 16 ? __mmask16(0xFFFF) : __mmask16((1u << lanes) - 1);
        store_m[c] = base;
        // dx = -1: lane reads x-1; invalid when x == 0
        shl_m[c] = x0 == 0 ? __mmask16(base & 0xFFFE) : base;
        // dx = +1: lane reads x+1; invalid when x == nx-1
        int last = nx - 1 - x0;
        shr_m[c] = (last >= 0 && last < 16) ? __mmask16(base & ~(1u << last)) : base;
    }

    int co = 0;
    for (; co + 4 <= Co; co += 4) {
        float* og[4];
        for (int u = 0; u < 4; u++) og[u] = out + size_t(co + u) * vol;
        for (int ci = 0; ci < Ci; ci++) {
            const float* ig = in + size_t(ci) * vol;
            const float* wk[4];
            for (int u = 0; u < 4; u++) wk[u] = w + (size_t(co + u) * Ci + ci) * 27;
            for (int z = 0; z < nz; z++)
                for (int y = 0; y < ny; y++) {
                    float* orow0 = og[0] + z * plane + size_t(y) * nx;
                    float* orow1 = og[1] + z * plane + size_t(y) * nx;
                    float* orow2 = og[2] + z * plane + size_t(y) * nx;
                    float* orow3 = og[3] + z * plane + size_t(y) * nx;
                    for (int chunk = 0; chunk < nchunks; chunk++) {
                        int x0 = chunk * 16;
                        __mmask16 sm = store_m[chunk];
                        __m512 acc0 = _mm512_maskz_loadu_ps(sm, orow0 + x0);
                        __m512 acc1 = _mm512_maskz_loadu_ps(sm, orow1 + x0);
                        __m512 acc2 = _mm512_maskz_loadu_ps(sm, orow2 + x0);
                        __m512 acc3 = _mm512_maskz_loadu_ps(sm, orow3 + x0);
                        for (int t = 0; t < 27; t++) {
                            int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
                            int sz = z + dz, sy = y + dy;
                            if (sz < 0 || sz >= nz || sy < 0 || sy >= ny) continue;
                            const float* irow = ig + sz * plane + size_t(sy) * nx;
                            __mmask16 lm =
                                dx == 0 ? sm : (dx < 0 ? shl_m[chunk] : shr_m[chunk]);
                            __m512 iv = _mm512_maskz_loadu_ps(lm, irow + x0 + dx);
                            acc0 = _mm512_fmadd_ps(_mm512_set1_ps(wk[0][t]), iv, acc0);
                            acc1 = _mm512_fmadd_ps(_mm512_set1_ps(wk[1][t]), iv, acc1);
                            acc2 = _mm512_fmadd_ps(_mm512_set1_ps(wk[2][t]), iv, acc2);
                            acc3 = _mm512_fmadd_ps(_mm512_set1_ps(wk[3][t]), iv, acc3);
                        }
                        _mm512_mask_storeu_ps(orow0 + x0, sm, acc0);
                        _mm512_mask_storeu_ps(orow1 + x0, sm, acc1);
                        _mm512_mask_storeu_ps(orow2 + x0, sm, acc2);
                        _mm512_mask_storeu_ps(orow3 + x0, sm, acc3);
                    }
                }
        }
    }
    for (; co < Co; co++) {
        float* og = out + size_t(co) * vol;
        for (int ci = 0; ci < Ci; ci++) {
            const float* ig = in + size_t(ci) * vol;
            const float* wk = w + (size_t(co) * Ci + ci) * 27;
            for (int z = 0; z < nz; z++)
                for (int y = 0; y < ny; y++) {
                    float* orow = og + z * plane + size_t(y) * nx;
                    for (int chunk = 0; chunk < nchunks; chunk++) {
                        int x0 = chunk * 16;
                        __mmask16 sm = store_m[chunk];
                        __m512 acc = _mm512_maskz_loadu_ps(sm, orow + x0);
                        for (int t = 0; t < 27; t++) {
                            int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
                            int sz = z + dz, sy = y + dy;
                            if (sz < 0 || sz >= nz || sy < 0 || sy >= ny) continue;
                            const float* irow = ig + sz * plane + size_t(sy) * nx;
                            __mmask16 lm =
                                dx == 0 ? sm : (dx < 0 ? shl_m[chunk] : shr_m[chunk]);
                            __m512 iv = _mm512_maskz_loadu_ps(lm, irow + x0 + dx);
                            acc = _mm512_fmadd_ps(_mm512_set1_ps(wk[t]), iv, acc);
                        }
                        _mm512_mask_storeu_ps(orow + x0, sm, acc);
                    }
                }
        }
    }
}
#endif

// weight gradient for the 3x3x3 stride-1 convolution:
// dW[co][ci][t] += sum_v x[ci][v + offset(t)] * dout[co][v]
template <typename T>
inline void conv3x3_wgrad(const T* x, const T* dout, T* dw, int Ci, int Co, int nx, int ny,
                          int nz) {
    const size_t plane = size_t(nx) * ny, vol = plane * nz;
    for (int co = 0; co < Co; co++) {
        const T* g = dout + size_t(co) * vol;
        for (int ci = 0; ci < Ci; ci++) {
            const T* ig = x + size_t(ci) * vol;
            T* wk = dw + (size_t(co) * Ci + ci) * 27;
            for (int t = 0; t < 27; t++) {
                int dz = t / 9 - 1, dy = (t / 3) % 3 - 1, dx = t % 3 - 1;
                double acc = 0.0;
                for (int z = 0; z < nz; z++) {
                    int sz = z + dz;
                    if (sz < 0 || sz >= nz) continue;
                    for (int y = 0; y < ny; y++) {
                        int sy = y + dy;
                        if (sy < 0 || sy >= ny) continue;
                        const T* grow = g + z * plane + size_t(y) * nx;
                        const T* irow = ig + sz * plane + size_t(sy) * nx;
                        int x0 = dx < 0 ? 1 : 0, x1 = dx > 0 ? nx - 1 : nx;
                        T row_acc = T(0);
                        for (int xx = x0; xx < x1; xx++) row_acc += grow[xx] * irow[xx + dx];
                        acc += double(row_acc);
                    }
                }
                wk[t] += T(acc);
            }
        }
    }
}

}  // namespace mganet::kern
