/* Table-lookup GEMM kernels and baselines.
 *
 * Operand layout: activations A are M rows of packed codes along the
 * reduction dimension N; weights W are K rows (one per output column) of
 * packed codes along N. Outputs are row-major M x K.
 *
 * The AVX2 code is compiled with function-level target attributes so the
 * module imports on any x86-64 CPU; callers dispatch on cpu_has_avx2().
 */
#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdint.h>
#include <string.h>

#if defined(__x86_64__) || defined(_M_X64)
#define HAVE_X86 1
#include <immintrin.h>
#else
#define HAVE_X86 0
#endif

typedef Py_ssize_t ssize;

static volatile int64_t profile_sink;

static inline unsigned rotr2(unsigned b) { return ((b >> 2) | (b << 6)) & 0xFFu; }

/* ------------------------------------------------------------------------ */
/* Scalar table-lookup kernels, any supported bitwidth.                     */

#define DEFINE_LUT_SCALAR(NAME, T, ACC, OUT)                                          \
    static void NAME(const uint8_t *A, ssize lda, const uint8_t *W, ssize ldw,        \
                     const T *lut, OUT *out, ssize m0, ssize m1, ssize K, ssize N,    \
                     int bits, int rotated)                                           \
    {                                                                                 \
        const int vpb = bits == 2 ? 4 : (bits == 4 ? 2 : 1);                          \
        const unsigned mask = (1u << bits) - 1u;                                      \
        const ssize nfull = N / vpb, rem = N % vpb;                                   \
        for (ssize m = m0; m < m1; m++) {                                             \
            const uint8_t *a = A + m * lda;                                           \
            for (ssize k = 0; k < K; k++) {                                           \
                const uint8_t *w = W + k * ldw;                                       \
                ACC acc = 0;                                                          \
                for (ssize j = 0; j < nfull + (rem ? 1 : 0); j++) {                    \
                    const int lanes = j < nfull ? vpb : (int)rem;                     \
                    unsigned wb = w[j], ab = a[j];                                    \
                    if (rotated)                                                      \
                        wb = rotr2(wb);                                               \
                    for (int l = 0; l < lanes; l++) {                                 \
                        const unsigned s = (unsigned)(l * bits);                      \
                        acc += lut[(((wb >> s) & mask) << bits) | ((ab >> s) & mask)]; \
                    }                                                                 \
                }                                                                     \
                out[m * K + k] = (OUT)acc;                                            \
            }                                                                         \
        }                                                                             \
    }

DEFINE_LUT_SCALAR(lut_scalar_i8, int8_t, int64_t, int32_t)
DEFINE_LUT_SCALAR(lut_scalar_i32, int32_t, int64_t, int32_t)
DEFINE_LUT_SCALAR(lut_scalar_f64, double, double, double)

/* Instrumented 2-bit scalar kernel. stage 0: index extraction only,
 * stage 1: extraction + lookup, stage 2: full kernel. Non-final stages fold
 * their results into a sink so the work is not optimized away. */
static void lut16_scalar_staged(const uint8_t *A, ssize lda, const uint8_t *W, ssize ldw,
                                const int8_t *lut, int32_t *out, ssize m0, ssize m1, ssize K,
                                ssize N, int rotated, int stage)
{
    const ssize nfull = N / 4, rem = N % 4;
    int64_t sink = 0;
    for (ssize m = m0; m < m1; m++) {
        const uint8_t *a = A + m * lda;
        for (ssize k = 0; k < K; k++) {
            const uint8_t *w = W + k * ldw;
            int64_t acc = 0;
            for (ssize j = 0; j < nfull + (rem ? 1 : 0); j++) {
                const int lanes = j < nfull ? 4 : (int)rem;
                unsigned wb = w[j], ab = a[j];
                if (rotated)
                    wb = rotr2(wb);
                for (int l = 0; l < lanes; l++) {
                    const unsigned idx = (((wb >> (2 * l)) & 3u) << 2) | ((ab >> (2 * l)) & 3u);
                    if (stage == 0)
                        acc ^= idx;
                    else if (stage == 1)
                        acc ^= (uint8_t)lut[idx];
                    else
                        acc += lut[idx];
                }
            }
            if (stage == 2)
                out[m * K + k] = (int32_t)acc;
            else
                sink ^= acc;
        }
    }
    profile_sink = sink;
}

/* ------------------------------------------------------------------------ */
/* LUT-65k: one lookup per (weight byte, activation byte) pair.             */

#define DEFINE_LUT65K(NAME, T, ACC, OUT)                                              \
    static void NAME(const uint8_t *A, ssize lda, const uint8_t *W, ssize ldw,        \
                     const T *lut, const T *pair, OUT *out, ssize m0, ssize m1,       \
                     ssize K, ssize N, int pad_ok)                                    \
    {                                                                                 \
        const ssize nfull = N / 4, rem = N % 4;                                       \
        for (ssize m = m0; m < m1; m++) {                                             \
            const uint8_t *a = A + m * lda;                                           \
            for (ssize k = 0; k < K; k++) {                                           \
                const uint8_t *w = W + k * ldw;                                       \
                ACC acc = 0;                                                          \
                for (ssize j = 0; j < nfull; j++)                                     \
                    acc += lut[((unsigned)w[j] << 8) | a[j]];                         \
                if (rem) {                                                            \
                    const unsigned wb = w[nfull], ab = a[nfull];                      \
                    if (pad_ok) {                                                     \
                        acc += lut[(wb << 8) | ab];                                   \
                    } else {                                                          \
                        for (int l = 0; l < (int)rem; l++)                            \
                            acc += pair[(((wb >> (2 * l)) & 3u) << 2) |               \
                                        ((ab >> (2 * l)) & 3u)];                      \
                    }                                                                 \
                }                                                                     \
                out[m * K + k] = (OUT)acc;                                            \
            }                                                                         \
        }                                                                             \
    }

DEFINE_LUT65K(lut65k_i8, int8_t, int64_t, int32_t)
DEFINE_LUT65K(lut65k_i32, int32_t, int64_t, int32_t)
DEFINE_LUT65K(lut65k_f64, double, double, double)

/* Instrumented int8 LUT-65k, same stage numbering as lut16_scalar_staged.
 * Stage 0 forms the 16-bit indices, stage 1 adds the table loads. */
static void lut65k_staged(const uint8_t *A, ssize lda, const uint8_t *W, ssize ldw,
                          const int8_t *lut, int32_t *out, ssize m0, ssize m1, ssize K,
                          ssize N, int stage)
{
    const ssize nb = (N + 3) / 4;
    int64_t sink = 0;
    for (ssize m = m0; m < m1; m++) {
        const uint8_t *a = A + m * lda;
        for (ssize k = 0; k < K; k++) {
            const uint8_t *w = W + k * ldw;
            int64_t acc = 0;
            for (ssize j = 0; j < nb; j++) {
                const unsigned idx = ((unsigned)w[j] << 8) | a[j];
                if (stage == 0)
                    acc ^= idx;
                else if (stage == 1)
                    acc ^= (uint8_t)lut[idx];
                else
                    acc += lut[idx];
            }
            if (stage == 2)
                out[m * K + k] = (int32_t)acc;
            else
                sink ^= acc;
        }
    }
    profile_sink = sink;
}

/* ------------------------------------------------------------------------ */
/* Baselines.                                                               */

static void gemm_i8_scalar(const int8_t *A, const int8_t *W, int32_t *out, ssize m0, ssize m1,
                           ssize K, ssize N)
{
    for (ssize m = m0; m < m1; m++) {
        const int8_t *a = A + m * N;
        for (ssize k = 0; k < K; k++) {
            const int8_t *w = W + k * N;
            int32_t acc = 0;
            for (ssize n = 0; n < N; n++)
                acc += (int32_t)a[n] * (int32_t)w[n];
            out[m * K + k] = acc;
        }
    }
}

__attribute__((optimize("no-tree-vectorize")))
static void gemm_f32_scalar(const float *A, const float *W, float *out, ssize m0, ssize m1,
                            ssize K, ssize N)
{
    for (ssize m = m0; m < m1; m++) {
        const float *a = A + m * N;
        for (ssize k = 0; k < K; k++) {
            const float *w = W + k * N;
            float acc = 0.0f;
            for (ssize n = 0; n < N; n++)
                acc += a[n] * w[n];
            out[m * K + k] = acc;
        }
    }
}

#if HAVE_X86
#define AVX2_FN __attribute__((target("avx2")))
#define AVX2_INLINE static inline __attribute__((always_inline, target("avx2")))

AVX2_INLINE int32_t hsum_epi32(__m256i v)
{
    __m128i lo = _mm256_castsi256_si128(v);
    __m128i hi = _mm256_extracti128_si256(v, 1);
    __m128i d = _mm_add_epi32(hi, lo);
    __m128i e = _mm_shuffle_epi32(d, 238);
    __m128i f = _mm_add_epi32(e, d);
    __m128i g = _mm_shuffle_epi32(f, 1);
    return _mm_cvtsi128_si32(_mm_add_epi32(g, f));
}

/* Widening 8-bit multiply baseline, 1 x 4 output microtile. */
AVX2_FN static void gemm_i8_avx2(const int8_t *A, const int8_t *W, int32_t *out, ssize m0,
                                 ssize m1, ssize K, ssize N)
{
    const ssize nv = N / 16;
    for (ssize m = m0; m < m1; m++) {
        const int8_t *a = A + m * N;
        ssize k = 0;
        for (; k + 4 <= K; k += 4) {
            const int8_t *w0 = W + k * N, *w1 = w0 + N, *w2 = w1 + N, *w3 = w2 + N;
            __m256i c0 = _mm256_setzero_si256(), c1 = c0, c2 = c0, c3 = c0;
            for (ssize v = 0; v < nv; v++) {
                const __m256i av = _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(a + 16 * v)));
                c0 = _mm256_add_epi32(c0, _mm256_madd_epi16(av, _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(w0 + 16 * v)))));
                c1 = _mm256_add_epi32(c1, _mm256_madd_epi16(av, _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(w1 + 16 * v)))));
                c2 = _mm256_add_epi32(c2, _mm256_madd_epi16(av, _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(w2 + 16 * v)))));
                c3 = _mm256_add_epi32(c3, _mm256_madd_epi16(av, _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(w3 + 16 * v)))));
            }
            int32_t s0 = hsum_epi32(c0), s1 = hsum_epi32(c1), s2 = hsum_epi32(c2), s3 = hsum_epi32(c3);
            for (ssize n = nv * 16; n < N; n++) {
                s0 += a[n] * w0[n];
                s1 += a[n] * w1[n];
                s2 += a[n] * w2[n];
                s3 += a[n] * w3[n];
            }
            int32_t *o = out + m * K + k;
            o[0] = s0;
            o[1] = s1;
            o[2] = s2;
            o[3] = s3;
        }
        for (; k < K; k++) {
            const int8_t *w = W + k * N;
            __m256i c = _mm256_setzero_si256();
            for (ssize v = 0; v < nv; v++) {
                const __m256i av = _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(a + 16 * v)));
                c = _mm256_add_epi32(c, _mm256_madd_epi16(av, _mm256_cvtepi8_epi16(_mm_loadu_si128((const __m128i *)(w + 16 * v)))));
            }
            int32_t s = hsum_epi32(c);
            for (ssize n = nv * 16; n < N; n++)
                s += a[n] * w[n];
            out[m * K + k] = s;
        }
    }
}

typedef struct {
    __m256i i0, i1, i2, i3;
} idx4;

/* Index extraction per scheme; all return (w_j << 2) | a_j in lanes 0..3.
 * 16-bit shifts leak bits across byte boundaries only into positions that
 * the following mask clears. */
AVX2_INLINE idx4 extract_indices(const int scheme, __m256i w, __m256i a)
{
    const __m256i m03 = _mm256_set1_epi8(0x03), m0C = _mm256_set1_epi8(0x0C);
    const __m256i m0F = _mm256_set1_epi8(0x0F), m30 = _mm256_set1_epi8(0x30);
    const __m256i mC0 = _mm256_set1_epi8((char)0xC0), mCC = _mm256_set1_epi8((char)0xCC);
    const __m256i m33 = _mm256_set1_epi8(0x33);
    idx4 r;
    switch (scheme) {
    case 0: /* natural layout, one lane pair per pass */
        r.i0 = _mm256_or_si256(_mm256_and_si256(_mm256_slli_epi16(w, 2), m0C), _mm256_and_si256(a, m03));
        r.i1 = _mm256_or_si256(_mm256_and_si256(w, m0C), _mm256_and_si256(_mm256_srli_epi16(a, 2), m03));
        r.i2 = _mm256_or_si256(_mm256_and_si256(_mm256_srli_epi16(w, 2), m0C), _mm256_and_si256(_mm256_srli_epi16(a, 4), m03));
        r.i3 = _mm256_or_si256(_mm256_and_si256(_mm256_srli_epi16(w, 4), m0C), _mm256_and_si256(_mm256_srli_epi16(a, 6), m03));
        break;
    case 1: { /* natural layout, two lane pairs per pass */
        const __m256i even = _mm256_or_si256(_mm256_and_si256(_mm256_slli_epi16(w, 2), mCC), _mm256_and_si256(a, m33));
        const __m256i odd = _mm256_or_si256(_mm256_and_si256(w, mCC), _mm256_and_si256(_mm256_srli_epi16(a, 2), m33));
        r.i0 = _mm256_and_si256(even, m0F);
        r.i1 = _mm256_and_si256(odd, m0F);
        r.i2 = _mm256_and_si256(_mm256_srli_epi16(even, 4), m0F);
        r.i3 = _mm256_and_si256(_mm256_srli_epi16(odd, 4), m0F);
        break;
    }
    case 2: /* rotated weights, one lane pair per pass */
        r.i0 = _mm256_or_si256(_mm256_and_si256(w, m0C), _mm256_and_si256(a, m03));
        r.i1 = _mm256_srli_epi16(_mm256_or_si256(_mm256_and_si256(w, m30), _mm256_and_si256(a, m0C)), 2);
        r.i2 = _mm256_srli_epi16(_mm256_or_si256(_mm256_and_si256(w, mC0), _mm256_and_si256(a, m30)), 4);
        r.i3 = _mm256_or_si256(_mm256_and_si256(_mm256_slli_epi16(w, 2), m0C), _mm256_and_si256(_mm256_srli_epi16(a, 6), m03));
        break;
    default: { /* rotated weights, lanes 0 and 2 in one pass */
        const __m256i even = _mm256_or_si256(_mm256_and_si256(w, mCC), _mm256_and_si256(a, m33));
        r.i0 = _mm256_and_si256(even, m0F);
        r.i2 = _mm256_and_si256(_mm256_srli_epi16(even, 4), m0F);
        r.i1 = _mm256_srli_epi16(_mm256_or_si256(_mm256_and_si256(w, m30), _mm256_and_si256(a, m0C)), 2);
        r.i3 = _mm256_or_si256(_mm256_and_si256(_mm256_slli_epi16(w, 2), m0C), _mm256_and_si256(_mm256_srli_epi16(a, 6), m03));
        break;
    }
    }
    return r;
}

static inline int32_t lut16_tail(const uint8_t *a, const uint8_t *w, ssize j0, ssize nfull,
                                 ssize rem, const int8_t *lut, int rotated)
{
    int32_t acc = 0;
    for (ssize j = j0; j < nfull + (rem ? 1 : 0); j++) {
        const int lanes = j < nfull ? 4 : (int)rem;
        unsigned wb = w[j], ab = a[j];
        if (rotated)
            wb = rotr2(wb);
        for (int l = 0; l < lanes; l++)
            acc += lut[(((wb >> (2 * l)) & 3u) << 2) | ((ab >> (2 * l)) & 3u)];
    }
    return acc;
}

/* NC output columns against one activation row. The four lane lookups of a
 * chunk are summed in 8-bit lanes and kept there for `group` chunks
 * (4 * group * max|entry| <= 127), then widened to 16-bit with maddubs; the
 * 16-bit sums are flushed to 32-bit every `flush` widenings. group == 0
 * widens every lookup individually (tables with large entries). */
/* Forces a vector to be computed without emitting any instruction; the
 * truncated profiling variants use it in place of real consumers. */
#define KEEP_LIVE(v) __asm__ volatile("" : : "x"(v))

/* A partial final chunk (`n` < 32 bytes) reads past the row end: masked when
 * the over-read stays inside the buffer, copied otherwise. Zeroed byte pairs
 * each add 4 * lut[0], which the caller subtracts. */
AVX2_INLINE __m256i load_chunk(const uint8_t *p, int n, __m256i keep, int safe)
{
    if (n == 32)
        return _mm256_loadu_si256((const __m256i *)p);
    if (safe)
        return _mm256_and_si256(_mm256_loadu_si256((const __m256i *)p), keep);
    uint8_t buf[32] = {0};
    memcpy(buf, p, (size_t)n);
    return _mm256_loadu_si256((const __m256i *)buf);
}

AVX2_INLINE void lut16_tile(const int scheme, const int stage, const int NC, const int group,
                            const int short_row, const uint8_t *a, const uint8_t *w, ssize ldw,
                            ssize nvec, int tail, __m256i keep, int a_safe, int w_safe, int flush,
                            __m256i lutv, int32_t *res)
{
    /* short_row: the whole row fits in one 8-bit group, so the 16/32-bit
     * stages never run and are skipped entirely */
    const __m256i ones8 = _mm256_set1_epi8(1), ones16 = _mm256_set1_epi16(1);
    __m256i acc8[4], acc16[4], acc32[4];
    for (int c = 0; c < NC; c++)
        acc8[c] = acc16[c] = acc32[c] = _mm256_setzero_si256();
    const ssize nchunks = nvec + (tail ? 1 : 0);
    int in8 = 0, in16 = 0;
    for (ssize v = 0; v < nchunks; v++) {
        const int n = v == nvec ? tail : 32;
        const __m256i av = load_chunk(a + 32 * v, n, keep, a_safe);
        for (int c = 0; c < NC; c++) {
            const __m256i wv = load_chunk(w + c * ldw + 32 * v, n, keep, w_safe);
            const idx4 ix = extract_indices(scheme, wv, av);
            if (stage == 0) {
                KEEP_LIVE(ix.i0);
                KEEP_LIVE(ix.i1);
                KEEP_LIVE(ix.i2);
                KEEP_LIVE(ix.i3);
                continue;
            }
            const __m256i r0 = _mm256_shuffle_epi8(lutv, ix.i0);
            const __m256i r1 = _mm256_shuffle_epi8(lutv, ix.i1);
            const __m256i r2 = _mm256_shuffle_epi8(lutv, ix.i2);
            const __m256i r3 = _mm256_shuffle_epi8(lutv, ix.i3);
            if (stage == 1) {
                KEEP_LIVE(r0);
                KEEP_LIVE(r1);
                KEEP_LIVE(r2);
                KEEP_LIVE(r3);
                continue;
            }
            if (group) {
                const __m256i s = _mm256_add_epi8(_mm256_add_epi8(r0, r1), _mm256_add_epi8(r2, r3));
                acc8[c] = _mm256_add_epi8(acc8[c], s);
            } else {
                const __m256i s01 = _mm256_add_epi16(_mm256_maddubs_epi16(ones8, r0), _mm256_maddubs_epi16(ones8, r1));
                const __m256i s23 = _mm256_add_epi16(_mm256_maddubs_epi16(ones8, r2), _mm256_maddubs_epi16(ones8, r3));
                acc16[c] = _mm256_add_epi16(acc16[c], _mm256_add_epi16(s01, s23));
            }
        }
        if (stage != 2 || short_row)
            continue;
        if (group && ++in8 == group) {
            for (int c = 0; c < NC; c++) {
                acc16[c] = _mm256_add_epi16(acc16[c], _mm256_maddubs_epi16(ones8, acc8[c]));
                acc8[c] = _mm256_setzero_si256();
            }
            in8 = 0;
        }
        if ((!group || in8 == 0) && ++in16 == flush) {
            for (int c = 0; c < NC; c++) {
                acc32[c] = _mm256_add_epi32(acc32[c], _mm256_madd_epi16(acc16[c], ones16));
                acc16[c] = _mm256_setzero_si256();
            }
            in16 = 0;
        }
    }
    if (stage != 2)
        return;
    const int32_t pad = tail ? 4 * (32 - tail) * (int32_t)(int8_t)_mm256_extract_epi8(lutv, 0) : 0;
    __m256i t[4];
    for (int c = 0; c < NC; c++) {
        if (short_row) {
            t[c] = _mm256_madd_epi16(_mm256_maddubs_epi16(ones8, acc8[c]), ones16);
            continue;
        }
        const __m256i t16 = _mm256_add_epi16(acc16[c], _mm256_maddubs_epi16(ones8, acc8[c]));
        t[c] = _mm256_add_epi32(acc32[c], _mm256_madd_epi16(t16, ones16));
    }
    if (NC == 4) {
        /* four lane sums at once: two rounds of pairwise adds, then fold halves */
        const __m256i h = _mm256_hadd_epi32(_mm256_hadd_epi32(t[0], t[1]), _mm256_hadd_epi32(t[2], t[3]));
        const __m128i s = _mm_add_epi32(_mm256_castsi256_si128(h), _mm256_extracti128_si256(h, 1));
        _mm_storeu_si128((__m128i *)res, _mm_sub_epi32(s, _mm_set1_epi32(pad)));
    } else {
        for (int c = 0; c < NC; c++)
            res[c] = hsum_epi32(t[c]) - pad;
    }
}

#define LUT16_AVX2_VARIANT(SCHEME, STAGE)                                                    \
    AVX2_FN static void lut16_avx2_s##SCHEME##_t##STAGE(                                     \
        const uint8_t *A, ssize lda, ssize a_len, const uint8_t *W, ssize ldw, ssize w_len,  \
        const int8_t *lut, int32_t *out, ssize m0, ssize m1, ssize K, ssize N, int group,    \
        int flush)                                                                           \
    {                                                                                        \
        const __m256i lutv = _mm256_broadcastsi128_si256(_mm_loadu_si128((const __m128i *)lut)); \
        const ssize nfull = N / 4, rem = N % 4, nvec = nfull / 32;                           \
        const int tail = (int)(nfull - 32 * nvec);                                           \
        const __m256i keep = _mm256_cmpgt_epi8(                                              \
            _mm256_set1_epi8((char)tail),                                                    \
            _mm256_setr_epi8(0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17,   \
                             18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31));       \
        const int rotated = (SCHEME) >= 2;                                                   \
        const ssize over = 32 * nvec + 32;                                                   \
        const int short_row = group > 0 && nvec + (tail ? 1 : 0) <= group;                   \
        int32_t res[4] = {0, 0, 0, 0};                                                       \
        for (ssize m = m0; m < m1; m++) {                                                    \
            const uint8_t *a = A + m * lda;                                                  \
            const int a_safe = m * lda + over <= a_len;                                      \
            ssize k = 0;                                                                     \
            for (; k + 4 <= K; k += 4) {                                                     \
                const int w_safe = (k + 3) * ldw + over <= w_len;                            \
                if (short_row)                                                               \
                    lut16_tile(SCHEME, STAGE, 4, group, 1, a, W + k * ldw, ldw, nvec, tail,  \
                               keep, a_safe, w_safe, flush, lutv, res);                      \
                else                                                                         \
                    lut16_tile(SCHEME, STAGE, 4, group, 0, a, W + k * ldw, ldw, nvec, tail,  \
                               keep, a_safe, w_safe, flush, lutv, res);                      \
                if (STAGE == 2)                                                              \
                    for (int c = 0; c < 4; c++)                                              \
                        out[m * K + k + c] =                                                 \
                            res[c] + (rem ? lut16_tail(a, W + (k + c) * ldw, nfull, nfull,   \
                                                       rem, lut, rotated) : 0);              \
            }                                                                                \
            for (; k < K; k++) {                                                             \
                const int w_safe = k * ldw + over <= w_len;                                  \
                lut16_tile(SCHEME, STAGE, 1, group, 0, a, W + k * ldw, ldw, nvec, tail, keep, \
                           a_safe, w_safe, flush, lutv, res);                                \
                if (STAGE == 2)                                                              \
                    out[m * K + k] = res[0] + (rem ? lut16_tail(a, W + k * ldw, nfull, nfull, \
                                                                rem, lut, rotated) : 0);     \
            }                                                                                \
        }                                                                                    \
    }

LUT16_AVX2_VARIANT(0, 0)
LUT16_AVX2_VARIANT(0, 1)
LUT16_AVX2_VARIANT(0, 2)
LUT16_AVX2_VARIANT(1, 0)
LUT16_AVX2_VARIANT(1, 1)
LUT16_AVX2_VARIANT(1, 2)
LUT16_AVX2_VARIANT(2, 0)
LUT16_AVX2_VARIANT(2, 1)
LUT16_AVX2_VARIANT(2, 2)
LUT16_AVX2_VARIANT(3, 0)
LUT16_AVX2_VARIANT(3, 1)
LUT16_AVX2_VARIANT(3, 2)

typedef void (*lut16_avx2_fn)(const uint8_t *, ssize, ssize, const uint8_t *, ssize, ssize,
                              const int8_t *, int32_t *, ssize, ssize, ssize, ssize, int, int);

static const lut16_avx2_fn lut16_avx2_table[4][3] = {
    {lut16_avx2_s0_t0, lut16_avx2_s0_t1, lut16_avx2_s0_t2},
    {lut16_avx2_s1_t0, lut16_avx2_s1_t1, lut16_avx2_s1_t2},
    {lut16_avx2_s2_t0, lut16_avx2_s2_t1, lut16_avx2_s2_t2},
    {lut16_avx2_s3_t0, lut16_avx2_s3_t1, lut16_avx2_s3_t2},
};
#endif /* HAVE_X86 */

static int have_avx2(void)
{
#if HAVE_X86 && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") ? 1 : 0;
#else
    return 0;
#endif
}

/* ------------------------------------------------------------------------ */
/* Python bindings. Buffers must be C-contiguous; shapes are validated on   */
/* the Python side, sizes are re-checked here before touching memory.       */

static int need(Py_buffer *b, Py_ssize_t bytes, const char *name)
{
    if (b->len < bytes) {
        PyErr_Format(PyExc_ValueError, "%s buffer holds %zd bytes, need %zd", name, b->len, bytes);
        return 0;
    }
    return 1;
}

static PyObject *py_cpu_has_avx2(PyObject *self, PyObject *args)
{
    return PyBool_FromLong(have_avx2());
}

static PyObject *py_lut_scalar(PyObject *self, PyObject *args)
{
    Py_buffer A, W, L, O;
    ssize lda, ldw, m0, m1, K, N;
    int bits, rotated, dtype;
    if (!PyArg_ParseTuple(args, "y*ny*ny*w*nnnniii", &A, &lda, &W, &ldw, &L, &O, &m0, &m1, &K,
                          &N, &bits, &rotated, &dtype))
        return NULL;
    PyObject *ret = NULL;
    static const int esize[3] = {1, 4, 8};
    if (dtype < 0 || dtype > 2 || (bits != 2 && bits != 3 && bits != 4)) {
        PyErr_SetString(PyExc_ValueError, "bad dtype or bitwidth");
        goto done;
    }
    if (!need(&A, m1 * lda, "activation") || !need(&W, K * ldw, "weight") ||
        !need(&L, ((ssize)1 << (2 * bits)) * esize[dtype], "lut") ||
        !need(&O, m1 * K * (dtype == 2 ? 8 : 4), "output"))
        goto done;
    Py_BEGIN_ALLOW_THREADS
    if (dtype == 0)
        lut_scalar_i8(A.buf, lda, W.buf, ldw, L.buf, O.buf, m0, m1, K, N, bits, rotated);
    else if (dtype == 1)
        lut_scalar_i32(A.buf, lda, W.buf, ldw, L.buf, O.buf, m0, m1, K, N, bits, rotated);
    else
        lut_scalar_f64(A.buf, lda, W.buf, ldw, L.buf, O.buf, m0, m1, K, N, bits, rotated);
    Py_END_ALLOW_THREADS
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&L);
    PyBuffer_Release(&O);
    return ret;
}

static PyObject *py_lut16_staged(PyObject *self, PyObject *args)
{
    Py_buffer A, W, L, O;
    ssize lda, ldw, m0, m1, K, N;
    int scheme, stage, vector, group, flush;
    if (!PyArg_ParseTuple(args, "y*ny*ny*w*nnnniiiii", &A, &lda, &W, &ldw, &L, &O, &m0, &m1,
                          &K, &N, &scheme, &stage, &vector, &group, &flush))
        return NULL;
    PyObject *ret = NULL;
    if (scheme < 0 || scheme > 3 || stage < 0 || stage > 2 || group < 0 || group > 31 || flush < 1) {
        PyErr_SetString(PyExc_ValueError, "bad scheme, stage or accumulation cadence");
        goto done;
    }
    if (!need(&A, m1 * lda, "activation") || !need(&W, K * ldw, "weight") ||
        !need(&L, 16, "lut") || !need(&O, m1 * K * 4, "output") ||
        !need(&A, m1 * lda > 0 ? (m1 - 1) * lda + (N + 3) / 4 : 0, "activation") ||
        !need(&W, K > 0 ? (K - 1) * ldw + (N + 3) / 4 : 0, "weight"))
        goto done;
    if (vector) {
#if HAVE_X86
        if (!have_avx2()) {
            PyErr_SetString(PyExc_RuntimeError, "vector path requested but AVX2 is unavailable");
            goto done;
        }
        lut16_avx2_fn fn = lut16_avx2_table[scheme][stage];
        Py_BEGIN_ALLOW_THREADS
        fn(A.buf, lda, A.len, W.buf, ldw, W.len, L.buf, O.buf, m0, m1, K, N, group, flush);
        Py_END_ALLOW_THREADS
#else
        PyErr_SetString(PyExc_RuntimeError, "vector path not compiled for this architecture");
        goto done;
#endif
    } else {
        Py_BEGIN_ALLOW_THREADS
        lut16_scalar_staged(A.buf, lda, W.buf, ldw, L.buf, O.buf, m0, m1, K, N, scheme >= 2, stage);
        Py_END_ALLOW_THREADS
    }
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&L);
    PyBuffer_Release(&O);
    return ret;
}

static PyObject *py_lut65k(PyObject *self, PyObject *args)
{
    Py_buffer A, W, L, P, O;
    ssize lda, ldw, m0, m1, K, N;
    int pad_ok, dtype;
    if (!PyArg_ParseTuple(args, "y*ny*ny*y*w*nnnnii", &A, &lda, &W, &ldw, &L, &P, &O, &m0, &m1,
                          &K, &N, &pad_ok, &dtype))
        return NULL;
    PyObject *ret = NULL;
    static const int esize[3] = {1, 4, 8};
    if (dtype < 0 || dtype > 2) {
        PyErr_SetString(PyExc_ValueError, "bad dtype");
        goto done;
    }
    if (!need(&A, m1 * lda, "activation") || !need(&W, K * ldw, "weight") ||
        !need(&L, 65536 * esize[dtype], "lut") || !need(&P, 16 * esize[dtype], "pair table") ||
        !need(&O, m1 * K * (dtype == 2 ? 8 : 4), "output"))
        goto done;
    Py_BEGIN_ALLOW_THREADS
    if (dtype == 0)
        lut65k_i8(A.buf, lda, W.buf, ldw, L.buf, P.buf, O.buf, m0, m1, K, N, pad_ok);
    else if (dtype == 1)
        lut65k_i32(A.buf, lda, W.buf, ldw, L.buf, P.buf, O.buf, m0, m1, K, N, pad_ok);
    else
        lut65k_f64(A.buf, lda, W.buf, ldw, L.buf, P.buf, O.buf, m0, m1, K, N, pad_ok);
    Py_END_ALLOW_THREADS
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&L);
    PyBuffer_Release(&P);
    PyBuffer_Release(&O);
    return ret;
}

static PyObject *py_lut65k_staged(PyObject *self, PyObject *args)
{
    Py_buffer A, W, L, O;
    ssize lda, ldw, m0, m1, K, N;
    int stage;
    if (!PyArg_ParseTuple(args, "y*ny*ny*w*nnnni", &A, &lda, &W, &ldw, &L, &O, &m0, &m1, &K,
                          &N, &stage))
        return NULL;
    PyObject *ret = NULL;
    if (stage < 0 || stage > 2) {
        PyErr_SetString(PyExc_ValueError, "bad stage");
        goto done;
    }
    if (!need(&A, m1 * lda, "activation") || !need(&W, K * ldw, "weight") ||
        !need(&L, 65536, "lut") || !need(&O, m1 * K * 4, "output"))
        goto done;
    Py_BEGIN_ALLOW_THREADS
    lut65k_staged(A.buf, lda, W.buf, ldw, L.buf, O.buf, m0, m1, K, N, stage);
    Py_END_ALLOW_THREADS
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&L);
    PyBuffer_Release(&O);
    return ret;
}

static PyObject *py_gemm_i8(PyObject *self, PyObject *args)
{
    Py_buffer A, W, O;
    ssize m0, m1, K, N;
    int vector;
    if (!PyArg_ParseTuple(args, "y*y*w*nnnni", &A, &W, &O, &m0, &m1, &K, &N, &vector))
        return NULL;
    PyObject *ret = NULL;
    if (!need(&A, m1 * N, "activation") || !need(&W, K * N, "weight") ||
        !need(&O, m1 * K * 4, "output"))
        goto done;
#if HAVE_X86
    if (vector && !have_avx2()) {
        PyErr_SetString(PyExc_RuntimeError, "vector path requested but AVX2 is unavailable");
        goto done;
    }
#else
    vector = 0;
#endif
    Py_BEGIN_ALLOW_THREADS
#if HAVE_X86
    if (vector)
        gemm_i8_avx2(A.buf, W.buf, O.buf, m0, m1, K, N);
    else
#endif
        gemm_i8_scalar(A.buf, W.buf, O.buf, m0, m1, K, N);
    Py_END_ALLOW_THREADS
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&O);
    return ret;
}

static PyObject *py_gemm_f32(PyObject *self, PyObject *args)
{
    Py_buffer A, W, O;
    ssize m0, m1, K, N;
    if (!PyArg_ParseTuple(args, "y*y*w*nnnn", &A, &W, &O, &m0, &m1, &K, &N))
        return NULL;
    PyObject *ret = NULL;
    if (!need(&A, m1 * N * 4, "activation") || !need(&W, K * N * 4, "weight") ||
        !need(&O, m1 * K * 4, "output"))
        goto done;
    Py_BEGIN_ALLOW_THREADS
    gemm_f32_scalar(A.buf, W.buf, O.buf, m0, m1, K, N);
    Py_END_ALLOW_THREADS
    ret = Py_None;
    Py_INCREF(ret);
done:
    PyBuffer_Release(&A);
    PyBuffer_Release(&W);
    PyBuffer_Release(&O);
    return ret;
}

static PyMethodDef methods[] = {
    {"cpu_has_avx2", py_cpu_has_avx2, METH_NOARGS, "True when the CPU supports AVX2."},
    {"lut_scalar", py_lut_scalar, METH_VARARGS, "Scalar table-lookup GEMM (2/3/4-bit)."},
    {"lut16_staged", py_lut16_staged, METH_VARARGS, "2-bit LUT-16 GEMM, vector or scalar, optionally truncated to a pipeline stage."},
    {"lut65k", py_lut65k, METH_VARARGS, "LUT-65k GEMM."},
    {"lut65k_staged", py_lut65k_staged, METH_VARARGS, "Instrumented int8 LUT-65k GEMM truncated to a pipeline stage."},
    {"gemm_i8", py_gemm_i8, METH_VARARGS, "Widening 8-bit GEMM baseline."},
    {"gemm_f32", py_gemm_f32, METH_VARARGS, "Scalar FP32 GEMM baseline."},
    {NULL, NULL, 0, NULL},
};

static struct PyModuleDef moduledef = {PyModuleDef_HEAD_INIT, "_native", NULL, -1, methods};

PyMODINIT_FUNC PyInit__native(void) { return PyModule_Create(&moduledef); }
