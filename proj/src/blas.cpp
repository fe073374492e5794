#include "tryon/blas.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#if defined(__unix__) || defined(__APPLE__)
#include <dlfcn.h>
#define TRYON_HAVE_DLOPEN 1
#endif

namespace tryon::blas {
namespace {

// CBLAS constants (avoid requiring the header at build time).
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*, int,
                          const float*, int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*, int,
                          const double*, int, double, double*, int);

struct Backend {
    sgemm_fn sgemm = nullptr;
    dgemm_fn dgemm = nullptr;
    std::string name = "fallback";
};

// OpenBLAS picks its kernel from cpuid at load time; on VMs with a masked
// cpu model string it can fall back to a slow generic kernel. Forcing the
// core type through the environment before the library loads fixes that,
// which is why the library is loaded lazily via dlopen instead of linked.
Backend load_backend() {
    Backend b;
#ifdef TRYON_HAVE_DLOPEN
#if defined(__x86_64__)
    if (!getenv("OPENBLAS_CORETYPE")) {
        if (__builtin_cpu_supports("avx512bf16"))
            setenv("OPENBLAS_CORETYPE", "COOPERLAKE", 0);
        else if (__builtin_cpu_supports("avx512f"))
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    }
#endif
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (h) {
        b.sgemm = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
        b.dgemm = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
        if (b.sgemm && b.dgemm) {
            b.name = "openblas";
            if (auto corename = reinterpret_cast<const char* (*)()>(dlsym(h, "openblas_get_corename")))
                b.name += std::string(":") + corename();
            return b;
        }
        b.sgemm = nullptr;
        b.dgemm = nullptr;
    }
#endif
    return b;
}

const Backend& backend() {
    static Backend b = load_backend();
    return b;
}

template <typename T>
void gemm_fallback(bool ta, bool tb, int64_t m, int64_t n, int64_t k, T alpha,
                   const T* a, int64_t lda, const T* bm, int64_t ldb, T beta, T* c,
                   int64_t ldc) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = 0;
            for (int64_t p = 0; p < k; ++p) {
                T av = ta ? a[p * lda + i] : a[i * lda + p];
                T bv = tb ? bm[j * ldb + p] : bm[p * ldb + j];
                acc += av * bv;
            }
            c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
        }
    }
}

}  // namespace

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta,
          float* c, int64_t ldc) {
    if (auto f = backend().sgemm) {
        f(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, (int)m, (int)n,
          (int)k, alpha, a, (int)lda, b, (int)ldb, beta, c, (int)ldc);
        return;
    }
    gemm_fallback(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
          double* c, int64_t ldc) {
    if (auto f = backend().dgemm) {
        f(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, (int)m, (int)n,
          (int)k, alpha, a, (int)lda, b, (int)ldb, beta, c, (int)ldc);
        return;
    }
    gemm_fallback(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

const char* backend_name() {
    static std::string n = backend().name;
    return n.c_str();
}

}  // namespace tryon::blas
