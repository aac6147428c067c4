#include <atomic>
#include <cstdlib>
#include <cstring>

#include "vollab/common.hpp"
#include "vollab/simd.hpp"

namespace vollab::simd {

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(__i386__)) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct Dispatch {
    std::atomic<const KernelTable*> table;
    std::atomic<Backend> backend;

    Dispatch() {
        Backend b = Backend::scalar;
        if (cpu_has_avx2() && detail::avx2_table() != nullptr) b = Backend::avx2;
        if (const char* env = std::getenv("VOLLAB_SIMD")) {
            if (std::strcmp(env, "scalar") == 0) b = Backend::scalar;
            if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2() && detail::avx2_table())
                b = Backend::avx2;
        }
        install(b);
    }

    void install(Backend b) {
        table.store(b == Backend::avx2 ? detail::avx2_table() : &detail::scalar_table);
        backend.store(b);
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

bool avx2_supported() { return cpu_has_avx2() && detail::avx2_table() != nullptr; }

Backend active_backend() { return dispatch().backend.load(); }

void set_backend(Backend b) {
    if (b == Backend::avx2 && !avx2_supported())
        throw NumericalError("avx2 backend requested but not supported on this CPU");
    dispatch().install(b);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels() { return *dispatch().table.load(); }

}  // namespace vollab::simd
