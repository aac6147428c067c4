#include "vollab/rng.hpp"

#include "vollab/simd.hpp"

namespace vollab {

void fill_normals(Xoshiro256pp& rng, double* out, std::size_t n) {
    // Draw uniforms into the output buffer, then invert in place.
    for (std::size_t i = 0; i < n; ++i) out[i] = rng.uniform01();
    simd::norminv_v(out, out, n);
}

}  // namespace vollab
