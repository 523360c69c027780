#pragma once

#include "mlconvgec/common/rng.hpp"
#include "mlconvgec/numcore/array.hpp"

namespace mlconvgec::oracle {

inline nc::Array random_array(nc::Shape shape, Rng& rng, double scale = 1.0) {
    nc::Array a(std::move(shape));
    for (auto& v : a.data()) v = rng.uniform(-scale, scale);
    return a;
}

/// Plain nested-loop width-3 convolution over a padded [(T+2)×c] sequence
/// with [o×3×c] filters.
inline nc::Array conv1d_reference(const nc::Array& seq, const nc::Array& filters) {
    const std::size_t steps = seq.dim(0) - 2, c = seq.dim(1), o = filters.dim(0);
    nc::Array out({steps, o});
    for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t f = 0; f < o; ++f) {
            double s = 0.0;
            for (std::size_t w = 0; w < 3; ++w)
                for (std::size_t ch = 0; ch < c; ++ch) s += filters[(f * 3 + w) * c + ch] * seq[(i + w) * c + ch];
            out[i * o + f] = s;
        }
    return out;
}

}  // namespace mlconvgec::oracle
