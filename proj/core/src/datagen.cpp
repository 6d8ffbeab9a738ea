#include "zorl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zorl::datagen {

Dataset synthetic_two_class(std::size_t n, std::size_t d, RngStream& rng) {
    if (n == 0 || d == 0) throw std::invalid_argument("synthetic_two_class: n and d must be positive");
    Vector w = gaussian_vector(rng, d);
    const double wn = norms(w).l2;
    for (auto& v : w) v /= wn;

    Dataset data;
    data.name = "synthetic";
    data.dim = d;
    for (std::size_t i = 0; i < n; ++i) {
        Vector x = gaussian_vector(rng, d);
        // Sparsify so the LIBSVM carrier actually exercises index gaps.
        for (auto& v : x) {
            if (std::abs(v) < 0.3) v = 0.0;
        }
        const double margin = dot(w, x);
        const int label = margin >= 0.0 ? 1 : -1;
        // ~10% label noise keeps the loss landscape non-trivial.
        const int flipped = rng.next_uniform() < 0.1 ? -label : label;
        data.features.push_back(std::move(x));
        data.labels.push_back(flipped);
    }
    // The planted separator never produces a single-class sample at n >= 2,
    // but guard tiny draws anyway.
    const bool has_pos = std::any_of(data.labels.begin(), data.labels.end(), [](int l) { return l > 0; });
    const bool has_neg = std::any_of(data.labels.begin(), data.labels.end(), [](int l) { return l < 0; });
    if (!has_pos) data.labels.front() = 1;
    if (!has_neg) data.labels.back() = -1;
    return data;
}

ImageSet synthetic_images(std::size_t n, std::size_t rows, std::size_t cols, std::size_t classes,
                          RngStream& rng) {
    if (n == 0 || rows < 3 || cols < 3) throw std::invalid_argument("synthetic_images: set too small");
    if (classes < 2 || classes > rows * cols)
        throw std::invalid_argument("synthetic_images: class count out of range");

    ImageSet set;
    set.rows = rows;
    set.cols = cols;
    const std::size_t pixels = rows * cols;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % classes; // balanced classes
        // Class anchor: a 2x2 bright block whose position walks across the image.
        const std::size_t r0 = (label * 2) % (rows - 1);
        const std::size_t c0 = ((label * 2) / (rows - 1) * 2) % (cols - 1);
        Vector img(pixels);
        for (std::size_t p = 0; p < pixels; ++p) img[p] = 0.1 * rng.next_uniform();
        for (std::size_t dr = 0; dr < 2; ++dr) {
            for (std::size_t dc = 0; dc < 2; ++dc) {
                img[(r0 + dr) * cols + (c0 + dc)] = 0.8 + 0.2 * rng.next_uniform();
            }
        }
        set.images.push_back(std::move(img));
        set.labels.push_back(static_cast<int>(label));
    }
    return set;
}

} // namespace zorl::datagen
