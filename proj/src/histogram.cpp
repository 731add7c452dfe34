#include "v2v/histogram.hpp"

#include <algorithm>
#include <numeric>

namespace v2v {

Tensor match_histogram(const Tensor& source, const Tensor& reference) {
    require_same_shape(source, reference, "match_histogram");
    Tensor out = source;
    const std::size_t n = source.plane_size();
    std::vector<std::size_t> order(n);
    std::vector<double> ref_sorted(n);
    for (int c = 0; c < source.channels(); ++c) {
        auto src = source.plane(c);
        auto ref = reference.plane(c);
        auto dst = out.plane(c);
        std::copy(ref.begin(), ref.end(), ref_sorted.begin());
        std::sort(ref_sorted.begin(), ref_sorted.end());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return src[a] < src[b]; });
        std::size_t lo = 0;
        while (lo < n) {
            std::size_t hi = lo + 1;
            while (hi < n && src[order[hi]] == src[order[lo]]) ++hi;
            const double value = ref_sorted[(lo + hi - 1) / 2];
            for (std::size_t k = lo; k < hi; ++k) dst[order[k]] = value;
            lo = hi;
        }
    }
    return out;
}

std::vector<int> channel_histogram(const Tensor& image, int c, int bins) {
    std::vector<int> hist(bins, 0);
    for (double v : image.plane(c)) {
        const int b = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
        ++hist[b];
    }
    return hist;
}

}  // namespace v2v
