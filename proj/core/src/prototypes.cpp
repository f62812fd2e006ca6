#include "epseg/prototypes.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace epseg {

namespace {

double sqdist(const Tensor& f, int a, int b) {
    const int d = f.cols();
    const double* pa = f.data.data() + static_cast<std::size_t>(a) * d;
    const double* pb = f.data.data() + static_cast<std::size_t>(b) * d;
    double s = 0.0;
    for (int t = 0; t < d; ++t) {
        const double diff = pa[t] - pb[t];
        s += diff * diff;
    }
    return s;
}

// seed rows for one class: FPS from the point farthest from the centroid,
// cycling through the points once fewer than n_p are available
std::vector<int> fps_seeds(const Tensor& f, const std::vector<int>& rows, int n_p) {
    const int d = f.cols();
    std::vector<double> centroid(d, 0.0);
    for (int r : rows)
        for (int t = 0; t < d; ++t) centroid[t] += f.data[static_cast<std::size_t>(r) * d + t];
    for (double& v : centroid) v /= static_cast<double>(rows.size());

    int start = rows[0];
    double best = -1.0;
    for (int r : rows) {
        double s = 0.0;
        for (int t = 0; t < d; ++t) {
            const double diff = f.data[static_cast<std::size_t>(r) * d + t] - centroid[t];
            s += diff * diff;
        }
        if (s > best) {
            best = s;
            start = r;
        }
    }

    std::vector<int> seeds = {start};
    std::vector<double> mind(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) mind[i] = sqdist(f, rows[i], start);
    const int distinct = std::min<int>(n_p, static_cast<int>(rows.size()));
    while (static_cast<int>(seeds.size()) < distinct) {
        int pick = -1;
        double far = -1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (mind[i] > far) {
                far = mind[i];
                pick = static_cast<int>(i);
            }
        }
        seeds.push_back(rows[pick]);
        for (std::size_t i = 0; i < rows.size(); ++i)
            mind[i] = std::min(mind[i], sqdist(f, rows[i], rows[pick]));
    }
    for (int i = distinct; i < n_p; ++i) seeds.push_back(rows[i % rows.size()]);
    return seeds;
}

}  // namespace

MultiPrototype multi_prototype_sample(Tape& t, Var support_features,
                                      const std::vector<int>& support_labels, int n_classes,
                                      int n_p) {
    const Tensor& f = t.val(support_features);
    if (static_cast<int>(support_labels.size()) != f.rows())
        throw std::invalid_argument("multi_prototype_sample: label count != feature rows");
    if (n_p < 1) throw std::invalid_argument("multi_prototype_sample: n_p must be >= 1");

    MultiPrototype mp;
    mp.n_p = n_p;
    mp.assign.assign(support_labels.size(), -1);
    std::vector<int> fallback(static_cast<std::size_t>(n_classes) * n_p);

    for (int c = 0; c < n_classes; ++c) {
        std::vector<int> rows;
        for (std::size_t i = 0; i < support_labels.size(); ++i)
            if (support_labels[i] == c) rows.push_back(static_cast<int>(i));
        if (rows.empty())
            throw std::invalid_argument("multi_prototype_sample: class " + std::to_string(c) +
                                        " has no support points");
        std::vector<int> seeds = fps_seeds(f, rows, n_p);
        for (int s = 0; s < n_p; ++s) {
            fallback[static_cast<std::size_t>(c) * n_p + s] = seeds[s];
            mp.labels.push_back(c);
        }
        for (int r : rows) {
            int best_s = 0;
            double best_d = sqdist(f, r, seeds[0]);
            for (int s = 1; s < n_p; ++s) {
                const double dd = sqdist(f, r, seeds[s]);
                if (dd < best_d) {
                    best_d = dd;
                    best_s = s;
                }
            }
            mp.assign[r] = c * n_p + best_s;
        }
    }
    mp.features = t.group_mean_rows(support_features, mp.assign, n_classes * n_p, fallback);
    return mp;
}

Var class_average(Tape& t, Var features, const std::vector<int>& labels, int c) {
    std::vector<int> mask(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] == c ? 1 : 0;
    return t.masked_mean_rows(features, mask);
}

}  // namespace epseg
