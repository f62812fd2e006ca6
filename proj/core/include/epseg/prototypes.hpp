#pragma once

#include <vector>

#include "epseg/tape.hpp"

namespace epseg {

// Multi-prototype bank: n_p prototypes per episode class, background first.
// features row c*n_p+s is the mean of the class-c points assigned to seed s;
// an empty cluster inherits its seed's feature.
struct MultiPrototype {
    Var features;             // ((N+1)*n_p) x D
    std::vector<int> labels;  // class id per prototype row
    std::vector<int> assign;  // support row -> prototype row
    int n_p = 0;
};

// Feature-space farthest-point seeding + nearest-seed clustering + cluster
// means, per class. FPS starts from the point farthest from the class
// centroid; if a class has fewer than n_p points the seed list repeats points.
MultiPrototype multi_prototype_sample(Tape& t, Var support_features,
                                      const std::vector<int>& support_labels, int n_classes,
                                      int n_p);

// Mean of the rows with label c; rejects an empty selection.
Var class_average(Tape& t, Var features, const std::vector<int>& labels, int c);

}  // namespace epseg
