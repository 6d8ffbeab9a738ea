#pragma once

#include "zorl/numerics.hpp"
#include "zorl/objectives.hpp"

namespace zorl::datagen {

/// Two-class dataset with a planted linear separator and sparse-ish features,
/// suitable for the non-convex least-squares task. Labels are -1/+1.
Dataset synthetic_two_class(std::size_t n, std::size_t d, RngStream& rng);

/// Small labeled image set: each class is a bright block at a class-specific
/// position plus pixel noise. Pixels lie in [0,1].
ImageSet synthetic_images(std::size_t n, std::size_t rows, std::size_t cols, std::size_t classes,
                          RngStream& rng);

} // namespace zorl::datagen
