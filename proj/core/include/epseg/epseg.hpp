#pragma once

// Umbrella header for the full library.

#include "epseg/backbone.hpp"
#include "epseg/drpe.hpp"
#include "epseg/episode.hpp"
#include "epseg/gradcheck.hpp"
#include "epseg/harness.hpp"
#include "epseg/lgpe.hpp"
#include "epseg/losses.hpp"
#include "epseg/model.hpp"
#include "epseg/params.hpp"
#include "epseg/pointcloud.hpp"
#include "epseg/proera.hpp"
#include "epseg/prototypes.hpp"
#include "epseg/rng.hpp"
#include "epseg/tape.hpp"
#include "epseg/tensor.hpp"
