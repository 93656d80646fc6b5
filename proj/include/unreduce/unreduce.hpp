#pragma once

/**
 * @file
 * @brief Everything: Lie-group primitives, periodic grids, integration,
 * shooting and the three matching problems (SO(3), SE(3), planar curves).
 */

#include "unreduce/error.hpp"
#include "unreduce/lie.hpp"
#include "unreduce/periodic.hpp"
#include "unreduce/integrate.hpp"
#include "unreduce/shoot.hpp"
#include "unreduce/so3.hpp"
#include "unreduce/se3.hpp"
#include "unreduce/curves.hpp"
