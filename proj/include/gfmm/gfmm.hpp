#ifndef GFMM_GFMM_HPP
#define GFMM_GFMM_HPP

#include "gfmm/common.hpp"
#include "gfmm/oracle.hpp"
#include "gfmm/io.hpp"
#include "gfmm/metric.hpp"
#include "gfmm/tree.hpp"
#include "gfmm/neighbors.hpp"
#include "gfmm/compress.hpp"
#include "gfmm/evaluate.hpp"

#endif  // GFMM_GFMM_HPP
