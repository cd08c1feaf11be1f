#ifndef PROXAL_PROXAL_HPP
#define PROXAL_PROXAL_HPP

#include "proxal/common.hpp"
#include "proxal/dataset.hpp"
#include "proxal/doubly_robust.hpp"
#include "proxal/evaluation.hpp"
#include "proxal/kernels.hpp"
#include "proxal/linalg.hpp"
#include "proxal/outcome_bridge.hpp"
#include "proxal/synthetic.hpp"
#include "proxal/toy_world.hpp"
#include "proxal/treatment_bridge.hpp"

#endif  // PROXAL_PROXAL_HPP
