#ifndef RMOE_RMOE_HPP
#define RMOE_RMOE_HPP

#include "rmoe/types.hpp"
#include "rmoe/model.hpp"
#include "rmoe/prox.hpp"
#include "rmoe/multilogit.hpp"
#include "rmoe/gating.hpp"
#include "rmoe/experts.hpp"
#include "rmoe/random.hpp"
#include "rmoe/em.hpp"
#include "rmoe/selection.hpp"
#include "rmoe/evaluation.hpp"
#include "rmoe/simgen.hpp"
#include "rmoe/io.hpp"

#endif
