#pragma once

#include "spectt/error.hpp"
#include "spectt/dense.hpp"
#include "spectt/householder.hpp"
#include "spectt/spectral.hpp"
#include "spectt/svdp.hpp"
#include "spectt/tensor_train.hpp"
#include "spectt/sttp.hpp"
#include "spectt/planner.hpp"
#include "spectt/apply.hpp"
#include "spectt/autodiff.hpp"
#include "spectt/fit.hpp"
#include "spectt/io.hpp"
