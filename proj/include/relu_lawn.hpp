#pragma once

#include "relu_lawn/analysis.hpp"
#include "relu_lawn/data.hpp"
#include "relu_lawn/distribution.hpp"
#include "relu_lawn/errors.hpp"
#include "relu_lawn/fit.hpp"
#include "relu_lawn/gaussian_mixture.hpp"
#include "relu_lawn/geometry.hpp"
#include "relu_lawn/io.hpp"
#include "relu_lawn/network.hpp"
#include "relu_lawn/normal.hpp"
#include "relu_lawn/orthant.hpp"
#include "relu_lawn/parallel.hpp"
#include "relu_lawn/pattern.hpp"
#include "relu_lawn/support.hpp"
#include "relu_lawn/train.hpp"
