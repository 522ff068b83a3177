#pragma once

#include "balmix/data.hpp"
#include "balmix/error.hpp"
#include "balmix/experiment.hpp"
#include "balmix/losses.hpp"
#include "balmix/metrics.hpp"
#include "balmix/mixing.hpp"
#include "balmix/model.hpp"
#include "balmix/persist.hpp"
#include "balmix/random.hpp"
#include "balmix/sampling.hpp"
