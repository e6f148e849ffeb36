#pragma once

#include "nlar/error.hpp"
#include "nlar/rng.hpp"
#include "nlar/model.hpp"
#include "nlar/companion.hpp"
#include "nlar/envelope.hpp"
#include "nlar/drift.hpp"
#include "nlar/classify.hpp"
#include "nlar/simulate.hpp"
#include "nlar/config.hpp"
