#pragma once

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "core.hpp"
#include "data.hpp"
#include "decode.hpp"
#include "errors.hpp"
#include "evalbench.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "train.hpp"
