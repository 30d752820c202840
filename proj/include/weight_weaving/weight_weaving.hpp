#pragma once

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "error.hpp"
#include "half.hpp"
#include "merge.hpp"
#include "rng.hpp"
#include "task_vectors.hpp"
#include "tensor.hpp"
#include "weaving.hpp"
