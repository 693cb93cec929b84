#pragma once

#include "pairrank/baselines.hpp"
#include "pairrank/dataset.hpp"
#include "pairrank/harness.hpp"
#include "pairrank/io.hpp"
#include "pairrank/metrics.hpp"
#include "pairrank/pairs.hpp"
#include "pairrank/ranksvm.hpp"
#include "pairrank/synth.hpp"
#include "pairrank/types.hpp"
