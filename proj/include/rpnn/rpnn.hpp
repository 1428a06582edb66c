#pragma once

// Umbrella header.

#include "rpnn/error.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/text.hpp"
#include "rpnn/tensor.hpp"
#include "rpnn/imaging.hpp"
#include "rpnn/loss.hpp"
#include "rpnn/network.hpp"
#include "rpnn/cube.hpp"
#include "rpnn/rolling.hpp"
#include "rpnn/metrics.hpp"
#include "rpnn/synth.hpp"
#include "rpnn/config.hpp"
#include "rpnn/cli.hpp"
