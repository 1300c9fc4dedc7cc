#pragma once

// Music-conditioned dance skeleton synthesis: umbrella header.

#include "choreo/audio.hpp"
#include "choreo/checkpoint.hpp"
#include "choreo/crossmodal.hpp"
#include "choreo/discriminator.hpp"
#include "choreo/error.hpp"
#include "choreo/fixtures.hpp"
#include "choreo/generator.hpp"
#include "choreo/graph.hpp"
#include "choreo/losses.hpp"
#include "choreo/nn.hpp"
#include "choreo/render.hpp"
#include "choreo/skeleton.hpp"
#include "choreo/stgcn.hpp"
#include "choreo/tensor.hpp"
#include "choreo/train.hpp"
