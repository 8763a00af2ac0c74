#pragma once

// Convenience header: pulls in the whole library.

#include "thermoproto/rng.hpp"
#include "thermoproto/error.hpp"
#include "thermoproto/thermal.hpp"
#include "thermoproto/subcategory.hpp"
#include "thermoproto/manifest.hpp"
#include "thermoproto/synth.hpp"
#include "thermoproto/density.hpp"
#include "thermoproto/prototype.hpp"
#include "thermoproto/embedding.hpp"
#include "thermoproto/pipeline.hpp"
#include "thermoproto/eval.hpp"
