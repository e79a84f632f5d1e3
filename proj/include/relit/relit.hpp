#pragma once

#include "relit/config.hpp"
#include "relit/ensemble.hpp"
#include "relit/error.hpp"
#include "relit/image.hpp"
#include "relit/losses.hpp"
#include "relit/mapio.hpp"
#include "relit/metrics.hpp"
#include "relit/parallel.hpp"
#include "relit/pipeline.hpp"
#include "relit/raster.hpp"
#include "relit/shade.hpp"
#include "relit/stabilize.hpp"
#include "relit/synth.hpp"
#include "relit/vec.hpp"
#include "relit/version.hpp"
