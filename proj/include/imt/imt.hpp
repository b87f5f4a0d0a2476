#pragma once

// Everything at once.

#include "imt/bd_rate.hpp"
#include "imt/bitstream.hpp"
#include "imt/checkpoint.hpp"
#include "imt/codec.hpp"
#include "imt/config.hpp"
#include "imt/grad_check.hpp"
#include "imt/metrics.hpp"
#include "imt/rd.hpp"
#include "imt/rd_sweep.hpp"
#include "imt/synth.hpp"
#include "imt/train.hpp"
#include "imt/video_io.hpp"
