#pragma once

#include "lidarup/checkpoint.hpp"
#include "lidarup/dataset.hpp"
#include "lidarup/diffusion.hpp"
#include "lidarup/errors.hpp"
#include "lidarup/eval.hpp"
#include "lidarup/grad_check.hpp"
#include "lidarup/io.hpp"
#include "lidarup/layers.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/net.hpp"
#include "lidarup/range_image.hpp"
#include "lidarup/rng.hpp"
#include "lidarup/run_config.hpp"
#include "lidarup/schedule.hpp"
#include "lidarup/synth.hpp"
#include "lidarup/tensor.hpp"
#include "lidarup/train.hpp"
