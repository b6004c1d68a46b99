#pragma once

#include "d2f/autodiff.hpp"
#include "d2f/checkpoint.hpp"
#include "d2f/config.hpp"
#include "d2f/diagnostics.hpp"
#include "d2f/error.hpp"
#include "d2f/features.hpp"
#include "d2f/fusion.hpp"
#include "d2f/gradcheck.hpp"
#include "d2f/image.hpp"
#include "d2f/image_io.hpp"
#include "d2f/metrics.hpp"
#include "d2f/ops.hpp"
#include "d2f/random.hpp"
#include "d2f/spatial_attention.hpp"
#include "d2f/spectral_attention.hpp"
#include "d2f/superposition.hpp"
#include "d2f/tensor.hpp"
#include "d2f/tensor_io.hpp"
