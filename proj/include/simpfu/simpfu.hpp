#pragma once

#include "simpfu/adam.hpp"
#include "simpfu/augment.hpp"
#include "simpfu/bench.hpp"
#include "simpfu/dsp.hpp"
#include "simpfu/errors.hpp"
#include "simpfu/io.hpp"
#include "simpfu/kernels.hpp"
#include "simpfu/labels.hpp"
#include "simpfu/metrics.hpp"
#include "simpfu/model.hpp"
#include "simpfu/tape.hpp"
#include "simpfu/tensor.hpp"
#include "simpfu/train.hpp"
#include "simpfu/weights_io.hpp"

namespace simpfu {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace simpfu
